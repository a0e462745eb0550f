use super::ParamStore;

/// Tracks the best validation loss and its parameters. A loss only counts as
/// an improvement when strictly lower, so ties keep the earlier checkpoint.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    warmup: usize,
    best: f64,
    best_epoch: Option<usize>,
    best_params: Option<ParamStore>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, warmup: usize) -> Self {
        Self {
            patience,
            warmup,
            best: f64::INFINITY,
            best_epoch: None,
            best_params: None,
            since_best: 0,
        }
    }

    /// Records one evaluation; returns true when training should stop.
    pub fn observe(&mut self, epoch: usize, loss: f64, params: &ParamStore) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.best_params = Some(params.clone());
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        epoch + 1 >= self.warmup && self.since_best >= self.patience
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_params(&self) -> Option<&ParamStore> {
        self.best_params.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_keep_earlier_and_patience_stops() {
        let p = ParamStore::new();
        let mut es = EarlyStopping::new(2, 0);
        assert!(!es.observe(0, 1.0, &p));
        assert!(!es.observe(1, 1.0, &p));
        assert_eq!(es.best_epoch(), Some(0));
        assert!(es.observe(2, 1.5, &p));
    }
}
