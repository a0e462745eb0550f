use bwb_core::diffusion::{train_denoiser, ConditionVector, DenoiserConfig, DiffusionSample, DiffusionTrainConfig};
use bwb_core::geom::{FlightCondition, ParamBox};

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let width: usize = a[1].parse().unwrap();
    let blocks: usize = a[2].parse().unwrap();
    let steps: usize = a[3].parse().unwrap();
    let lr: f64 = a[4].parse().unwrap();
    let p = ParamBox::default().midpoint();
    let fc = FlightCondition::new(20.0, 0.3, 3.0, 4.0).unwrap();
    let d = DiffusionSample { params: p, condition: ConditionVector::new(&fc, 15.0) };
    let data = vec![d; 64];
    let cfg = DiffusionTrainConfig {
        model: DenoiserConfig { width, blocks, time_dim: 32, cond_dim: 32 },
        steps,
        epochs: 2000,
        lr,
        weight_decay: 0.0,
        batch_size: 64,
        seed: 1,
        ..DiffusionTrainConfig::default()
    };
    let t = std::time::Instant::now();
    let m = train_denoiser(&data, &cfg).unwrap();
    let l = &m.train_losses;
    let tail: f64 = l[l.len() - 50..].iter().sum::<f64>() / 50.0;
    let ev = m.eval_loss(&vec![data[0]; 4096], 7).unwrap();
    println!("w{width} b{blocks} T{steps} lr{lr}: first {:.3} tail50 {:.4} eval {:.4} ({:.0}s)", l[0], tail, ev, t.elapsed().as_secs_f64());
}
