//! End-to-end stages on a work directory: synthetic data, surrogate and
//! diffusion training, inversion, evaluation and the summary report.
//!
//! Layout under the work directory:
//!
//! ```text
//! data/train.csv  data/test.csv  data/fields/*.vtk
//! models/ld.ckpt  models/field.ckpt  models/cdm.ckpt  models/surrogate_report.json
//! results/{cdm,opt,hybrid}.jsonl
//! metrics/metrics.json  metrics/conditions.csv
//! report/summary.csv  report/candidates.csv
//! manifests/<command>.json
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffusion::{train_denoiser, CdmModel, ConditionVector, DenoiserConfig, DiffusionSample, DiffusionTrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_method, field_errors, mean_field_errors, param_ranges, EvalSetup, FieldErrors, MetricReport};
use crate::geom::{lhs_conditions, lhs_planforms, ParamBox, PlanformParams, SurfaceOptions};
use crate::invert::{condition_seed, run_batch, InverseCondition, InverseContext, InverseResult, Method, PgdConfig};
use crate::io::{
    load_checkpoint, read_cases, read_results, save_checkpoint, write_candidates_csv, write_cases, write_condition_rows,
    write_results, write_summary_csv, write_surface_fields, CaseRecord, CaseTable,
};
use crate::scale::{GeomScaler, StandardScaler};
use crate::surrogate::{
    train_field_surrogate, train_ld_surrogate, FieldCase, FieldSurrogate, FieldTrainConfig, FilmConfig, LdConfig,
    LdSample, LdSurrogate, LdTrainConfig, OracleConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Smoke,
    Desk,
    Full,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Smoke => "smoke",
            Profile::Desk => "desk",
            Profile::Full => "full",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Profile::Smoke),
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            _ => Err(Error::Argument(format!("unknown profile {s:?} (expected smoke, desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Train and test cases that also get a surface-field file.
    pub field_train: usize,
    pub field_test: usize,
    pub n_chord: usize,
    pub n_span: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertConfig {
    /// Candidates per condition for every method.
    pub k: usize,
    /// Test conditions inverted, taken from the head of the test split.
    pub conditions: usize,
    pub opt: PgdConfig,
    pub hybrid: PgdConfig,
    /// mRE threshold of the geometry recovery statistics.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub seed: u64,
    pub data: DataConfig,
    pub field: FieldTrainConfig,
    pub ld: LdTrainConfig,
    pub diffusion: DiffusionTrainConfig,
    pub invert: InvertConfig,
}

impl PipelineConfig {
    pub fn profile(profile: Profile, seed: u64) -> Self {
        let mut c = match profile {
            Profile::Smoke => Self {
                profile,
                seed,
                data: DataConfig {
                    n_train: 64,
                    n_test: 20,
                    field_train: 8,
                    field_test: 4,
                    n_chord: 6,
                    n_span: 4,
                },
                field: FieldTrainConfig {
                    model: FilmConfig {
                        width: 16,
                        modulated: 1,
                        plain: 1,
                        hyper_hidden: 8,
                        ..FilmConfig::default()
                    },
                    epochs: 5,
                    lr: 1e-3,
                    batch_cases: 4,
                    points_per_case: Some(32),
                    patience: 5,
                    warmup_epochs: 0,
                    ..FieldTrainConfig::default()
                },
                ld: LdTrainConfig {
                    model: LdConfig { hidden: 16, depth: 2 },
                    epochs: 20,
                    batch_size: 16,
                    patience: 20,
                    warmup_epochs: 0,
                    ..LdTrainConfig::default()
                },
                diffusion: DiffusionTrainConfig {
                    model: DenoiserConfig {
                        width: 32,
                        blocks: 1,
                        time_dim: 16,
                        cond_dim: 16,
                    },
                    steps: 50,
                    epochs: 10,
                    batch_size: 16,
                    lr: 1e-3,
                    ..DiffusionTrainConfig::default()
                },
                invert: InvertConfig {
                    k: 8,
                    conditions: 20,
                    opt: PgdConfig {
                        steps: 100,
                        seeds: 8,
                        ..PgdConfig::baseline()
                    },
                    hybrid: PgdConfig {
                        steps: 20,
                        seeds: 8,
                        ..PgdConfig::hybrid()
                    },
                    threshold: 0.2,
                },
            },
            Profile::Desk => Self {
                profile,
                seed,
                data: DataConfig {
                    n_train: 2000,
                    n_test: 200,
                    field_train: 256,
                    field_test: 32,
                    n_chord: 10,
                    n_span: 6,
                },
                field: FieldTrainConfig {
                    model: FilmConfig {
                        width: 64,
                        modulated: 2,
                        plain: 1,
                        hyper_hidden: 64,
                        ..FilmConfig::default()
                    },
                    epochs: 100,
                    lr: 2e-3,
                    batch_cases: 16,
                    patience: 30,
                    warmup_epochs: 10,
                    ..FieldTrainConfig::default()
                },
                ld: LdTrainConfig {
                    epochs: 300,
                    patience: 40,
                    ..LdTrainConfig::default()
                },
                diffusion: DiffusionTrainConfig {
                    model: DenoiserConfig {
                        width: 128,
                        blocks: 3,
                        time_dim: 64,
                        cond_dim: 64,
                    },
                    steps: 200,
                    epochs: 300,
                    lr: 1e-3,
                    ..DiffusionTrainConfig::default()
                },
                invert: InvertConfig {
                    k: 32,
                    conditions: 50,
                    opt: PgdConfig {
                        seeds: 32,
                        ..PgdConfig::baseline()
                    },
                    hybrid: PgdConfig {
                        seeds: 32,
                        ..PgdConfig::hybrid()
                    },
                    threshold: 0.2,
                },
            },
            Profile::Full => Self {
                profile,
                seed,
                data: DataConfig {
                    n_train: 9992,
                    n_test: 2498,
                    field_train: 9992,
                    field_test: 2498,
                    n_chord: 24,
                    n_span: 16,
                },
                field: FieldTrainConfig::default(),
                ld: LdTrainConfig::default(),
                diffusion: DiffusionTrainConfig::default(),
                invert: InvertConfig {
                    k: 100,
                    conditions: 2498,
                    opt: PgdConfig::baseline(),
                    hybrid: PgdConfig::hybrid(),
                    threshold: 0.2,
                },
            },
        };
        c.reseed();
        c
    }

    /// Propagates the master seed to every stage.
    pub fn reseed(&mut self) {
        self.field.seed = self.stage_seed("field");
        self.ld.seed = self.stage_seed("ld");
        self.diffusion.seed = self.stage_seed("diffusion");
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        let k = match stage {
            "train_planforms" => 1,
            "train_conditions" => 2,
            "test_planforms" => 3,
            "test_conditions" => 4,
            "field" => 5,
            "ld" => 6,
            "diffusion" => 7,
            "invert" => 8,
            _ => 0,
        };
        condition_seed(self.seed, k)
    }

    pub fn seeds(&self) -> std::collections::BTreeMap<String, u64> {
        [
            "train_planforms",
            "train_conditions",
            "test_planforms",
            "test_conditions",
            "field",
            "ld",
            "diffusion",
            "invert",
        ]
        .iter()
        .map(|s| (s.to_string(), self.stage_seed(s)))
        .chain(std::iter::once(("master".to_string(), self.seed)))
        .collect()
    }

    /// Applies a TOML override document. Tables mirror the configuration
    /// structure; the top-level shorthands `seed`, `T`, `K`, `lr` and `steps`
    /// set the master seed, diffusion steps, samples per condition, the PGD
    /// step size and the baseline PGD step count.
    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Argument(format!("config file: {e}")))?;
        let mut base = serde_json::to_value(&*self)?;
        let mut overrides = serde_json::to_value(&doc)?;
        let obj = overrides.as_object_mut().expect("toml table");
        let shorthand = |obj: &mut serde_json::Map<String, serde_json::Value>, key: &str| obj.remove(key);
        let seed = shorthand(obj, "seed");
        let t = shorthand(obj, "T");
        let k = shorthand(obj, "K");
        let lr = shorthand(obj, "lr");
        let steps = shorthand(obj, "steps");
        merge(&mut base, overrides)?;
        let mut next: PipelineConfig =
            serde_json::from_value(base).map_err(|e| Error::Argument(format!("config file: {e}")))?;
        let num = |v: &serde_json::Value, key: &str| {
            v.as_f64()
                .ok_or_else(|| Error::Argument(format!("config key {key} must be a number")))
        };
        let int = |v: &serde_json::Value, key: &str| {
            v.as_u64()
                .ok_or_else(|| Error::Argument(format!("config key {key} must be a non-negative integer")))
        };
        if let Some(v) = seed {
            next.seed = int(&v, "seed")?;
        }
        if let Some(v) = t {
            next.diffusion.steps = int(&v, "T")? as usize;
        }
        if let Some(v) = k {
            let k = int(&v, "K")? as usize;
            next.invert.k = k;
            next.invert.opt.seeds = k;
            next.invert.hybrid.seeds = k;
        }
        if let Some(v) = lr {
            let lr = num(&v, "lr")?;
            next.invert.opt.lr = lr;
            next.invert.hybrid.lr = lr;
        }
        if let Some(v) = steps {
            next.invert.opt.steps = int(&v, "steps")? as usize;
        }
        next.reseed();
        *self = next;
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) -> Result<()> {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v)?,
                    None => return Err(Error::Argument(format!("config file: unknown key {k:?}"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Paths of the work directory.
#[derive(Debug, Clone)]
pub struct WorkDir {
    pub root: PathBuf,
}

impl WorkDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn train_cases(&self) -> PathBuf {
        self.data().join("train.csv")
    }
    pub fn test_cases(&self) -> PathBuf {
        self.data().join("test.csv")
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn ld_checkpoint(&self) -> PathBuf {
        self.models().join("ld.ckpt")
    }
    pub fn field_checkpoint(&self) -> PathBuf {
        self.models().join("field.ckpt")
    }
    pub fn cdm_checkpoint(&self) -> PathBuf {
        self.models().join("cdm.ckpt")
    }
    pub fn results(&self, m: Method) -> PathBuf {
        self.root.join("results").join(format!("{m}.jsonl"))
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics").join("metrics.json")
    }
    pub fn condition_table(&self) -> PathBuf {
        self.root.join("metrics").join("conditions.csv")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("report").join("summary.csv")
    }
    pub fn manifest(&self, command: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{command}.json"))
    }
}

pub(crate) fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn ensure_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) => ensure_dir(d),
        None => Ok(()),
    }
}

/// Labels `n` LHS cases with the oracle and writes surface files for the first
/// `n_fields` of them.
fn make_split(
    name: &str,
    n: usize,
    n_fields: usize,
    planform_seed: u64,
    condition_seed: u64,
    data: &DataConfig,
    dir: &Path,
) -> Result<Vec<CaseRecord>> {
    let ps = lhs_planforms(&ParamBox::default(), n, planform_seed)?;
    let fcs = lhs_conditions(n, condition_seed)?;
    let oracle = OracleConfig::default();
    let opts = SurfaceOptions::new(data.n_chord, data.n_span);
    let mut out = Vec::with_capacity(n);
    for (i, (p, fc)) in ps.iter().zip(&fcs).enumerate() {
        let id = format!("{name}_{i:05}");
        let c = oracle.coefficients(p, fc)?;
        let field_file = if i < n_fields {
            let rel = format!("fields/{id}.vtk");
            let surface = oracle.evaluate(p, fc, &opts)?.surface;
            write_surface_fields(&dir.join(&rel), &surface, &id)?;
            Some(rel)
        } else {
            None
        };
        out.push(CaseRecord {
            case_id: id,
            params: *p,
            altitude_kft: fc.altitude_kft,
            mach: fc.mach,
            centerline_length: fc.centerline_length,
            alpha_deg: fc.alpha_deg,
            cl: c.cl,
            cd: c.cd,
            cm: c.cm,
            ld: c.cl / c.cd,
            field_file,
            out_of_box: false,
        });
    }
    Ok(out)
}

/// Writes the synthetic train and test splits, each from its own LHS draw.
pub fn gen_data(cfg: &PipelineConfig, wd: &WorkDir) -> Result<()> {
    if cfg.data.n_train == 0 || cfg.data.n_test == 0 {
        return Err(Error::Argument("n_train and n_test must be at least 1".into()));
    }
    let dir = wd.data();
    ensure_dir(&dir.join("fields"))?;
    let d = &cfg.data;
    let train = make_split(
        "train",
        d.n_train,
        d.field_train.min(d.n_train),
        cfg.stage_seed("train_planforms"),
        cfg.stage_seed("train_conditions"),
        d,
        &dir,
    )?;
    write_cases(&wd.train_cases(), &train)?;
    let test = make_split(
        "test",
        d.n_test,
        d.field_test.min(d.n_test),
        cfg.stage_seed("test_planforms"),
        cfg.stage_seed("test_conditions"),
        d,
        &dir,
    )?;
    write_cases(&wd.test_cases(), &test)?;
    log::info!("wrote {} train and {} test cases to {}", train.len(), test.len(), dir.display());
    Ok(())
}

/// Reads a case table, logging malformed rows and refusing an empty result.
pub fn load_cases(path: &Path) -> Result<Vec<CaseRecord>> {
    if !path.exists() {
        return Err(Error::State(format!(
            "case table {} not found; run gen-data first",
            path.display()
        )));
    }
    let CaseTable { records, errors } = read_cases(path, None)?;
    for e in &errors {
        log::warn!("{}:{}: {}", path.display(), e.line, e.message);
    }
    let flagged = records.iter().filter(|r| r.out_of_box).count();
    if flagged > 0 {
        log::warn!("{}: {flagged} records lie outside the planform box", path.display());
    }
    if records.is_empty() {
        return Err(Error::Schema(format!("{} holds no valid records", path.display())));
    }
    Ok(records)
}

fn field_cases(records: &[CaseRecord], data_dir: &Path) -> Result<Vec<FieldCase>> {
    records
        .iter()
        .filter_map(|r| r.field_file.as_ref().map(|f| (r, f)))
        .map(|(r, f)| {
            Ok(FieldCase {
                params: r.params,
                condition: r.flight()?,
                cloud: crate::io::read_surface_fields(&data_dir.join(f))?,
            })
        })
        .collect()
}

/// Held-out quality of the trained surrogates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub ld_test_rmse: f64,
    pub ld_test_r2: Option<f64>,
    /// Mean errors per channel `cp`, `cfx`, `cfz` on the test fields.
    pub field_test: Option<[FieldErrors; 3]>,
}

/// Trains the L/D surrogate and, when field files exist, the field surrogate.
pub fn train_surrogates(cfg: &PipelineConfig, wd: &WorkDir) -> Result<SurrogateReport> {
    let train = load_cases(&wd.train_cases())?;
    let samples = train
        .iter()
        .map(|r| {
            Ok(LdSample {
                params: r.params,
                condition: r.flight()?,
                ld: r.ld,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ld = train_ld_surrogate(&samples, &cfg.ld)?;
    ensure_dir(&wd.models())?;
    save_checkpoint(&wd.ld_checkpoint(), &ld)?;

    let test = load_cases(&wd.test_cases())?;
    let rows = test
        .iter()
        .map(|r| Ok((r.params, r.flight()?)))
        .collect::<Result<Vec<_>>>()?;
    let pred = ld.predict_batch(&rows)?;
    let truth: Vec<f64> = test.iter().map(|r| r.ld).collect();
    let ld_test_rmse =
        (pred.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64).sqrt();
    let ld_test_r2 = crate::eval::r2_global(&pred, &truth).ok();
    log::info!("L/D surrogate test RMSE {ld_test_rmse:.4}");

    let cases = field_cases(&train, &wd.data())?;
    let field_test = if cases.len() >= 2 {
        let fs = train_field_surrogate(&cases, &cfg.field)?;
        save_checkpoint(&wd.field_checkpoint(), &fs)?;
        let held = field_cases(&test, &wd.data())?;
        field_report(&fs, &held)?
    } else {
        log::warn!("fewer than two train cases carry field files; skipping the field surrogate");
        None
    };
    let report = SurrogateReport {
        ld_test_rmse,
        ld_test_r2,
        field_test,
    };
    let path = wd.models().join("surrogate_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Per-channel mean field errors of `fs` over `cases`.
pub fn field_report(fs: &FieldSurrogate, cases: &[FieldCase]) -> Result<Option<[FieldErrors; 3]>> {
    if cases.is_empty() {
        return Ok(None);
    }
    let mut per = [Vec::new(), Vec::new(), Vec::new()];
    for c in cases {
        let pred = fs.predict(&c.cloud, &c.params, &c.condition)?;
        let truth = c.targets()?;
        for (ch, list) in per.iter_mut().enumerate() {
            let p: Vec<f64> = pred.iter().map(|r| r[ch]).collect();
            let t: Vec<f64> = truth.iter().map(|r| r[ch]).collect();
            list.push(field_errors(&p, &t)?);
        }
    }
    Ok(Some([
        mean_field_errors(&per[0])?,
        mean_field_errors(&per[1])?,
        mean_field_errors(&per[2])?,
    ]))
}

pub fn diffusion_samples(records: &[CaseRecord]) -> Result<Vec<DiffusionSample>> {
    records
        .iter()
        .map(|r| {
            Ok(DiffusionSample {
                params: r.params,
                condition: ConditionVector::new(&r.flight()?, r.ld),
            })
        })
        .collect()
}

pub fn train_diffusion(cfg: &PipelineConfig, wd: &WorkDir) -> Result<CdmModel> {
    let train = load_cases(&wd.train_cases())?;
    let cdm = train_denoiser(&diffusion_samples(&train)?, &cfg.diffusion)?;
    ensure_dir(&wd.models())?;
    save_checkpoint(&wd.cdm_checkpoint(), &cdm)?;
    Ok(cdm)
}

/// Inversion requests for the head of the test split.
pub fn inverse_conditions(test: &[CaseRecord], n: usize) -> Result<Vec<InverseCondition>> {
    test.iter()
        .take(n)
        .enumerate()
        .map(|(id, r)| {
            Ok(InverseCondition {
                id,
                flight: r.flight()?,
                target_ld: r.ld,
            })
        })
        .collect()
}

/// Geometry scaler of the decision space: the diffusion model's when present,
/// otherwise fitted on the training planforms.
fn decision_scaler(cdm: Option<&CdmModel>, train: &[CaseRecord]) -> Result<GeomScaler> {
    match cdm.and_then(|c| c.geom_scaler.clone()) {
        Some(g) => Ok(g),
        None => GeomScaler::fit(&train.iter().map(|r| r.params).collect::<Vec<_>>()),
    }
}

/// Runs `methods` over the evaluation conditions and writes one result file
/// per method. Returns the results in method order.
pub fn invert(cfg: &PipelineConfig, wd: &WorkDir, methods: &[Method], workers: usize) -> Result<Vec<Vec<InverseResult>>> {
    let ld: LdSurrogate = load_checkpoint(&wd.ld_checkpoint())?;
    let needs_cdm = methods.iter().any(|m| *m != Method::Opt);
    let cdm: Option<CdmModel> = if needs_cdm {
        Some(load_checkpoint(&wd.cdm_checkpoint())?)
    } else {
        None
    };
    let train = load_cases(&wd.train_cases())?;
    let test = load_cases(&wd.test_cases())?;
    let conds = inverse_conditions(&test, cfg.invert.conditions)?;
    let geom = decision_scaler(cdm.as_ref(), &train)?;
    let bx = ParamBox::default();
    let ctx = InverseContext {
        ld: &ld,
        cdm: cdm.as_ref(),
        geom: &geom,
        param_box: &bx,
        opt: cfg.invert.opt,
        hybrid: cfg.invert.hybrid,
        k: cfg.invert.k,
        seed: cfg.stage_seed("invert"),
    };
    let mut all = Vec::new();
    for &m in methods {
        let t0 = Instant::now();
        let res = run_batch(&ctx, m, &conds, workers)?;
        log::info!("{m}: {} conditions in {:.2} s", res.len(), t0.elapsed().as_secs_f64());
        let path = wd.results(m);
        ensure_parent(&path)?;
        write_results(&path, &res)?;
        all.push(res);
    }
    Ok(all)
}

/// Metrics of every method whose result file exists. Timings are left out so
/// the file is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub profile: Profile,
    pub seed: u64,
    pub reports: Vec<MetricReport>,
}

pub fn evaluate(cfg: &PipelineConfig, wd: &WorkDir) -> Result<MetricsFile> {
    let train = load_cases(&wd.train_cases())?;
    let test = load_cases(&wd.test_cases())?;
    let train_p: Vec<PlanformParams> = train.iter().map(|r| r.params).collect();
    let test_p: Vec<PlanformParams> = test.iter().map(|r| r.params).collect();
    let scaler = StandardScaler::fit(&train_p.iter().map(|p| p.to_array()).collect::<Vec<_>>())?;
    let setup = EvalSetup {
        diversity_scaler: &scaler,
        truth: Some(&test_p),
        ranges: Some(param_ranges(&test_p)),
        threshold: cfg.invert.threshold,
    };
    let mut reports = Vec::new();
    for m in Method::ALL {
        let path = wd.results(m);
        if !path.exists() {
            continue;
        }
        reports.push(evaluate_method(&read_results(&path)?, &setup)?);
    }
    if reports.is_empty() {
        return Err(Error::State(format!(
            "no result files under {}; run invert first",
            wd.root.join("results").display()
        )));
    }
    let out = MetricsFile {
        profile: cfg.profile,
        seed: cfg.seed,
        reports,
    };
    let path = wd.metrics();
    ensure_parent(&path)?;
    std::fs::write(&path, serde_json::to_string_pretty(&out)? + "\n").map_err(|e| Error::io(&path, e))?;
    let rows: Vec<_> = out.reports.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    write_condition_rows(&wd.condition_table(), &rows)?;
    Ok(out)
}

/// Mean seconds per condition of each method with results on disk.
pub fn runtimes(wd: &WorkDir) -> Result<Vec<(Method, f64)>> {
    let mut out = Vec::new();
    for m in Method::ALL {
        let path = wd.results(m);
        if path.exists() {
            let r = read_results(&path)?;
            let t = r.iter().map(|x| x.seconds).sum::<f64>() / r.len().max(1) as f64;
            out.push((m, t));
        }
    }
    Ok(out)
}

/// Writes the method summary and the flat candidate table.
pub fn report(wd: &WorkDir) -> Result<PathBuf> {
    let path = wd.metrics();
    if !path.exists() {
        return Err(Error::State(format!("{} not found; run eval first", path.display())));
    }
    let s = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let metrics: MetricsFile = serde_json::from_str(&s)?;
    let out = wd.summary();
    ensure_parent(&out)?;
    write_summary_csv(&out, &metrics.reports, &runtimes(wd)?)?;
    let mut all = Vec::new();
    for m in Method::ALL {
        if wd.results(m).exists() {
            all.extend(read_results(&wd.results(m))?);
        }
    }
    write_candidates_csv(&wd.root.join("report").join("candidates.csv"), &all)?;
    Ok(out)
}

/// Every stage in order on one work directory.
pub fn run_all(cfg: &PipelineConfig, wd: &WorkDir, workers: usize) -> Result<MetricsFile> {
    gen_data(cfg, wd)?;
    train_surrogates(cfg, wd)?;
    train_diffusion(cfg, wd)?;
    invert(cfg, wd, &Method::ALL, workers)?;
    let m = evaluate(cfg, wd)?;
    report(wd)?;
    Ok(m)
}
