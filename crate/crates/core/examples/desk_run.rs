//! Runs one profile end to end in a work directory and prints the summary.
//!
//! `cargo run --release --example desk_run -- <dir> [smoke|desk|full] [seed]`

use std::time::Instant;

use bwb_core::pipeline::{self, PipelineConfig, Profile, WorkDir};

fn main() -> bwb_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let dir = args.get(1).cloned().unwrap_or_else(|| "desk_run".into());
    let profile: Profile = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(Profile::Desk);
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = PipelineConfig::profile(profile, seed);
    let wd = WorkDir::new(&dir);
    let t = Instant::now();
    pipeline::gen_data(&cfg, &wd)?;
    eprintln!("gen-data {:.1} s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let sr = pipeline::train_surrogates(&cfg, &wd)?;
    eprintln!("train-surrogate {:.1} s {:?}", t.elapsed().as_secs_f64(), sr);
    let t = Instant::now();
    pipeline::train_diffusion(&cfg, &wd)?;
    eprintln!("train-diffusion {:.1} s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    pipeline::invert(&cfg, &wd, &bwb_core::invert::Method::ALL, 1)?;
    eprintln!("invert {:.1} s", t.elapsed().as_secs_f64());
    let m = pipeline::evaluate(&cfg, &wd)?;
    let rt = pipeline::runtimes(&wd)?;
    for (r, (_, s)) in m.reports.iter().zip(&rt) {
        println!(
            "{:7} r2 {:?} best {:?} rmse {:.4} mpd {:.4} mindist {:.4} rec {:?} t {:.4}",
            r.method.to_string(),
            r.r2_global,
            r.r2_best_of_k,
            r.rmse_mean,
            r.mpd_mean,
            r.mindist_mean,
            r.recovery,
            s
        );
    }
    Ok(())
}
