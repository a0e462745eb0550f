//! Pilot run of the field surrogate on oracle data: held-out Cp relative L2.
use std::time::Instant;

use bwb_core::geom::{lhs_conditions, lhs_planforms, ParamBox, SurfaceOptions};
use bwb_core::pipeline::field_report;
use bwb_core::surrogate::{oracle_aero, train_field_surrogate, FieldCase, FieldTrainConfig, FilmConfig};

fn cases(n: usize, seed: u64, opts: &SurfaceOptions) -> Vec<FieldCase> {
    let ps = lhs_planforms(&ParamBox::default(), n, seed).unwrap();
    let fcs = lhs_conditions(n, seed + 1).unwrap();
    ps.iter()
        .zip(&fcs)
        .map(|(p, fc)| FieldCase {
            params: *p,
            condition: *fc,
            cloud: oracle_aero(p, fc, opts).unwrap().surface,
        })
        .collect()
}

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let width: usize = a[1].parse().unwrap();
    let modulated: usize = a[2].parse().unwrap();
    let plain: usize = a[3].parse().unwrap();
    let epochs: usize = a[4].parse().unwrap();
    let lr: f64 = a[5].parse().unwrap();
    let bc: usize = a[6].parse().unwrap();
    let ppc: usize = a[7].parse().unwrap();
    let opts = SurfaceOptions::new(10, 6);
    let train = cases(256, 10, &opts);
    let test = cases(64, 20, &opts);
    let cfg = FieldTrainConfig {
        model: FilmConfig { width, modulated, plain, hyper_hidden: 64, ..FilmConfig::default() },
        epochs,
        lr,
        batch_cases: bc,
        points_per_case: (ppc > 0).then_some(ppc),
        patience: 1000,
        warmup_epochs: 0,
        ..FieldTrainConfig::default()
    };
    let t = Instant::now();
    let fs = train_field_surrogate(&train, &cfg).unwrap();
    let r = field_report(&fs, &test).unwrap().unwrap();
    let tl = &fs.train_losses;
    println!(
        "w{width} m{modulated} p{plain} e{epochs} lr{lr} bc{bc} ppc{ppc}: {:.0}s loss {:.4}->{:.4} val {:.4} | cp relL2 {:.4} relL1 {:.4} | cfx {:.4} cfz {:.4}",
        t.elapsed().as_secs_f64(),
        tl[0],
        tl[tl.len() - 1],
        fs.val_losses.iter().cloned().fold(f64::INFINITY, f64::min),
        r[0].rel_l2.unwrap(),
        r[0].rel_l1.unwrap(),
        r[1].rel_l2.unwrap(),
        r[2].rel_l2.unwrap()
    );
}
