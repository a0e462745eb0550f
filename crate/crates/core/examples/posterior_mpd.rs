//! Diversity of the exact conditional by rejection sampling, next to the
//! inversion results of a finished run.
use bwb_core::eval::diversity;
use bwb_core::geom::{lhs_planforms, ParamBox};
use bwb_core::io::{load_checkpoint, read_results};
use bwb_core::pipeline::{inverse_conditions, load_cases, WorkDir};
use bwb_core::scale::StandardScaler;
use bwb_core::surrogate::LdSurrogate;

fn main() -> bwb_core::Result<()> {
    let dir = std::env::args().nth(1).unwrap();
    let wd = WorkDir::new(&dir);
    let ld: LdSurrogate = load_checkpoint(&wd.ld_checkpoint())?;
    let train = load_cases(&wd.train_cases())?;
    let test = load_cases(&wd.test_cases())?;
    let sc = StandardScaler::fit(&train.iter().map(|r| r.params.to_array()).collect::<Vec<_>>())?;
    let conds = inverse_conditions(&test, 50)?;
    let pool = lhs_planforms(&ParamBox::default(), 200_000, 99)?;
    let mut acc = 0.0;
    let mut n = 0;
    for c in &conds {
        let rows: Vec<_> = pool.iter().map(|p| (*p, c.flight)).collect();
        let pred = ld.predict_batch(&rows)?;
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.sort_by(|&a, &b| (pred[a] - c.target_ld).abs().total_cmp(&(pred[b] - c.target_ld).abs()));
        let z: Vec<Vec<f64>> = idx[..32].iter().map(|&i| sc.transform(&pool[i].to_array())).collect();
        let tol = (pred[idx[31]] - c.target_ld).abs();
        let d = diversity(&z)?;
        acc += d.mpd;
        n += 1;
        if n <= 5 { println!("cond {} target {:.2} tol {:.4} mpd {:.3}", c.id, c.target_ld, tol, d.mpd); }
    }
    println!("posterior mpd mean {:.4}", acc / n as f64);
    for m in ["cdm", "opt", "hybrid"] {
        let r = read_results(&wd.root.join("results").join(format!("{m}.jsonl")))?;
        let mut per = vec![];
        for x in r.iter().take(5) {
            let z: Vec<Vec<f64>> = x.candidates.iter().map(|p| sc.transform(&p.to_array())).collect();
            per.push(format!("{:.3}", diversity(&z)?.mpd));
        }
        println!("{m} first five {:?}", per);
    }
    Ok(())
}
