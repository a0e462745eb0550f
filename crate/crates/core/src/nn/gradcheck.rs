//! Central finite-difference checks of the tape gradients.

use rand::Rng;

use super::*;
use crate::error::Result;

/// Builds a scalar from the leaves of a tape.
pub type Build = dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId> + Send + Sync;

/// Max mixed relative error `|a - f| / max(|a|, |f|, 1e-3)` between tape
/// gradients and central differences with step `1e-6`.
pub fn max_rel_error(inputs: &[Tensor2], build: &Build) -> Result<f64> {
    let mut tape = Tape::new();
    let ids: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &ids)?;
    let grads = tape.backward(out)?;
    let eval = |xs: &[Tensor2]| -> Result<f64> {
        let mut t = Tape::new();
        let ids: Vec<_> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let o = build(&mut t, &ids)?;
        Ok(t.value(o).item())
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let g = grads.get_or_zeros(ids[k], x.shape());
        for i in 0..x.data().len() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] += h;
            let fp = eval(&xs)?;
            xs[k].data_mut()[i] -= 2.0 * h;
            let fm = eval(&xs)?;
            let fd = (fp - fm) / (2.0 * h);
            let an = g.data()[i];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn rand_t(rng: &mut Rng64, r: usize, c: usize) -> Tensor2 {
    Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect()).expect("sized")
}

/// Reduces any node to a scalar through a fixed, non-symmetric target.
fn reduce(t: &mut Tape, x: NodeId) -> Result<NodeId> {
    let v = t.value(x).clone();
    let target = Tensor2::from_vec(
        v.rows(),
        v.cols(),
        (0..v.data().len()).map(|i| (i as f64 * 0.37).sin()).collect(),
    )?;
    let c = t.constant(target);
    t.mse(x, c)
}

/// One differentiable op or layer with the shapes of its random inputs.
pub struct GradCase {
    pub name: &'static str,
    pub shapes: Vec<(usize, usize)>,
    pub build: Box<Build>,
}

fn case(name: &'static str, shapes: &[(usize, usize)], build: impl Fn(&mut Tape, &[NodeId]) -> Result<NodeId> + Send + Sync + 'static) -> GradCase {
    GradCase {
        name,
        shapes: shapes.to_vec(),
        build: Box::new(build),
    }
}

/// Every op of the tape plus the composite layers the models are built from.
pub fn layer_cases() -> Vec<GradCase> {
    let mut v = vec![
        case("matmul", &[(3, 4), (4, 5)], |t, x| {
            let y = t.matmul(x[0], x[1])?;
            reduce(t, y)
        }),
        case("add", &[(3, 4), (1, 4)], |t, x| {
            let y = t.add(x[0], x[1])?;
            reduce(t, y)
        }),
        case("sub", &[(3, 4), (3, 4)], |t, x| {
            let y = t.sub(x[0], x[1])?;
            reduce(t, y)
        }),
        case("mul", &[(3, 4), (1, 4)], |t, x| {
            let y = t.mul(x[0], x[1])?;
            reduce(t, y)
        }),
        case("mul-full", &[(2, 3), (2, 3)], |t, x| {
            let y = t.mul(x[0], x[1])?;
            reduce(t, y)
        }),
        case("layer_norm", &[(4, 8)], |t, x| {
            let y = t.layer_norm(x[0])?;
            reduce(t, y)
        }),
        case("concat", &[(3, 2), (3, 4)], |t, x| {
            let y = t.concat(&[x[0], x[1]])?;
            reduce(t, y)
        }),
        case("slice", &[(3, 6)], |t, x| {
            let y = t.slice_cols(x[0], 2, 3)?;
            reduce(t, y)
        }),
        case("gather", &[(3, 4)], |t, x| {
            let y = t.gather_rows(x[0], &[2, 0, 2, 1, 2])?;
            reduce(t, y)
        }),
        case("scale+affine", &[(3, 3)], |t, x| {
            let y = t.scale(x[0], -0.7)?;
            let y = t.affine_cols(y, &[2.0, 0.5, -1.0], &[0.1, 0.2, 0.3])?;
            t.sum_squares(y)
        }),
        case("linear", &[(5, 4), (4, 3), (1, 3)], |t, x| {
            let y = t.matmul(x[0], x[1])?;
            let y = t.add(y, x[2])?;
            reduce(t, y)
        }),
        case("film", &[(5, 4), (2, 8)], |t, x| {
            let gb = t.gather_rows(x[1], &[0, 1, 1, 0, 1])?;
            let g = t.slice_cols(gb, 0, 4)?;
            let b = t.slice_cols(gb, 4, 4)?;
            let y = t.mul(x[0], g)?;
            let y = t.add(y, b)?;
            reduce(t, y)
        }),
        case("residual block", &[(3, 4), (4, 6), (6, 4)], |t, x| {
            let h = t.layer_norm(x[0])?;
            let h = t.matmul(h, x[1])?;
            let h = t.silu(h)?;
            let h = t.matmul(h, x[2])?;
            let y = t.add(x[0], h)?;
            reduce(t, y)
        }),
    ];
    for (name, f) in [
        ("silu", Activation::Silu),
        ("gelu", Activation::Gelu),
        ("relu", Activation::Relu),
        ("tanh", Activation::Tanh),
    ] {
        v.push(case(name, &[(4, 5)], move |t, x| {
            let y = t.act(x[0], f)?;
            reduce(t, y)
        }));
    }
    v
}

/// Worst relative error of a case over `seeds` random draws of its inputs.
pub fn check_case(c: &GradCase, seeds: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = seeded_rng(seed);
        let xs: Vec<_> = c.shapes.iter().map(|&(r, k)| rand_t(&mut rng, r, k)).collect();
        worst = worst.max(max_rel_error(&xs, &*c.build)?);
    }
    Ok(worst)
}

#[test]
fn every_layer_matches_finite_differences() {
    for c in layer_cases() {
        let e = check_case(&c, 20).unwrap();
        assert!(e < 1e-5, "{}: rel err {e}", c.name);
    }
}

#[test]
fn constant_row_layer_norm_is_zero() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor2::row_vector(vec![2.5; 6]));
    let y = t.layer_norm(x).unwrap();
    assert!(t.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn silu_zero_and_mse_min() {
    assert_eq!(Activation::Silu.apply(0.0), 0.0);
    let mut t = Tape::new();
    let x = t.leaf(Tensor2::row_vector(vec![0.3, -1.0, 2.0]));
    let l = t.mse(x, x).unwrap();
    let g = t.backward(l).unwrap();
    assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn scalar_product_grad() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor2::scalar(3.0));
    let w = t.leaf(Tensor2::scalar(-2.5));
    let y = t.matmul(x, w).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item(), -2.5);
    assert_eq!(g.get(w).unwrap().item(), 3.0);
}

#[test]
fn non_scalar_backward_rejected() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor2::zeros(2, 2));
    assert!(t.backward(x).is_err());
}

#[test]
fn non_finite_is_an_error() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor2::scalar(1e300));
    let err = t.matmul(x, x).unwrap_err();
    assert!(matches!(err, crate::Error::NonFinite(_)));
}

#[test]
fn shape_mismatch_names_both() {
    let mut t = Tape::new();
    let a = t.leaf(Tensor2::zeros(2, 3));
    let b = t.leaf(Tensor2::zeros(2, 4));
    let msg = t.add(a, b).unwrap_err().to_string();
    assert!(msg.contains("(2, 3)") && msg.contains("(2, 4)"), "{msg}");
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor2::row_vector(vec![1.0, 2.0]));
    let c = t.constant(Tensor2::row_vector(vec![3.0, 4.0]));
    let y = t.mul(x, c).unwrap();
    let l = t.sum_squares(y).unwrap();
    let g = t.backward(l).unwrap();
    assert!(g.get(c).is_none());
    assert_eq!(g.get(x).unwrap().data(), &[18.0, 64.0]);
}
