#![allow(dead_code)]

use levelsets::mlp::{Activation, Mlp, MlpSpec, ParamVector};
use levelsets::rng;

pub fn net(seed: u64, d: usize, hidden: &[usize], l: usize, act: Activation) -> Mlp {
    MlpSpec::new(d, hidden, l)
        .with_activation(act)
        .init(&mut rng::seeded(seed))
        .unwrap()
}

pub fn softplus_net(seed: u64, d: usize, hidden: &[usize], l: usize) -> Mlp {
    net(seed, d, hidden, l, Activation::Softplus { beta: 10.0 })
}

/// Central differences of `f` over every parameter of `mlp`.
pub fn fd_grad(mlp: &Mlp, h: f64, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let p = mlp.params();
    (0..p.len())
        .map(|k| {
            let mut plus = p.clone();
            plus.0[k] += h;
            let mut minus = p.clone();
            minus.0[k] -= h;
            (f(&mlp.with_params(&plus).unwrap()) - f(&mlp.with_params(&minus).unwrap())) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||b||, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / nb.max(floor)
}

pub fn params_of(v: &ParamVector) -> &[f64] {
    &v.0
}

/// Handle anchored at `p` on the level `F(p)` of `mlp`.
pub fn handle_at(mlp: &Mlp, p: &[f64]) -> levelsets::SampleHandle {
    try_handle_at(mlp, p).expect("full-rank jacobian")
}

/// `None` where the jacobian is rank deficient.
pub fn try_handle_at(mlp: &Mlp, p: &[f64]) -> Option<levelsets::SampleHandle> {
    let (val, jac) = mlp.eval_jacobian(p);
    let a = levelsets::Matrix::from_vec(mlp.output_dim(), mlp.input_dim(), jac).unwrap();
    let pinv = levelsets::linalg::pinv_small(&a, 0.0).ok()?;
    Some(levelsets::SampleHandle::new(p.to_vec(), pinv, val).unwrap())
}

/// Random softplus network with `d` inputs, `l` outputs, depth and widths
/// drawn from `seed`.
pub fn random_net(seed: u64, d: usize, l: usize, max_depth: usize, max_width: usize) -> Mlp {
    use rand::Rng;
    let mut r = rng::seeded(seed ^ 0x9e37);
    let depth = r.gen_range(1..=max_depth);
    let hidden: Vec<usize> = (0..depth).map(|_| r.gen_range(2..=max_width)).collect();
    let beta = r.gen_range(1.0..10.0);
    net(seed, d, &hidden, l, Activation::Softplus { beta })
}

pub fn random_point(seed: u64, d: usize) -> Vec<f64> {
    use rand::Rng;
    let mut r = rng::seeded(seed ^ 0x51);
    (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn random_direction(seed: u64, m: usize) -> ParamVector {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng::seeded(seed ^ 0xd1);
    let mut v = ParamVector((0..m).map(|_| StandardNormal.sample(&mut r)).collect());
    let n = v.norm();
    v.scale(1.0 / n);
    v
}
