#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tankfdi_core::askf::DiscreteModel;
use tankfdi_core::linalg::{self, Matrix, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Matrix {
    let m = random_matrix(rng, n, n);
    &m * m.transpose() + Matrix::identity(n, n) * floor
}

/// Random model with spectral radius below 0.95 and an `m`-dimensional
/// measurement.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize, p: usize, m: usize) -> DiscreteModel {
    let mut a = random_matrix(rng, n, n);
    let radius = linalg::spectral_norm(&a);
    if radius > 0.95 {
        a *= 0.95 / radius;
    }
    DiscreteModel::new(
        a,
        random_matrix(rng, n, p),
        random_matrix(rng, m, n),
        random_spd(rng, p, 0.05),
        random_spd(rng, m, 0.1),
    )
    .expect("valid random model")
}

/// Simulates the model with uniform noise and returns
/// (inputs, measurements).
pub fn synthetic_data(
    rng: &mut ChaCha8Rng,
    model: &DiscreteModel,
    x0: &Vector,
    steps: usize,
    noise: f64,
) -> (Vec<Vector>, Vec<Vector>) {
    let p = model.b.ncols();
    let m = model.theta.nrows();
    let mut x = x0.clone();
    let mut inputs = Vec::with_capacity(steps);
    let mut ys = Vec::with_capacity(steps);
    for _ in 0..steps {
        let u = Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        let w = Vector::from_fn(p, |_, _| noise * rng.random_range(-1.0..1.0));
        x = &model.a * &x + &model.b * (&u + w);
        let v = Vector::from_fn(m, |_, _| noise * rng.random_range(-1.0..1.0));
        ys.push(&model.theta * &x + v);
        inputs.push(u);
    }
    (inputs, ys)
}

/// Covariance-form Kalman filter without any scaling.
pub fn plain_kf(
    model: &DiscreteModel,
    x0: &Vector,
    p0: &Matrix,
    inputs: &[Vector],
    ys: &[Vector],
) -> Vec<(Vector, Matrix)> {
    let n = model.n();
    let mut x = x0.clone();
    let mut p = p0.clone();
    let mut out = Vec::new();
    for (u, y) in inputs.iter().zip(ys) {
        let xp = &model.a * &x + &model.b * u;
        let pp = &model.a * &p * model.a.transpose() + &model.b * &model.q * model.b.transpose();
        let s = &model.theta * &pp * model.theta.transpose() + &model.r;
        let k = &pp * model.theta.transpose() * s.try_inverse().expect("invertible");
        x = &xp + &k * (y - &model.theta * &xp);
        p = linalg::symmetrize(&((Matrix::identity(n, n) - &k * &model.theta) * &pp));
        out.push((x.clone(), p.clone()));
    }
    out
}

pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
