//! Gamma, Beta and Dirichlet variates.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::special::{BetaParams, DirichletParams};

/// One Gamma(shape, 1) variate.
///
/// Shapes at least 1 use the Marsaglia-Tsang squeeze; smaller shapes draw
/// with `shape + 1` and multiply by `U^(1/shape)`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let g = marsaglia_tsang(shape + 1.0, rng);
        let u = open_unit(rng);
        return (g.ln() + u.ln() / shape).exp();
    }
    marsaglia_tsang(shape, rng)
}

fn marsaglia_tsang<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open_unit(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Uniform on (0, 1].
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// One Beta variate as a ratio of Gammas.
pub fn sample_beta<R: Rng + ?Sized>(p: &BetaParams, rng: &mut R) -> f64 {
    let x = sample_gamma(p.alpha(), rng);
    let y = sample_gamma(p.beta(), rng);
    x / (x + y)
}

/// Normalized vector of independent Gamma(alpha_i) draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(p: &DirichletParams, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = p.alphas().iter().map(|&a| sample_gamma(a, rng)).collect();
    let total: f64 = v.iter().sum();
    for x in &mut v {
        *x /= total;
    }
    v
}

/// Dirichlet draw built by splitting off one coordinate at a time:
/// `(Z, (1 - Z) V)` with `Z ~ Beta(alpha_1, sum of the rest)` and `V` a
/// Dirichlet draw on the remaining coordinates.
pub fn sample_dirichlet_split<R: Rng + ?Sized>(p: &DirichletParams, rng: &mut R) -> Vec<f64> {
    let alphas = p.alphas();
    let mut out = Vec::with_capacity(alphas.len());
    let mut remaining = 1.0;
    for i in 0..alphas.len() - 1 {
        let rest: f64 = alphas[i + 1..].iter().sum();
        let z = sample_beta(&BetaParams::new(alphas[i], rest).expect("validated shapes"), rng);
        out.push(remaining * z);
        remaining *= 1.0 - z;
    }
    out.push(remaining);
    out
}
