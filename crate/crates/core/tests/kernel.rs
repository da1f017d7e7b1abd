use polya::quadrature::integrate;
use polya::rng::seeded;
use polya::sampling::{sample_dirichlet, sample_dirichlet_split};
use polya::special::{beta_pdf, log_gamma_ratio};
use polya::{BetaParams, DirichletParams};

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_two_sample(mut x: Vec<f64>, mut y: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Critical value at level 0.001.
fn ks_critical(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.95 * ((n + m) / (n * m)).sqrt()
}

#[test]
fn density_integrates_to_one() {
    let grid = [0.5, 1.0, 2.0, 5.0];
    for &a in &grid {
        for &b in &grid {
            let p = BetaParams::new(a, b).unwrap();
            // x = (v^(1/a))/2 on the left half, mirrored on the right, so the
            // transformed integrands stay bounded.
            let (ka, kb) = (1.0 / a, 1.0 / b);
            let left = integrate(
                |v: f64| {
                    let x = 0.5 * v.powf(ka);
                    beta_pdf(&p, x).unwrap() * 0.5 * ka * v.powf(ka - 1.0)
                },
                0.0,
                1.0,
                0.0,
                1e-13,
            );
            let right = integrate(
                |v: f64| {
                    let x = 1.0 - 0.5 * v.powf(kb);
                    beta_pdf(&p, x).unwrap() * 0.5 * kb * v.powf(kb - 1.0)
                },
                0.0,
                1.0,
                0.0,
                1e-13,
            );
            let total = left.value + right.value;
            assert!((total - 1.0).abs() <= 1e-9, "({a},{b}): {total}");
        }
    }
}

#[test]
fn gamma_ratio_matches_its_asymptotics() {
    let shifts = [0.0, 0.5, 1.0, 2.0];
    let xs: Vec<f64> = (0..=50).map(|i| 10.0 * 10f64.powf(i as f64 / 10.0)).collect();
    for &a in &shifts {
        for &b in &shifts {
            let scaled: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let r = (log_gamma_ratio(x + a, x + b).unwrap() + (b - a) * x.ln()).exp();
                    x * (r - 1.0).abs()
                })
                .collect();
            // C fitted on [10, 100], then required to hold out to 10^6.
            let c = scaled[..=10].iter().cloned().fold(0.0, f64::max);
            for (x, s) in xs.iter().zip(&scaled) {
                assert!(*s <= 1.5 * c + 1e-9, "({a},{b}) x={x}: {s} vs C={c}");
            }
            // Leading term (a - b)(a + b - 1)/2.
            let lead = ((a - b) * (a + b - 1.0) / 2.0).abs();
            assert!((scaled[50] - lead).abs() <= 1e-4, "({a},{b}): {} vs {lead}", scaled[50]);
        }
    }
}

#[test]
fn split_construction_matches_direct_dirichlet() {
    let draws = 100_000;
    for (seed, alphas) in [vec![1.0, 2.0, 3.0], vec![0.5, 0.5, 2.0, 1.0], vec![2.0, 3.0, 5.0]]
        .into_iter()
        .enumerate()
    {
        let d = DirichletParams::new(alphas.clone()).unwrap();
        let mut r1 = seeded(100 + seed as u64);
        let mut r2 = seeded(200 + seed as u64);
        let direct: Vec<Vec<f64>> = (0..draws).map(|_| sample_dirichlet(&d, &mut r1)).collect();
        let split: Vec<Vec<f64>> = (0..draws).map(|_| sample_dirichlet_split(&d, &mut r2)).collect();
        for i in 0..alphas.len() {
            let x: Vec<f64> = direct.iter().map(|w| w[i]).collect();
            let y: Vec<f64> = split.iter().map(|w| w[i]).collect();
            let stat = ks_two_sample(x, y);
            assert!(stat <= ks_critical(draws, draws), "{alphas:?} coord {i}: D = {stat}");
        }
    }
}

#[test]
fn flat_dirichlet_first_coordinate_is_uniform() {
    let d = DirichletParams::new(vec![1.0, 1.0]).unwrap();
    let mut rng = seeded(31);
    let m = 100_000;
    let mut x: Vec<f64> = (0..m).map(|_| sample_dirichlet(&d, &mut rng)[0]).collect();
    x.sort_by(f64::total_cmp);
    let d_stat = x
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / m as f64).abs().max(((i + 1) as f64 / m as f64 - v).abs()))
        .fold(0.0, f64::max);
    assert!(d_stat <= 1.95 / (m as f64).sqrt(), "D = {d_stat}");
}
