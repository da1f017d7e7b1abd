//! Invariants checked across the built-in parameter grid and the default
//! n grid.

use polya::coupling::monotone_thresholds;
use polya::harness::default_grid;
use polya::metrics::{ks_from_table, levy_with_bracket, minimal_lp_from_coupling, wasserstein_l1_via_cdf};
use polya::tables::{build_tables, probe_lemma_l1, probe_lemma_l2};
use polya::BetaParams;

const SHAPES: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];

fn grid_params() -> impl Iterator<Item = BetaParams> {
    SHAPES
        .iter()
        .flat_map(|&a| SHAPES.iter().map(move |&b| BetaParams::new(a, b).unwrap()))
}

#[test]
fn quantile_and_cdf_routes_agree() {
    for p in grid_params() {
        for &n in &default_grid() {
            let (law, _) = build_tables(&p, n).unwrap();
            let c = monotone_thresholds(&law, &p).unwrap();
            let q = minimal_lp_from_coupling(&c, 1.0).unwrap();
            let w = wasserstein_l1_via_cdf(&law, &p).unwrap();
            assert!(
                (q.value - w.value).abs() <= 1e-7,
                "({},{}) n={n}: {} vs {}",
                p.alpha(),
                p.beta(),
                q.value,
                w.value
            );
            assert!(q.error_bound <= 1e-8, "{q:?}");
        }
    }
}

#[test]
fn distances_shrink_along_the_grid() {
    for p in grid_params() {
        let mut series: Vec<[f64; 5]> = Vec::new();
        for &n in &default_grid() {
            let (law, table) = build_tables(&p, n).unwrap();
            let c = monotone_thresholds(&law, &p).unwrap();
            let ks = ks_from_table(&table, &p).value;
            series.push([
                minimal_lp_from_coupling(&c, 1.0).unwrap().value,
                minimal_lp_from_coupling(&c, 2.0).unwrap().value,
                minimal_lp_from_coupling(&c, f64::INFINITY).unwrap().value,
                ks,
                levy_with_bracket(&law, &p, ks).unwrap().value,
            ]);
        }
        for m in 0..5 {
            for w in series.windows(2) {
                assert!(w[1][m] <= 2.0 * w[0][m], "({},{}) metric {m}", p.alpha(), p.beta());
            }
            assert!(series.last().unwrap()[m] < series[0][m]);
        }
    }
}

#[test]
fn residual_sum_stays_bounded() {
    for p in grid_params() {
        let sum = |n: u64| {
            let (_, t) = build_tables(&p, n).unwrap();
            t.r()[..n as usize].iter().sum::<f64>().abs()
        };
        let fitted = [16, 32, 64, 128].into_iter().map(sum).fold(0.0, f64::max);
        for &n in &default_grid() {
            let s = sum(n);
            assert!(s <= 2.0 * fitted, "({},{}) n={n}: {s} vs {fitted}", p.alpha(), p.beta());
        }
    }
}

#[test]
fn residuals_are_order_one_over_n_for_bounded_densities() {
    for p in grid_params().filter(|p| p.alpha() >= 1.0 && p.beta() >= 1.0) {
        let c: Vec<f64> = default_grid()
            .iter()
            .map(|&n| {
                let (_, t) = build_tables(&p, n).unwrap();
                n as f64 * t.r().iter().fold(0.0_f64, |m, r| m.max(r.abs()))
            })
            .collect();
        let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi <= 1.5 * lo, "({},{}): {c:?}", p.alpha(), p.beta());
    }
}

#[test]
fn lemma_probes_are_stable() {
    for p in grid_params() {
        let l1 = (probe_lemma_l1(&p, 1 << 10).unwrap(), probe_lemma_l1(&p, 1 << 14).unwrap());
        let l2 = (probe_lemma_l2(&p, 1 << 10).unwrap(), probe_lemma_l2(&p, 1 << 14).unwrap());
        for (name, (a, b)) in [("L1", l1), ("L2", l2)] {
            assert!(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0);
            assert!(a <= 3.0 * b && b <= 3.0 * a, "{name} ({},{}): {a} vs {b}", p.alpha(), p.beta());
        }
    }
}

#[test]
fn uniform_increments_are_order_n_squared() {
    let p = BetaParams::new(1.0, 1.0).unwrap();
    for &n in &default_grid() {
        let (_, t) = build_tables(&p, n).unwrap();
        let worst = t.delta_r().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let nf = n as f64;
        // ΔR = 1/(n+1) - 1/n exactly.
        assert!((worst * nf * nf - nf / (nf + 1.0)).abs() < 1e-6);
    }
}
