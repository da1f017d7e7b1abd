//! Distances between `Y_n / n` and its Beta limit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coupling::{monotone_thresholds, MonotoneCoupling, MulticolourCoupler};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Estimate};
use crate::rng::stream;
use crate::special::{beta_cdf_pair, log_beta, pdf_unchecked, BetaParams};
use crate::tables::{DiscreteLaw, KahanSum, ResidualTable};
use crate::urn::UrnParams;

/// Per-segment relative tolerance for the `ℓ_p` quadratures.
const SEGMENT_REL_TOL: f64 = 1e-10;
/// Target width of the Lévy bisection.
pub const LEVY_WIDTH: f64 = 1e-10;
/// Absolute accuracy budget of lattice CDF values.
const CDF_ACCURACY: f64 = 1e-12;

/// A distance between a discrete urn law and its limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    /// Minimal `L_p` distance, `1 <= p <= ∞`.
    Lp(f64),
    /// Kolmogorov-Smirnov.
    Ks,
    /// Lévy.
    Levy,
    /// Coupling witness for the vector `ℓ_∞` distance, `|.|_1` norm.
    VectorLinf,
}

impl Metric {
    pub const L1: Metric = Metric::Lp(1.0);
    pub const L2: Metric = Metric::Lp(2.0);
    pub const LINF: Metric = Metric::Lp(f64::INFINITY);

    /// Short name used in tables: `l1`, `l2`, `linf`, `lp<p>`, `ks`, `levy`,
    /// `vlinf`.
    pub fn name(&self) -> String {
        match *self {
            Metric::Lp(1.0) => "l1".into(),
            Metric::Lp(2.0) => "l2".into(),
            Metric::Lp(p) if p.is_infinite() => "linf".into(),
            Metric::Lp(p) => format!("lp{p}"),
            Metric::Ks => "ks".into(),
            Metric::Levy => "levy".into(),
            Metric::VectorLinf => "vlinf".into(),
        }
    }

    /// The exponent `p` for finite `ℓ_p`.
    pub fn finite_p(&self) -> Option<f64> {
        match *self {
            Metric::Lp(p) if p.is_finite() => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let metric = match t.as_str() {
            "l1" | "w1" | "wasserstein" => Metric::L1,
            "l2" => Metric::L2,
            "linf" => Metric::LINF,
            "ks" => Metric::Ks,
            "levy" => Metric::Levy,
            "vlinf" => Metric::VectorLinf,
            _ => {
                let p = t
                    .strip_prefix("lp")
                    .and_then(|rest| rest.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown metric `{s}`")))?;
                Metric::Lp(p)
            }
        };
        if let Metric::Lp(p) = metric {
            if !(p >= 1.0) {
                return Err(Error::domain("metric", format!("p = {p} is below 1")));
            }
        }
        Ok(metric)
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One computed distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub n: u64,
    pub alpha: f64,
    pub beta: f64,
    pub value: f64,
    pub error_bound: f64,
    pub method: String,
}

impl DistanceReport {
    fn new(metric: Metric, limit: &BetaParams, n: u64, value: f64, error_bound: f64, method: &str) -> Self {
        Self {
            metric,
            p: metric.finite_p(),
            n,
            alpha: limit.alpha(),
            beta: limit.beta(),
            value,
            error_bound,
            method: method.to_string(),
        }
    }
}

/// Minimal `L_p` distance between `Y_n / n` and `W`, `1 <= p <= ∞`.
pub fn minimal_lp(law: &DiscreteLaw, limit: &BetaParams, p: f64) -> Result<DistanceReport> {
    check_p(p)?;
    let c = monotone_thresholds(law, limit)?;
    minimal_lp_from_coupling(&c, p)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::domain("minimal_lp", format!("p = {p} is below 1")))
    }
}

/// [`minimal_lp`] reusing precomputed thresholds, so several `p` can share one
/// set of quantile evaluations.
///
/// The optimal coupling is the monotone one, so the distance is
/// `E|g(nW)/n - W|^p` with `g` the threshold step map. For finite `p` this is
/// integrated against the Beta density cell by cell, split at the lattice
/// point inside each cell.
pub fn minimal_lp_from_coupling(c: &MonotoneCoupling, p: f64) -> Result<DistanceReport> {
    check_p(p)?;
    let limit = c.source();
    let n = c.n();
    let nf = n as f64;
    let t = c.thresholds();
    if p.is_infinite() {
        let mut worst = 0.0_f64;
        let mut prev = 0.0;
        for (k, &tk) in t.iter().enumerate() {
            let kf = k as f64;
            worst = worst.max((kf - prev).abs()).max((kf - tk).abs());
            prev = tk;
        }
        return Ok(DistanceReport::new(
            Metric::LINF,
            limit,
            n,
            worst / nf,
            8.0 * f64::EPSILON,
            "threshold offsets",
        ));
    }
    let ln_b = log_beta(limit);
    let moments: Vec<Estimate> = (0..t.len())
        .into_par_iter()
        .map(|k| {
            let lo = if k == 0 { 0.0 } else { t[k - 1] / nf };
            let hi = if k == t.len() - 1 { 1.0 } else { t[k] / nf };
            cell_moment(limit, ln_b, lo, hi, k as f64 / nf, p)
        })
        .collect();
    let mut value = KahanSum::default();
    let mut error = 0.0;
    for m in &moments {
        value.add(m.value);
        error += m.error;
    }
    let integral = value.value();
    let dist = integral.powf(1.0 / p);
    // d(I^{1/p}) = I^{1/p - 1} dI / p, plus rounding in the sum.
    let err_i = error + (t.len() as f64) * f64::EPSILON * integral;
    let error_bound = if integral > 0.0 {
        dist * err_i / (p * integral)
    } else {
        err_i.powf(1.0 / p)
    };
    Ok(DistanceReport::new(Metric::Lp(p), limit, n, dist, error_bound, "monotone coupling, GK15 per cell"))
}

/// `∫_lo^hi |center - x|^p f(x) dx`.
fn cell_moment(limit: &BetaParams, ln_b: f64, lo: f64, hi: f64, center: f64, p: f64) -> Estimate {
    let mut out = Estimate::default();
    if lo < center && center < hi {
        out += piece_moment(limit, ln_b, lo, center, center, p);
        out += piece_moment(limit, ln_b, center, hi, center, p);
    } else {
        out += piece_moment(limit, ln_b, lo, hi, center, p);
    }
    out
}

fn piece_moment(limit: &BetaParams, ln_b: f64, a: f64, b: f64, center: f64, p: f64) -> Estimate {
    if !(a < b) {
        return Estimate::default();
    }
    let (al, be) = (limit.alpha(), limit.beta());
    if a == 0.0 && al < 1.0 {
        // x = b v^(1/alpha) absorbs x^(alpha - 1).
        let scale = (al * b.ln() - al.ln() - ln_b).exp();
        let e = integrate(
            |v: f64| {
                let x = b * v.powf(1.0 / al);
                (center - x).abs().powf(p) * ((be - 1.0) * (-x).ln_1p()).exp()
            },
            0.0,
            1.0,
            0.0,
            SEGMENT_REL_TOL,
        );
        return scaled(e, scale);
    }
    if b == 1.0 && be < 1.0 {
        let w = 1.0 - a;
        let scale = (be * w.ln() - be.ln() - ln_b).exp();
        let e = integrate(
            |v: f64| {
                let y = w * v.powf(1.0 / be);
                let x = 1.0 - y;
                (center - x).abs().powf(p) * ((al - 1.0) * x.ln()).exp()
            },
            0.0,
            1.0,
            0.0,
            SEGMENT_REL_TOL,
        );
        return scaled(e, scale);
    }
    integrate(
        |x: f64| (center - x).abs().powf(p) * pdf_unchecked(limit, ln_b, x),
        a,
        b,
        0.0,
        SEGMENT_REL_TOL,
    )
}

fn scaled(e: Estimate, s: f64) -> Estimate {
    Estimate {
        value: e.value * s,
        error: e.error * s,
    }
}

/// `ℓ_1` as `∫_0^1 |F_{Y/n}(x) - F_W(x)| dx`, integrated cell by cell and
/// split where the Beta CDF crosses the step. Uses only the CDF, so it is an
/// independent check on [`minimal_lp`] with `p = 1`.
pub fn wasserstein_l1_via_cdf(law: &DiscreteLaw, limit: &BetaParams) -> Result<DistanceReport> {
    let n = law.n();
    if n == 0 {
        return Err(Error::domain("wasserstein_l1_via_cdf", "n must be at least 1"));
    }
    let nf = n as f64;
    let cells: Vec<Result<Estimate>> = (0..n as usize)
        .into_par_iter()
        .map(|k| {
            let (cum, tail) = (law.cum()[k], law.tail()[k]);
            let gap = |x: f64| -> f64 {
                let (c, s) = beta_cdf_pair(limit, x).expect("finite abscissa");
                if cum <= 0.5 {
                    cum - c
                } else {
                    s - tail
                }
            };
            let a = k as f64 / nf;
            let b = (k as f64 + 1.0) / nf;
            let (ga, gb) = (gap(a), gap(b));
            let mut out = Estimate::default();
            let mut piece = |lo: f64, hi: f64| {
                out += integrate(|x| gap(x).abs(), lo, hi, 0.0, SEGMENT_REL_TOL);
            };
            if ga > 0.0 && gb < 0.0 {
                let x = crossing(&gap, a, b, ga, gb)?;
                piece(a, x);
                piece(x, b);
            } else {
                piece(a, b);
            }
            Ok(out)
        })
        .collect();
    let mut value = KahanSum::default();
    let mut error = 0.0;
    for c in cells {
        let c = c?;
        value.add(c.value);
        error += c.error;
    }
    let v = value.value();
    let error_bound = error + CDF_ACCURACY.min(v);
    Ok(DistanceReport::new(Metric::L1, limit, n, v, error_bound, "CDF difference, GK15 per cell"))
}

/// Root of a decreasing `gap` on `[a, b]` by the Illinois method.
fn crossing(gap: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, fa0: f64, fb0: f64) -> Result<f64> {
    // Raw values at the bracket ends, and the weighted ones the method uses.
    let (mut ra, mut rb) = (fa0, fb0);
    let (mut fa, mut fb) = (fa0, fb0);
    let mut side = 0;
    for _ in 0..200 {
        let x = (a * fb - b * fa) / (fb - fa);
        if !(x > a && x < b) || b - a <= 4.0 * f64::EPSILON * b {
            return Ok(if ra.abs() <= rb.abs() { a } else { b });
        }
        let fx = gap(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            a = x;
            fa = fx;
            ra = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            rb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NoConvergence {
        op: "cdf crossing",
        iterations: 200,
    })
}

/// Kolmogorov-Smirnov distance `sup_x |F_{Y/n}(x) - F_W(x)|`.
///
/// On `[k/n, (k+1)/n)` the step sits at `P_k` while the Beta CDF runs from
/// `Q_k` to `Q_{k+1}`, so the sup is `max_k max(|R_k|, |R_k - ΔQ_{k+1}|)`.
pub fn ks_distance(law: &DiscreteLaw, limit: &BetaParams) -> Result<DistanceReport> {
    let table = ResidualTable::new(law, limit)?;
    Ok(ks_from_table(&table, limit))
}

/// [`ks_distance`] on an already built table.
pub fn ks_from_table(table: &ResidualTable, limit: &BetaParams) -> DistanceReport {
    let r = table.r();
    let dq = table.delta_q();
    let mut worst = 0.0_f64;
    for k in 0..r.len() {
        worst = worst.max(r[k].abs());
        if k < dq.len() {
            worst = worst.max((r[k] - dq[k]).abs());
        }
    }
    DistanceReport::new(Metric::Ks, limit, table.n(), worst, 2.0 * CDF_ACCURACY, "residual table")
}

/// Lévy distance between `Y_n / n` and `W`.
///
/// The step CDF only needs checking at its jumps: `ε` is feasible iff for
/// every `k`, `P_k <= F(k/n + ε) + ε` and `F((k+1)/n - ε) - ε <= P_k`.
/// Feasibility is monotone in `ε`, so bisect on `[0, d_KS]`.
pub fn levy_distance(law: &DiscreteLaw, limit: &BetaParams) -> Result<DistanceReport> {
    let ks = ks_distance(law, limit)?.value;
    levy_with_bracket(law, limit, ks)
}

/// [`levy_distance`] with a known Kolmogorov-Smirnov value as upper bracket.
pub fn levy_with_bracket(law: &DiscreteLaw, limit: &BetaParams, ks: f64) -> Result<DistanceReport> {
    let n = law.n();
    let nf = n as f64;
    let (mut lo, mut hi) = (0.0, ks);
    if levy_feasible(law, limit, nf, 0.0)? {
        hi = 0.0;
    }
    while hi - lo > LEVY_WIDTH {
        let mid = 0.5 * (lo + hi);
        if levy_feasible(law, limit, nf, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(DistanceReport::new(Metric::Levy, limit, n, hi, (hi - lo) + CDF_ACCURACY, "bisection on jump points"))
}

fn levy_feasible(law: &DiscreteLaw, limit: &BetaParams, nf: f64, eps: f64) -> Result<bool> {
    let n = law.n() as usize;
    let feasible = (0..=n).into_par_iter().try_fold(
        || true,
        |ok, k| -> Result<bool> {
            if !ok {
                return Ok(false);
            }
            let (cum, tail) = (law.cum()[k], law.tail()[k]);
            let kf = k as f64;
            // P_k <= F(k/n + eps) + eps, compared on the side where both are small.
            let (c, s) = beta_cdf_pair(limit, kf / nf + eps)?;
            let upper = if cum <= 0.5 { cum - c } else { s - tail };
            if upper > eps {
                return Ok(false);
            }
            if k < n {
                let (c, s) = beta_cdf_pair(limit, (kf + 1.0) / nf - eps)?;
                let lower = if cum <= 0.5 { c - cum } else { tail - s };
                if lower > eps {
                    return Ok(false);
                }
            }
            Ok(true)
        },
    );
    feasible.try_reduce(|| true, |a, b| Ok(a && b))
}

/// Largest `|Y - nW|_1` seen over `replicates` draws of the recursive
/// coupling. An upper witness for the vector `ℓ_∞` distance, not its value.
///
/// Replicate `r` uses its own stream derived from one draw of `rng`, so the
/// result does not depend on thread scheduling.
pub fn vector_linf_mc<R: Rng + ?Sized>(p: &UrnParams, n: u64, replicates: usize, rng: &mut R) -> Result<DistanceReport> {
    if replicates == 0 {
        return Err(Error::param("replicates", "must be at least 1"));
    }
    let coupler = MulticolourCoupler::new(p)?;
    let seed: u64 = rng.random();
    let worst = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut g = stream(seed, r as u64);
            coupler.sample(n, &mut g).map(|s| s.deviation)
        })
        .try_reduce(|| 0.0_f64, |a, b| Ok(a.max(b)))?;
    let marginal = coupler.params().marginal(0)?;
    Ok(DistanceReport::new(
        Metric::VectorLinf,
        &marginal,
        n,
        worst,
        0.0,
        &format!("max over {replicates} coupled draws"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tables::build_tables;

    fn bp(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    fn law(a: f64, b: f64, n: u64) -> DiscreteLaw {
        build_tables(&bp(a, b), n).unwrap().0
    }

    fn uniform_l1(n: u64) -> f64 {
        let n = n as f64;
        (2.0 * n + 1.0) / (6.0 * n * (n + 1.0))
    }

    #[test]
    fn metric_names_roundtrip() {
        for m in [Metric::L1, Metric::L2, Metric::LINF, Metric::Lp(3.5), Metric::Ks, Metric::Levy, Metric::VectorLinf] {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("lp0.5".parse::<Metric>().is_err());
        assert!("tv".parse::<Metric>().is_err());
    }

    #[test]
    fn uniform_l1_closed_form() {
        for n in [1_u64, 2, 3, 99, 1000] {
            let l = law(1.0, 1.0, n);
            let q = minimal_lp(&l, &bp(1.0, 1.0), 1.0).unwrap();
            let c = wasserstein_l1_via_cdf(&l, &bp(1.0, 1.0)).unwrap();
            assert!((q.value - uniform_l1(n)).abs() < 1e-12, "n={n}: {q:?}");
            assert!((c.value - uniform_l1(n)).abs() < 1e-12, "n={n}: {c:?}");
            assert!(q.error_bound <= 1e-8);
        }
        assert!((uniform_l1(2) - 5.0 / 36.0).abs() < 1e-16);
        assert!((uniform_l1(1) - 0.25).abs() < 1e-16);
    }

    #[test]
    fn uniform_ks() {
        for n in [1_u64, 2, 99, 10_000] {
            let v = ks_distance(&law(1.0, 1.0, n), &bp(1.0, 1.0)).unwrap().value;
            assert!((v - 1.0 / (n as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn routes_agree_with_singular_densities() {
        for (a, b) in [(0.5, 0.5), (0.5, 1.5), (3.0, 0.5), (1.5, 2.0)] {
            for n in [1_u64, 7, 256] {
                let l = law(a, b, n);
                let q = minimal_lp(&l, &bp(a, b), 1.0).unwrap();
                let c = wasserstein_l1_via_cdf(&l, &bp(a, b)).unwrap();
                assert!((q.value - c.value).abs() < 1e-10, "({a},{b}) n={n}: {} vs {}", q.value, c.value);
                assert!(q.error_bound <= 1e-8, "{q:?}");
            }
        }
    }

    #[test]
    fn lp_monotone_in_p() {
        let l = law(2.0, 3.0, 50);
        let c = monotone_thresholds(&l, &bp(2.0, 3.0)).unwrap();
        let mut last = 0.0;
        for p in [1.0, 1.5, 2.0, 4.0, 10.0, f64::INFINITY] {
            let v = minimal_lp_from_coupling(&c, p).unwrap().value;
            assert!(v >= last * (1.0 - 1e-9), "p={p}");
            last = v;
        }
    }

    #[test]
    fn linf_uniform() {
        // Offsets (n - k)/(n + 1) and the first cell reach n/(n + 1).
        for n in [1_u64, 4, 100] {
            let v = minimal_lp(&law(1.0, 1.0, n), &bp(1.0, 1.0), f64::INFINITY).unwrap().value;
            let nf = n as f64;
            assert!((v - 1.0 / (nf + 1.0)).abs() < 1e-13, "n={n}: {v}");
        }
    }

    #[test]
    fn rejects_small_p() {
        assert!(minimal_lp(&law(1.0, 1.0, 3), &bp(1.0, 1.0), 0.5).is_err());
    }

    #[test]
    fn levy_below_ks_and_uniform_scale() {
        for (a, b) in [(1.0, 1.0), (0.5, 1.5), (2.0, 3.0)] {
            let l = law(a, b, 300);
            let ks = ks_distance(&l, &bp(a, b)).unwrap().value;
            let lv = levy_distance(&l, &bp(a, b)).unwrap();
            assert!(lv.value <= ks + 1e-12);
            assert!(lv.value > 0.0);
            assert!(lv.error_bound <= LEVY_WIDTH + 2e-12);
        }
    }

    #[test]
    fn levy_uniform_n1() {
        // Steps at 1/2 on [0,1) against F(x) = x: the binding constraint is
        // 1/2 <= eps + eps, giving eps = 1/4.
        let v = levy_distance(&law(1.0, 1.0, 1), &bp(1.0, 1.0)).unwrap().value;
        assert!((v - 0.25).abs() < 2e-10, "{v}");
    }

    #[test]
    fn vector_witness() {
        let p = UrnParams::two_colour(1.0, 1.0).unwrap();
        let mut rng = seeded(2);
        let r = vector_linf_mc(&p, 256, 500, &mut rng).unwrap();
        // Two colours: deviation is twice the scalar gap, which is below 1.
        assert!(r.value < 2.0);
        let zero = vector_linf_mc(&p, 0, 10, &mut rng).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(vector_linf_mc(&p, 10, 0, &mut rng).is_err());
    }

    #[test]
    fn vector_witness_is_reproducible() {
        let p = UrnParams::new(1.0, vec![1.0, 1.0, 1.0]).unwrap();
        let a = vector_linf_mc(&p, 128, 200, &mut seeded(9)).unwrap();
        let b = vector_linf_mc(&p, 128, 200, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_json_shape() {
        let r = ks_distance(&law(1.0, 1.0, 4), &bp(1.0, 1.0)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["metric"], "ks");
        assert!(v.get("p").is_none());
        let r = minimal_lp(&law(1.0, 1.0, 4), &bp(1.0, 1.0), 2.0).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: DistanceReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
