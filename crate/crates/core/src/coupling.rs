//! Couplings of urn draw counts with their Dirichlet limit.
//!
//! The two-colour coupling is the monotone one: thresholds
//! `t_0 < ... < t_n = n` are placed so that `P(nW <= t_k) = P(Y <= k)`, and a
//! limit draw `W` is mapped to the `k` whose cell `(t_{k-1}, t_k]` contains
//! `nW`. For more colours the first colour is coupled against all the others
//! merged, and the remaining colours are coupled recursively given how many
//! draws they received.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling::sample_beta;
use crate::special::{beta_cdf_pair, beta_quantile, beta_quantile_upper, BetaParams};
use crate::tables::{DiscreteLaw, KahanSum};
use crate::urn::{beta_binomial_law, log_pmf_two_colour, UrnParams};

/// Thresholds of the monotone coupling between `Y_{n,1}` and `nW`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCoupling {
    n: u64,
    thresholds: Vec<f64>,
    source: BetaParams,
}

impl MonotoneCoupling {
    pub fn n(&self) -> u64 {
        self.n
    }

    /// `t_0, ..., t_n` on the scale of `nW`; `t_n = n`.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn source(&self) -> &BetaParams {
        &self.source
    }

    /// The step map `g`: the `k` with `t in (t_{k-1}, t_k]`, taking
    /// `t_{-1} = 0` and sending `t <= 0` to 0.
    pub fn assign(&self, t: f64) -> u64 {
        let k = self.thresholds.partition_point(|&tk| tk < t);
        k.min(self.n as usize) as u64
    }

    /// `max_k |t_k - k|`.
    pub fn max_offset(&self) -> f64 {
        self.thresholds
            .iter()
            .enumerate()
            .fold(0.0_f64, |m, (k, &t)| m.max((t - k as f64).abs()))
    }

    /// `P(g(nW) = k)` for every `k`, from differences of the Beta CDF at the
    /// thresholds. Reproduces the urn law when the thresholds are right.
    pub fn pushforward(&self) -> Result<Vec<f64>> {
        let n = self.n as f64;
        let mut prev = (0.0, 1.0);
        let mut out = Vec::with_capacity(self.thresholds.len());
        for &t in &self.thresholds {
            let cur = beta_cdf_pair(&self.source, t / n)?;
            // Difference on the side where both values are small.
            out.push(if cur.0 <= 0.5 { cur.0 - prev.0 } else { prev.1 - cur.1 });
            prev = cur;
        }
        Ok(out)
    }
}

/// Place `t_k = n · F_W^{-1}(P(Y <= k))`.
pub fn monotone_thresholds(law: &DiscreteLaw, limit: &BetaParams) -> Result<MonotoneCoupling> {
    let n = law.n();
    if n == 0 {
        return Err(Error::domain("monotone_thresholds", "n must be at least 1"));
    }
    let nf = n as f64;
    let mut thresholds = Vec::with_capacity(n as usize + 1);
    for k in 0..n as usize {
        let (cum, tail) = (law.cum()[k], law.tail()[k]);
        let x = if cum <= 0.5 {
            beta_quantile(limit, cum)?
        } else {
            beta_quantile_upper(limit, tail)?
        };
        thresholds.push(nf * x);
    }
    thresholds.push(nf);
    if let Some(k) = thresholds.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(Error::Contract(format!(
            "coupling thresholds not strictly increasing at k = {k} (n = {n})"
        )));
    }
    Ok(MonotoneCoupling {
        n,
        thresholds,
        source: *limit,
    })
}

/// Urn draw counts paired with a limit draw.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSample {
    pub y: Vec<u64>,
    pub w: Vec<f64>,
    /// `|Y - nW| = sum_i |Y_i - n W_i|`.
    pub deviation: f64,
}

impl CoupledSample {
    fn new(y: Vec<u64>, w: Vec<f64>) -> Self {
        let n: u64 = y.iter().sum();
        let nf = n as f64;
        let deviation = y.iter().zip(&w).map(|(&yi, &wi)| (yi as f64 - nf * wi).abs()).sum();
        Self { y, w, deviation }
    }

    pub fn n(&self) -> u64 {
        self.y.iter().sum()
    }

    /// `|Y_1 - n W_1|` for the first colour alone.
    pub fn first_gap(&self) -> f64 {
        (self.y[0] as f64 - self.n() as f64 * self.w[0]).abs()
    }
}

/// Draw `W ~ Beta` and set `Y_1 = g(nW)`.
pub fn couple_two_colour<R: Rng + ?Sized>(c: &MonotoneCoupling, rng: &mut R) -> CoupledSample {
    let w = sample_beta(&c.source, rng);
    let y = c.assign(c.n as f64 * w);
    CoupledSample::new(vec![y, c.n - y], vec![w, 1.0 - w])
}

/// Recursive coupling for any number of colours.
///
/// Thresholds for the top-level split are memoized per `n`; the inner levels
/// only ever need one threshold lookup per draw, which is done directly.
#[derive(Debug)]
pub struct MulticolourCoupler {
    params: UrnParams,
    top: BetaParams,
    cache: RwLock<HashMap<u64, Arc<MonotoneCoupling>>>,
}

impl MulticolourCoupler {
    pub fn new(params: &UrnParams) -> Result<Self> {
        let params = params.normalized();
        let top = params.marginal(0)?;
        Ok(Self {
            params,
            top,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &UrnParams {
        &self.params
    }

    /// Top-level monotone coupling at time `n`, built once and shared.
    pub fn top_coupling(&self, n: u64) -> Result<Arc<MonotoneCoupling>> {
        if let Some(c) = self.cache.read().expect("coupling cache poisoned").get(&n) {
            return Ok(Arc::clone(c));
        }
        let law = beta_binomial_law(&self.top, n)?;
        let built = Arc::new(monotone_thresholds(&law, &self.top)?);
        let mut cache = self.cache.write().expect("coupling cache poisoned");
        Ok(Arc::clone(cache.entry(n).or_insert(built)))
    }

    /// One coupled pair `(Y_n, W)` with `W ~ Dir(x0)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Result<CoupledSample> {
        let x0 = self.params.x0();
        let (y1, z) = if n == 0 {
            (0, sample_beta(&self.top, rng))
        } else {
            let c = self.top_coupling(n)?;
            let z = sample_beta(&self.top, rng);
            (c.assign(n as f64 * z), z)
        };
        let mut y = vec![y1];
        let mut w = vec![z];
        couple_rest(&x0[1..], n - y1, 1.0 - z, &mut y, &mut w, rng)?;
        Ok(CoupledSample::new(y, w))
    }
}

/// Couple the colours `x0` (already conditioned to receive `m` draws) and
/// append their counts and limit proportions, scaled by `mass`.
fn couple_rest<R: Rng + ?Sized>(
    x0: &[f64],
    m: u64,
    mass: f64,
    y: &mut Vec<u64>,
    w: &mut Vec<f64>,
    rng: &mut R,
) -> Result<()> {
    if x0.len() == 1 {
        y.push(m);
        w.push(mass);
        return Ok(());
    }
    let rest: f64 = x0[1..].iter().sum();
    let split = BetaParams::new(x0[0], rest)?;
    let u: f64 = rng.random();
    let z = beta_quantile(&split, u)?;
    let k = two_colour_quantile(&split, m, u)?;
    y.push(k);
    w.push(mass * z);
    couple_rest(&x0[1..], m - k, mass * (1.0 - z), y, w, rng)
}

/// Smallest `k` with `P(Y_{m,1} <= k) >= u`, walking the pmf recurrence
/// outward from whichever end `u` is closer to.
fn two_colour_quantile(p: &BetaParams, m: u64, u: f64) -> Result<u64> {
    if m == 0 {
        return Ok(0);
    }
    let (a, b) = (p.alpha(), p.beta());
    let mf = m as f64;
    if u <= 0.5 {
        let lp = log_pmf_two_colour(p, m, 0);
        if lp < -700.0 {
            return Ok(beta_binomial_law(p, m)?.quantile_index(u));
        }
        let mut prob = lp.exp();
        let mut cum = KahanSum::default();
        cum.add(prob);
        let mut k = 0_u64;
        while cum.value() < u && k < m {
            let kf = k as f64;
            prob *= (mf - kf) / (kf + 1.0) * (a + kf) / (b + mf - kf - 1.0);
            k += 1;
            cum.add(prob);
        }
        Ok(k)
    } else {
        // P(Y <= k) >= u  <=>  P(Y > k) <= 1 - u.
        let s = 1.0 - u;
        let lp = log_pmf_two_colour(p, m, m);
        if lp < -700.0 {
            return Ok(beta_binomial_law(p, m)?.quantile_index(u));
        }
        let mut prob = lp.exp();
        let mut tail = KahanSum::default();
        let mut k = m;
        // tail holds P(Y > k); step down while P(Y > k - 1) <= s.
        while k > 0 && tail.value() + prob <= s {
            tail.add(prob);
            let kf = k as f64;
            prob *= kf / (mf - kf + 1.0) * (b + mf - kf) / (a + kf - 1.0);
            k -= 1;
        }
        Ok(k)
    }
}

/// Coupled draw for any `q >= 2`; for two colours this is exactly
/// [`couple_two_colour`] on the urn's monotone coupling.
///
/// Builds a fresh [`MulticolourCoupler`] each call. For repeated draws keep
/// one coupler and call [`MulticolourCoupler::sample`].
pub fn couple_multicolour<R: Rng + ?Sized>(p: &UrnParams, n: u64, rng: &mut R) -> Result<CoupledSample> {
    MulticolourCoupler::new(p)?.sample(n, rng)
}

/// `P(1/4 < frac(nW) < 3/4) = sum_k [F((k+3/4)/n) - F((k+1/4)/n)]`.
pub fn frac_diagnostic(limit: &BetaParams, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("frac_diagnostic", "n must be at least 1"));
    }
    let nf = n as f64;
    let mut acc = KahanSum::default();
    for k in 0..n {
        let kf = k as f64;
        let lo = beta_cdf_pair(limit, (kf + 0.25) / nf)?;
        let hi = beta_cdf_pair(limit, (kf + 0.75) / nf)?;
        acc.add(if hi.0 <= 0.5 { hi.0 - lo.0 } else { lo.1 - hi.1 });
    }
    Ok(acc.value())
}

/// Lower bound `(1/4) P(1/4 < frac(nW) < 3/4)` on the unscaled `ℓ_1(Y_n, nW)`.
///
/// Any coupling of an integer variable with `nW` is at least `1/4` apart on
/// that event.
pub fn l1_lower_bound(limit: &BetaParams, n: u64) -> Result<f64> {
    Ok(0.25 * frac_diagnostic(limit, n)?)
}

/// CSV of coupled samples: `replicate,n,Y1..Yq,W1..Wq,deviation`.
pub fn write_samples_csv<W: Write>(samples: &[CoupledSample], mut out: W) -> std::io::Result<()> {
    let q = samples.first().map_or(2, |s| s.y.len());
    let mut header = vec!["replicate".to_string(), "n".to_string()];
    header.extend((1..=q).map(|i| format!("Y{i}")));
    header.extend((1..=q).map(|i| format!("W{i}")));
    header.push("deviation".into());
    writeln!(out, "{}", header.join(","))?;
    for (r, s) in samples.iter().enumerate() {
        let mut row = vec![r.to_string(), s.n().to_string()];
        row.extend(s.y.iter().map(|v| v.to_string()));
        row.extend(s.w.iter().map(|v| v.to_string()));
        row.push(s.deviation.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
