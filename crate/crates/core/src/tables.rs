//! Lattice tables for a two-colour urn against its Beta limit.
//!
//! With `Y` the number of draws of the tracked colour after `n` steps and
//! `W` the limiting proportion:
//!
//! * `P[k] = P(Y <= k)`, the discrete CDF,
//! * `Q[k] = P(W <= k/n)`, the limit CDF on the lattice,
//! * `R[k] = P[k] - Q[k]`, the residual.
//!
//! Everything downstream (Kolmogorov-Smirnov, thresholds of the monotone
//! coupling, the lemma probes) reads from these tables.

use std::io::Write;

use crate::error::{Error, Result};
use crate::special::{beta_cdf_pair, log_beta, pdf_unchecked, BetaParams};

/// Relative slack used when comparing lattice CDF values in
/// [`min_k_lemma_l3`]. Each comparison is made on whichever side (CDF or
/// tail) is below 1/2, where both values carry relative accuracy.
pub const SANDWICH_TOL: f64 = 1e-12;

/// Compensated (Neumaier) running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Law of `Y_{n,1}` on `{0, ..., n}` together with its Beta limit.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    n: u64,
    probs: Vec<f64>,
    cum: Vec<f64>,
    tail: Vec<f64>,
    params: BetaParams,
}

impl DiscreteLaw {
    /// Build from log-probabilities. Cumulative sums run bottom-up and tail
    /// sums top-down, both compensated, so each is accurate where it is small.
    pub fn from_log_probs(log_probs: &[f64], params: BetaParams) -> Result<Self> {
        if log_probs.is_empty() {
            return Err(Error::Contract("a law needs at least one atom".into()));
        }
        let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Contract("non-finite probability in law".into()));
        }
        let n = (probs.len() - 1) as u64;
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = KahanSum::default();
        for &p in &probs {
            acc.add(p);
            cum.push(acc.value());
        }
        let mut tail = vec![0.0; probs.len()];
        let mut acc = KahanSum::default();
        for k in (0..probs.len()).rev() {
            tail[k] = acc.value();
            acc.add(probs[k]);
        }
        Ok(Self {
            n,
            probs,
            cum,
            tail,
            params,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `p[k] = P(Y = k)`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P[k] = P(Y <= k)`.
    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    /// `P(Y > k)`, computed from the top.
    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    /// The Beta limit the law was built for.
    pub fn params(&self) -> &BetaParams {
        &self.params
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().copied().collect::<KahanSum>().value()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .collect::<KahanSum>()
            .value()
    }

    /// Left-continuous generalized inverse: the smallest `k` with `P[k] >= u`.
    pub fn quantile_index(&self, u: f64) -> u64 {
        let k = self.cum.partition_point(|&c| c < u);
        k.min(self.n as usize) as u64
    }
}

/// `Q`, `R` and the first differences of `P`, `Q`, `R` on the lattice `k/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTable {
    n: u64,
    q: Vec<f64>,
    q_upper: Vec<f64>,
    r: Vec<f64>,
    delta_r: Vec<f64>,
    delta_q: Vec<f64>,
}

impl ResidualTable {
    /// Tables of `law` against the Beta law `limit`.
    pub fn new(law: &DiscreteLaw, limit: &BetaParams) -> Result<Self> {
        let n = law.n();
        if n == 0 {
            return Err(Error::domain("residual table", "n must be at least 1"));
        }
        let nf = n as f64;
        let len = n as usize + 1;
        let mut q = Vec::with_capacity(len);
        let mut q_upper = Vec::with_capacity(len);
        for k in 0..len {
            let (c, s) = beta_cdf_pair(limit, k as f64 / nf)?;
            q.push(c);
            q_upper.push(s);
        }
        // Subtract on whichever side of 1/2 the values are small, so
        // residuals near the top keep their relative accuracy.
        let r: Vec<f64> = (0..len)
            .map(|k| {
                if law.cum[k] <= 0.5 {
                    law.cum[k] - q[k]
                } else {
                    q_upper[k] - law.tail[k]
                }
            })
            .collect();
        let delta_q: Vec<f64> = (1..len)
            .map(|k| {
                if q[k] <= 0.5 {
                    q[k] - q[k - 1]
                } else {
                    q_upper[k - 1] - q_upper[k]
                }
            })
            .collect();
        let delta_r: Vec<f64> = (1..len).map(|k| law.probs[k] - delta_q[k - 1]).collect();
        Ok(Self {
            n,
            q,
            q_upper,
            r,
            delta_r,
            delta_q,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `Q[k] = P(W <= k/n)` for `k = 0..=n`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `P(W > k/n)` for `k = 0..=n`.
    pub fn q_upper(&self) -> &[f64] {
        &self.q_upper
    }

    /// `R[k] = P[k] - Q[k]` for `k = 0..=n`.
    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// `ΔR[k] = R[k] - R[k-1]` for `k = 1..=n`, stored at index `k - 1`.
    pub fn delta_r(&self) -> &[f64] {
        &self.delta_r
    }

    /// `ΔQ[k] = Q[k] - Q[k-1]` for `k = 1..=n`, stored at index `k - 1`.
    pub fn delta_q(&self) -> &[f64] {
        &self.delta_q
    }

    /// Largest normalized increment `|ΔR[k]| n^α k^(2-α)` over
    /// `1 <= k <= 3n/4`, and the mirrored quantity with β and `n - k + 1` over
    /// `n/4 <= k <= n`.
    pub fn lemma_l1_constant(&self, limit: &BetaParams) -> f64 {
        let n = self.n as f64;
        let (a, b) = (limit.alpha(), limit.beta());
        let mut worst = 0.0_f64;
        for k in 1..=self.n {
            let kf = k as f64;
            let dr = self.delta_r[k as usize - 1].abs();
            if 4 * k <= 3 * self.n {
                worst = worst.max(dr * n.powf(a) * kf.powf(2.0 - a));
            }
            if 4 * k >= self.n {
                worst = worst.max(dr * n.powf(b) * (n - kf + 1.0).powf(2.0 - b));
            }
        }
        worst
    }

    /// Largest `|R[k]|` divided by its envelope: `(k+1)^(α-1) n^-α` on
    /// `k <= n/2`, `(n-k+1)^(β-1) n^-β` on `k >= n/2`, and `f(k/n)/n` on
    /// `1 <= k <= n-1`.
    pub fn lemma_l2_constant(&self, limit: &BetaParams) -> f64 {
        let n = self.n as f64;
        let (a, b) = (limit.alpha(), limit.beta());
        let ln_b = log_beta(limit);
        let mut worst = 0.0_f64;
        for k in 0..=self.n {
            let kf = k as f64;
            let r = self.r[k as usize].abs();
            if 2 * k <= self.n {
                worst = worst.max(r * n.powf(a) / (kf + 1.0).powf(a - 1.0));
            }
            if 2 * k >= self.n {
                worst = worst.max(r * n.powf(b) / (n - kf + 1.0).powf(b - 1.0));
            }
            if k >= 1 && k < self.n {
                let f = pdf_unchecked(limit, ln_b, kf / n);
                worst = worst.max(r * n / f);
            }
        }
        worst
    }

    /// Smallest `K >= 0` with `Q[k-K] <= P[k] <= Q[k+K]` for all `0 <= k <= n`,
    /// where `Q[j]` is 0 below the lattice and 1 above it.
    pub fn min_sandwich_k(&self, law: &DiscreteLaw) -> u64 {
        let n = self.n as i64;
        let mut k_max = 0_i64;
        for k in 0..=n {
            let ku = k as usize;
            let (p, p_tail) = (law.cum[ku], law.tail[ku]);
            // Upper side: P[k] <= Q[k+K].
            let mut kk = k_max;
            while !self.cdf_at_least(k + kk, p, p_tail) {
                kk += 1;
            }
            k_max = k_max.max(kk);
            // Lower side: Q[k-K] <= P[k].
            let mut kk = k_max;
            while !self.cdf_at_most(k - kk, p, p_tail) {
                kk += 1;
            }
            k_max = k_max.max(kk);
        }
        // k_max only ever grows, so re-check the final value everywhere.
        debug_assert!((0..=n).all(|k| {
            let ku = k as usize;
            self.cdf_at_least(k + k_max, law.cum[ku], law.tail[ku])
                && self.cdf_at_most(k - k_max, law.cum[ku], law.tail[ku])
        }));
        k_max as u64
    }

    /// `Q[j] >= P`, compared on the accurate side.
    fn cdf_at_least(&self, j: i64, p: f64, p_tail: f64) -> bool {
        if j >= self.n as i64 {
            return true;
        }
        if j < 0 {
            return p == 0.0;
        }
        let j = j as usize;
        if p <= 0.5 {
            self.q[j] >= p * (1.0 - SANDWICH_TOL)
        } else {
            self.q_upper[j] <= p_tail * (1.0 + SANDWICH_TOL)
        }
    }

    /// `Q[j] <= P`, compared on the accurate side.
    fn cdf_at_most(&self, j: i64, p: f64, p_tail: f64) -> bool {
        if j <= 0 {
            return true;
        }
        if j >= self.n as i64 {
            return p_tail == 0.0;
        }
        let j = j as usize;
        if p <= 0.5 {
            self.q[j] <= p * (1.0 + SANDWICH_TOL)
        } else {
            self.q_upper[j] >= p_tail * (1.0 - SANDWICH_TOL)
        }
    }

    /// CSV with columns `k,p,P,Q,R,dR`; `dR` is empty at `k = 0`.
    pub fn write_csv<W: Write>(&self, law: &DiscreteLaw, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,p,P,Q,R,dR")?;
        for k in 0..=self.n as usize {
            let dr = if k == 0 {
                String::new()
            } else {
                self.delta_r[k - 1].to_string()
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                k, law.probs[k], law.cum[k], self.q[k], self.r[k], dr
            )?;
        }
        Ok(())
    }
}

/// Exact law of `Y_{n,1}` for the two-colour urn with initial weights
/// `(alpha, beta)` and unit replacement, plus its residual tables.
pub fn build_tables(p: &BetaParams, n: u64) -> Result<(DiscreteLaw, ResidualTable)> {
    if n == 0 {
        return Err(Error::domain("build_tables", "n must be at least 1"));
    }
    let law = crate::urn::beta_binomial_law(p, n)?;
    let table = ResidualTable::new(&law, p)?;
    Ok((law, table))
}

/// Empirical constant of the increment bound `|ΔR[k]| <= C k^(α-2) / n^α`
/// (and its mirror image near `k = n`).
pub fn probe_lemma_l1(p: &BetaParams, n: u64) -> Result<f64> {
    if n < 4 {
        return Err(Error::domain("probe_lemma_l1", format!("n = {n} < 4")));
    }
    let (_, t) = build_tables(p, n)?;
    Ok(t.lemma_l1_constant(p))
}

/// Empirical constant of the residual envelopes `|R[k]| <= C (k+1)^(α-1) n^-α`,
/// its mirror, and `|R[k]| <= C f(k/n) / n`.
pub fn probe_lemma_l2(p: &BetaParams, n: u64) -> Result<f64> {
    if n < 4 {
        return Err(Error::domain("probe_lemma_l2", format!("n = {n} < 4")));
    }
    let (_, t) = build_tables(p, n)?;
    Ok(t.lemma_l2_constant(p))
}

/// Smallest integer `K` with `Q[k-K] <= P[k] <= Q[k+K]` for every `k`.
pub fn min_k_lemma_l3(p: &BetaParams, n: u64) -> Result<u64> {
    let (law, t) = build_tables(p, n)?;
    Ok(t.min_sandwich_k(&law))
}
