//! The Pólya urn chain: parameters, simulation, exact laws and colour merging.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::special::{log_gamma_shift_ratio_unchecked, BetaParams, DirichletParams};
use crate::tables::DiscreteLaw;

/// Largest `n` accepted by [`exact_pmf_enumeration`].
pub const ENUMERATION_MAX_N: u64 = 12;
/// Largest colour count accepted by [`exact_pmf_enumeration`].
pub const ENUMERATION_MAX_Q: usize = 4;

/// Replacement weight `a` and initial composition `x0` of a `q`-colour urn.
#[derive(Debug, Clone, PartialEq)]
pub struct UrnParams {
    a: f64,
    x0: Vec<f64>,
}

impl UrnParams {
    pub fn new(a: f64, x0: Vec<f64>) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::param("a", format!("must be positive and finite, got {a}")));
        }
        if x0.len() < 2 {
            return Err(Error::param("q", format!("need at least 2 colours, got {}", x0.len())));
        }
        for (i, &x) in x0.iter().enumerate() {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::param(
                    format!("x0[{i}]"),
                    format!("must be positive and finite, got {x}"),
                ));
            }
        }
        Ok(Self { a, x0 })
    }

    /// Two-colour urn with unit replacement and initial weights `(alpha, beta)`.
    pub fn two_colour(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(1.0, vec![alpha, beta])
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn q(&self) -> usize {
        self.x0.len()
    }

    /// `|x0|`, the initial total weight.
    pub fn total(&self) -> f64 {
        self.x0.iter().sum()
    }

    /// Rescale to `a = 1`. Dividing every weight by `a` leaves the draw
    /// probabilities, and hence the law of the draw counts, unchanged.
    pub fn normalized(&self) -> Self {
        Self {
            a: 1.0,
            x0: self.x0.iter().map(|x| x / self.a).collect(),
        }
    }

    /// Dirichlet limit of the colour proportions, `Dir(x0 / a)`.
    pub fn limit(&self) -> DirichletParams {
        DirichletParams::new(self.x0.iter().map(|x| x / self.a).collect()).expect("validated weights")
    }

    /// Beta limit of the proportion of colour `i` (0-based):
    /// `Beta(x_i / a, (|x0| - x_i) / a)`.
    pub fn marginal(&self, i: usize) -> Result<BetaParams> {
        if i >= self.q() {
            return Err(Error::param(
                "colour",
                format!("index {} out of range for {} colours", i + 1, self.q()),
            ));
        }
        let xi = self.x0[i];
        let rest: f64 = self.x0.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x).sum();
        BetaParams::new(xi / self.a, rest / self.a)
    }
}

/// Validate raw urn parameters and rescale them to `a = 1`.
pub fn validate_and_normalize(a: f64, x0: Vec<f64>) -> Result<UrnParams> {
    Ok(UrnParams::new(a, x0)?.normalized())
}

/// State after `n` draws: weights `X = x0 + a Y` and draw counts `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct UrnState {
    n: u64,
    counts: Vec<f64>,
    draws: Vec<u64>,
}

impl UrnState {
    pub fn initial(p: &UrnParams) -> Self {
        Self {
            n: 0,
            counts: p.x0.clone(),
            draws: vec![0; p.q()],
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Current weights `X`.
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    /// Draw counts `Y`.
    pub fn draws(&self) -> &[u64] {
        &self.draws
    }

    /// `|X|`, which equals `a n + |x0|`.
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// One draw: colour `i` is chosen with probability `X_i / |X|` and
    /// reinforced by `a`.
    pub fn step<R: Rng + ?Sized>(&self, p: &UrnParams, rng: &mut R) -> Self {
        let mut next = self.clone();
        next.advance(p, rng);
        next
    }

    fn advance<R: Rng + ?Sized>(&mut self, p: &UrnParams, rng: &mut R) -> usize {
        // |X| from the invariant rather than a running float sum.
        let total = p.a * self.n as f64 + p.total();
        let mut target = rng.random::<f64>() * total;
        let mut chosen = self.counts.len() - 1;
        for (i, &x) in self.counts.iter().enumerate() {
            if target < x {
                chosen = i;
                break;
            }
            target -= x;
        }
        self.counts[chosen] += p.a;
        self.draws[chosen] += 1;
        self.n += 1;
        chosen
    }
}

/// Run the chain for `n` draws from the initial state.
pub fn simulate<R: Rng + ?Sized>(p: &UrnParams, n: u64, rng: &mut R) -> UrnState {
    let mut s = UrnState::initial(p);
    for _ in 0..n {
        s.advance(p, rng);
    }
    s
}

/// Run the chain and return the sequence of drawn colours (0-based).
pub fn simulate_sequence<R: Rng + ?Sized>(p: &UrnParams, n: u64, rng: &mut R) -> Vec<usize> {
    let mut s = UrnState::initial(p);
    (0..n).map(|_| s.advance(p, rng)).collect()
}

/// `log P(Y_{n,1} = i)` for the two-colour urn `(alpha, beta)` with unit
/// replacement:
///
/// `p_i = B(α,β)^-1 · Γ(i+α)/Γ(i+1) · Γ(n-i+β)/Γ(n-i+1) · Γ(n+1)/Γ(n+α+β)`.
pub(crate) fn log_pmf_two_colour(p: &BetaParams, n: u64, i: u64) -> f64 {
    let (a, b) = (p.alpha(), p.beta());
    let (nf, i_f) = (n as f64, i as f64);
    -crate::special::log_beta(p)
        + log_gamma_shift_ratio_unchecked(i_f, a, 1.0)
        + log_gamma_shift_ratio_unchecked(nf - i_f, b, 1.0)
        + log_gamma_shift_ratio_unchecked(nf, 1.0, a + b)
}

/// Beta-binomial law of `Y_{n,1}` for initial weights `(alpha, beta)`, `a = 1`.
pub(crate) fn beta_binomial_law(p: &BetaParams, n: u64) -> Result<DiscreteLaw> {
    let logs: Vec<f64> = (0..=n).map(|i| log_pmf_two_colour(p, n, i)).collect();
    DiscreteLaw::from_log_probs(&logs, *p)
}

/// Exact law of the number of first-colour draws in a two-colour urn.
pub fn exact_pmf_two_colour(p: &UrnParams, n: u64) -> Result<DiscreteLaw> {
    if p.q() != 2 {
        return Err(Error::Contract(format!(
            "exact_pmf_two_colour needs q = 2, got q = {}",
            p.q()
        )));
    }
    beta_binomial_law(&p.marginal(0)?, n)
}

/// Law of the tracked colour's draw count, obtained by merging every other
/// colour into one.
pub fn marginal_law(p: &UrnParams, colour: usize, n: u64) -> Result<DiscreteLaw> {
    beta_binomial_law(&p.marginal(colour)?, n)
}

/// Probability of one explicit colour sequence, chaining the one-step draw
/// probabilities.
pub fn sequence_probability(p: &UrnParams, seq: &[usize]) -> Result<f64> {
    let mut counts = p.x0.clone();
    let mut total = p.total();
    let mut prob = 1.0;
    for &c in seq {
        if c >= p.q() {
            return Err(Error::param("sequence", format!("colour {c} out of range")));
        }
        prob *= counts[c] / total;
        counts[c] += p.a;
        total += p.a;
    }
    Ok(prob)
}

/// Law of the full draw-count vector by enumerating compositions of `n`.
///
/// Every sequence with counts `k` has the same probability
/// `prod_i x_i (x_i+1)...(x_i+k_i-1) / (s (s+1)...(s+n-1))` with `s = |x0|`
/// (after normalizing to `a = 1`); multiplying by the multinomial count gives
/// the composition's probability.
pub fn exact_pmf_enumeration(p: &UrnParams, n: u64) -> Result<BTreeMap<Vec<u64>, f64>> {
    if n > ENUMERATION_MAX_N || p.q() > ENUMERATION_MAX_Q {
        return Err(Error::TooLarge(format!(
            "composition table for n = {n}, q = {} exceeds the n <= {ENUMERATION_MAX_N}, \
             q <= {ENUMERATION_MAX_Q} guard",
            p.q()
        )));
    }
    let p = p.normalized();
    let s = p.total();
    let denom: f64 = (0..n).map(|j| s + j as f64).product();
    let mut out = BTreeMap::new();
    let mut comp = vec![0_u64; p.q()];
    compositions(n, 0, &mut comp, &mut |k| {
        let mut num = multinomial(n, k) as f64;
        for (&ki, &xi) in k.iter().zip(&p.x0) {
            num *= (0..ki).map(|j| xi + j as f64).product::<f64>();
        }
        out.insert(k.to_vec(), num / denom);
    });
    Ok(out)
}

fn compositions(remaining: u64, idx: usize, comp: &mut Vec<u64>, visit: &mut impl FnMut(&[u64])) {
    if idx == comp.len() - 1 {
        comp[idx] = remaining;
        visit(comp);
        return;
    }
    for k in 0..=remaining {
        comp[idx] = k;
        compositions(remaining - k, idx + 1, comp, visit);
    }
}

fn multinomial(n: u64, parts: &[u64]) -> u64 {
    let mut result = 1_u64;
    let mut taken = 0_u64;
    for &k in parts {
        for j in 1..=k {
            taken += 1;
            result = result * taken / j;
        }
    }
    debug_assert_eq!(taken, n);
    result
}

/// Collapse colours into groups; the grouped urn is again a Pólya urn whose
/// initial weights are the group sums.
pub fn merge_colours(p: &UrnParams, groups: &[Vec<usize>]) -> Result<UrnParams> {
    if groups.len() < 2 {
        return Err(Error::param("partition", "need at least 2 groups"));
    }
    let mut seen = vec![false; p.q()];
    let mut merged = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::param("partition", format!("group {g} is empty")));
        }
        let mut w = 0.0;
        for &c in group {
            if c >= p.q() {
                return Err(Error::param("partition", format!("colour {c} out of range")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::param("partition", format!("colour {c} appears twice")));
            }
            w += p.x0[c];
        }
        merged.push(w);
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::param("partition", format!("colour {c} not covered")));
    }
    UrnParams::new(p.a, merged)
}

/// `E Y_{n,i} = n x_i / |x0|`, from the martingale property of the proportions.
pub fn expected_draws(p: &UrnParams, n: u64) -> Vec<f64> {
    let s = p.total();
    p.x0.iter().map(|x| n as f64 * x / s).collect()
}
