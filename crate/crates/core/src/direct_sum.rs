//! Weighted direct sum of mean problems over dyadic levels.
//!
//! Level `k` is the space `L_p^{N_k}(L_u^{N_k})` with `N_k = 2^k`, and the
//! functional is `I x = sum_k 2^{-alpha k} I^{N_k,N_k} x_k`. Inputs are
//! represented up to a truncation level `k_max`. The composite estimator
//! reads levels below `k0` completely, estimates levels `k0..=k1` with a
//! geometrically decaying budget and drops everything above `k1`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::estimators::{adaptive_mean_a3, default_m, mc_mean_a2_nonadaptive, EstimateReport};
use crate::instances::sample_active_row;
use crate::mixed_norm::{
    abs_pow, compensated_sum, mixed_norm, root, scalar_mean, Extended, MixedMatrix, ProblemSpec,
};
use crate::oracle::{Budget, Mode, QueryTape};
use crate::rng::RngStream;

/// Largest representable level (a 4096 x 4096 matrix).
pub const K_MAX_CAP: u32 = 12;

/// Default for the budget scale `c0` of the level schedule.
pub const DEFAULT_C0: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectSumSpec {
    alpha: f64,
    p: Extended,
    u: Extended,
    p1: Extended,
    k_max: u32,
}

impl DirectSumSpec {
    pub fn new(alpha: f64, p: Extended, u: Extended, p1: Extended, k_max: u32) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(Error::InvalidParameters(format!(
                "alpha must exceed 1, got {alpha}"
            )));
        }
        if k_max > K_MAX_CAP {
            return Err(Error::InvalidParameters(format!(
                "k_max = {k_max} exceeds the cap {K_MAX_CAP}"
            )));
        }
        // validates p and u
        ProblemSpec::new(1, 1, p, u)?;
        if let Extended::Finite(v) = p1 {
            Extended::finite(v)?;
        }
        Ok(DirectSumSpec {
            alpha,
            p,
            u,
            p1,
            k_max,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> Extended {
        self.p
    }

    pub fn u(&self) -> Extended {
        self.u
    }

    pub fn p1(&self) -> Extended {
        self.p1
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// The space of level `k`.
    pub fn level_spec(&self, k: u32) -> ProblemSpec {
        let n = 1usize << k;
        ProblemSpec::new(n, n, self.p, self.u).expect("validated exponents")
    }

    /// Level weight `2^{-alpha k}`.
    pub fn weight(&self, k: u32) -> f64 {
        (-self.alpha * k as f64).exp2()
    }
}

/// A finitely supported element of the direct sum.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSumElement {
    spec: DirectSumSpec,
    levels: BTreeMap<u32, MixedMatrix>,
}

impl DirectSumElement {
    pub fn empty(spec: DirectSumSpec) -> Self {
        DirectSumElement {
            spec,
            levels: BTreeMap::new(),
        }
    }

    pub fn with_level(mut self, k: u32, f: MixedMatrix) -> Result<Self> {
        self.insert(k, f)?;
        Ok(self)
    }

    /// Sets level `k`; the matrix must be `2^k x 2^k` with the spec's
    /// exponents.
    pub fn insert(&mut self, k: u32, f: MixedMatrix) -> Result<()> {
        if k > self.spec.k_max {
            return Err(Error::InvalidParameters(format!(
                "level {k} above k_max = {}",
                self.spec.k_max
            )));
        }
        let expected = self.spec.level_spec(k);
        if *f.spec() != expected {
            return Err(Error::ShapeMismatch {
                expected_rows: expected.n1(),
                expected_cols: expected.n2(),
                len: f.entries().len(),
            });
        }
        self.levels.insert(k, f);
        Ok(())
    }

    pub fn spec(&self) -> &DirectSumSpec {
        &self.spec
    }

    pub fn level(&self, k: u32) -> Option<&MixedMatrix> {
        self.levels.get(&k)
    }

    pub fn levels(&self) -> impl Iterator<Item = (u32, &MixedMatrix)> {
        self.levels.iter().map(|(k, f)| (*k, f))
    }

    /// Level-wise sum. Both operands must share a spec.
    pub fn add(&self, other: &DirectSumElement) -> Result<Self> {
        if self.spec != other.spec {
            return Err(Error::InvalidParameters("direct sum specs differ".into()));
        }
        let mut out = self.clone();
        for (k, g) in other.levels() {
            let sum = match out.levels.get(&k) {
                Some(f) => f.add(g)?,
                None => g.clone(),
            };
            out.levels.insert(k, sum);
        }
        Ok(out)
    }
}

/// `l_{p1}` norm of the level norms.
pub fn ds_norm(x: &DirectSumElement) -> f64 {
    let norms: Vec<f64> = x.levels().map(|(_, f)| mixed_norm(f)).collect();
    match x.spec.p1 {
        Extended::Inf => norms.into_iter().fold(0.0, f64::max),
        Extended::Finite(e) => root(compensated_sum(norms.iter().map(|&a| abs_pow(a, e))), e),
    }
}

/// Exact weighted sum of level means, summed in level order.
pub fn ds_integral(x: &DirectSumElement) -> f64 {
    compensated_sum(x.levels().map(|(k, f)| x.spec.weight(k) * scalar_mean(f)))
}

/// Per-level budgets of the composite estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelAllocation {
    pub k0: u32,
    pub k1: u32,
    /// `budgets[k]` for `k = 0..=k1`.
    pub budgets: Vec<usize>,
    /// Integer constant with `sum budgets <= c3 * 4^k0`.
    pub c3: usize,
}

impl LevelAllocation {
    pub fn total(&self) -> usize {
        self.budgets.iter().sum()
    }

    /// `c3 * 2^{2 k0}`.
    pub fn bound(&self) -> usize {
        self.c3 << (2 * self.k0)
    }

    pub fn pairs(&self) -> Vec<(u32, usize)> {
        self.budgets
            .iter()
            .enumerate()
            .map(|(k, &n)| (k as u32, n))
            .collect()
    }
}

/// Default `delta = (alpha - 1)/2`.
pub fn default_delta(alpha: f64) -> f64 {
    (alpha - 1.0) / 2.0
}

/// Level schedule: with `beta = (alpha + 1)/alpha` and `k1 = floor(beta k0)`,
/// `n_k = 4^k` below `k0` and `n_k = ceil(c0 2^{2 k0 - delta (k - k0)}) - 1`
/// for `k0 <= k <= k1`.
///
/// The reported `c3 = ceil(1/3 + c0 / (1 - 2^{-delta}))` bounds the total,
/// since the full-readout levels sum to less than `4^k0 / 3` and the rest is
/// dominated by a geometric series.
pub fn level_allocation(k0: u32, alpha: f64, delta: f64, c0: f64) -> Result<LevelAllocation> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::InvalidParameters(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    if !(delta > 0.0 && delta < alpha - 1.0) {
        return Err(Error::InvalidParameters(format!(
            "delta must lie in (0, alpha - 1) = (0, {}), got {delta}",
            alpha - 1.0
        )));
    }
    if !(c0 > 0.0 && c0 < 1.0) {
        return Err(Error::InvalidParameters(format!(
            "c0 must lie in (0, 1), got {c0}"
        )));
    }
    if k0 == 0 {
        return Err(Error::InvalidParameters("k0 must be positive".into()));
    }
    let k1 = ((alpha + 1.0) * k0 as f64 / alpha + 1e-9).floor() as u32;
    if 2 * k1 >= usize::BITS {
        return Err(Error::InvalidParameters(format!("k0 = {k0} too large")));
    }
    let budgets = (0..=k1)
        .map(|k| {
            if k < k0 {
                1usize << (2 * k)
            } else {
                let exponent = 2.0 * k0 as f64 - delta * (k - k0) as f64;
                (c0 * exponent.exp2()).ceil() as usize - 1
            }
        })
        .collect();
    let c3 = (1.0 / 3.0 + c0 / (1.0 - (-delta).exp2())).ceil() as usize;
    Ok(LevelAllocation {
        k0,
        k1,
        budgets,
        c3,
    })
}

/// Knobs of [`ds_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsParams {
    pub k0: u32,
    pub delta: f64,
    pub c0: f64,
    pub mode: Mode,
    /// Stage-1 repetitions of the adaptive level estimator; `None` uses
    /// [`default_m`] of each level's row count.
    pub m: Option<usize>,
}

/// Child-stream tag of level `k` within one composite run.
fn level_stream(rng: &RngStream, k: u32) -> RngStream {
    rng.child(0x100 + k as u64)
}

/// Composite estimator with the schedule of [`level_allocation`].
pub fn ds_estimate(
    x: &DirectSumElement,
    params: &DsParams,
    rng: &RngStream,
) -> Result<EstimateReport> {
    let alloc = level_allocation(params.k0, x.spec.alpha, params.delta, params.c0)?;
    ds_estimate_with_budgets(x, params.k0, &alloc.budgets, params.mode, params.m, rng)
}

/// Composite estimator with explicit per-level budgets `budgets[k]`,
/// `k = 0..=k1`. Levels below `k0` are read completely regardless of their
/// budget entry. The report's `allocation` holds the realized query count
/// of every level.
pub fn ds_estimate_with_budgets(
    x: &DirectSumElement,
    k0: u32,
    budgets: &[usize],
    mode: Mode,
    m: Option<usize>,
    rng: &RngStream,
) -> Result<EstimateReport> {
    let spec = x.spec;
    if budgets.is_empty() {
        return Err(Error::InvalidParameters("no levels to estimate".into()));
    }
    let k1 = (budgets.len() - 1) as u32;
    if k1 > K_MAX_CAP {
        return Err(Error::InvalidParameters(format!(
            "top level {k1} exceeds the cap {K_MAX_CAP}"
        )));
    }
    if mode == Mode::Adaptive {
        let p_ok = matches!(spec.p, Extended::Finite(v) if v < 2.0);
        if !p_ok || spec.u.as_f64() <= 2.0 {
            return Err(Error::PreconditionViolated(format!(
                "adaptive composite needs p < 2 < u, got p = {}, u = {}",
                spec.p, spec.u
            )));
        }
        for k in k0..=k1 {
            let n = budgets[k as usize];
            if n < 1usize << k {
                return Err(Error::PreconditionViolated(format!(
                    "level {k} budget {n} below N_k = {}",
                    1usize << k
                )));
            }
        }
    }
    if let Some(0) = m {
        return Err(Error::PreconditionViolated(
            "repetition count m must be positive".into(),
        ));
    }

    let mut weighted = Vec::with_capacity(budgets.len());
    let mut level_cards = Vec::with_capacity(budgets.len());
    for k in 0..=k1 {
        let level_spec = spec.level_spec(k);
        let zero;
        let f = match x.level(k) {
            Some(f) => f,
            None => {
                zero = MixedMatrix::zeros(level_spec);
                &zero
            }
        };
        let (estimate, cards) = if k < k0 {
            full_readout(f)?
        } else {
            let n = budgets[k as usize];
            let mut stream = level_stream(rng, k);
            match mode {
                Mode::Adaptive => {
                    let m = m.unwrap_or_else(|| default_m(level_spec.n1()));
                    let mut tape = QueryTape::open_adaptive(f, Budget::Unbounded);
                    let rep = adaptive_mean_a3(&mut tape, n, m, spec.p, &stream)?;
                    (rep.value, rep.cards)
                }
                Mode::NonAdaptive => {
                    if n == 0 {
                        (0.0, 0)
                    } else {
                        let rep = mc_mean_a2_nonadaptive(f, n, &mut stream)?;
                        (rep.value, rep.cards)
                    }
                }
            }
        };
        weighted.push(spec.weight(k) * estimate);
        level_cards.push(cards);
    }
    Ok(EstimateReport {
        value: compensated_sum(weighted),
        cards: level_cards.iter().sum(),
        stage_cards: None,
        allocation: Some(level_cards),
    })
}

fn full_readout(f: &MixedMatrix) -> Result<(f64, usize)> {
    let spec = f.spec();
    let all: Vec<(usize, usize)> = (0..spec.n1())
        .flat_map(|i| (0..spec.n2()).map(move |j| (i, j)))
        .collect();
    let mut tape = QueryTape::open_nonadaptive(f, all.clone())?;
    let mut values = Vec::with_capacity(all.len());
    for (i, j) in all {
        values.push(tape.query(i, j)?);
    }
    Ok((
        compensated_sum(values) / spec.entry_count() as f64,
        tape.card(),
    ))
}

/// Random test-bed element: an independent active-row draw on every level
/// `0..=k_max`, scaled so that `ds_norm = 1`.
pub fn sample_active_row_levels(spec: &DirectSumSpec, rng: &RngStream) -> Result<DirectSumElement> {
    let levels = spec.k_max + 1;
    let scale = (levels as f64).powf(-spec.p1.recip());
    let mut x = DirectSumElement::empty(*spec);
    for k in 0..=spec.k_max {
        let mut stream = rng.child(k as u64);
        let f = sample_active_row(&spec.level_spec(k), &mut stream)?;
        x.insert(k, if scale == 1.0 { f } else { f.scaled(scale)? })?;
    }
    Ok(x)
}
