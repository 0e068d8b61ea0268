//! Seeded trial runner, error statistics and log-log rate fits.
//!
//! Trial `t` of a run with master seed `s` draws everything from
//! `RngStream::new(s, t)` and its children, so results do not depend on
//! the number of workers and adding trials never perturbs earlier ones.
//! Per-trial outcomes are collected in trial order before any reduction.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::direct_sum::{
    default_delta, ds_estimate, ds_estimate_with_budgets, ds_integral, level_allocation,
    sample_active_row_levels, DirectSumSpec, DsParams, DEFAULT_C0,
};
use crate::error::{Error, Result};
use crate::estimators::{
    a3_card_bound, adaptive_mean_a3, default_m, mc_mean_a2_nonadaptive, norm_est_a1,
};
use crate::instances::{check_regime, HardFamily, Variant, DEFAULT_REGIME_C0};
use crate::mixed_norm::{compensated_sum, scalar_mean, Extended, MixedMatrix, ProblemSpec};
use crate::oracle::{Budget, Mode, QueryTape};
use crate::rng::RngStream;

const INSTANCE_STREAM: u64 = 0;
const PRIMARY_STREAM: u64 = 1;
const SECONDARY_STREAM: u64 = 2;

/// Fixed default master seed.
pub const DEFAULT_SEED: u64 = 0x5EED_2024_ADA9_7001;

/// Minimum trial count for statistical claims.
pub const MIN_STATISTICAL_TRIALS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Non-adaptive Monte Carlo.
    A2,
    /// Two-stage adaptive estimator.
    A3,
    /// Full readout; zero error, used for calibration.
    Exact,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::A2 => "a2",
            Estimator::A3 => "a3",
            Estimator::Exact => "exact",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a2" => Ok(Estimator::A2),
            "a3" => Ok(Estimator::A3),
            "exact" => Ok(Estimator::Exact),
            _ => Err(Error::InvalidParameters(format!("unknown estimator {s:?}"))),
        }
    }
}

/// Runs `job(t)` for `t in 0..trials` on `workers` threads and returns the
/// outcomes in trial order.
pub fn run_indexed<T, F>(trials: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return (0..trials).map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameters(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..trials).into_par_iter().map(job).collect())
}

/// Error statistics over a set of trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub trials: usize,
    /// `sqrt(mean(e^2))`.
    pub rms: f64,
    /// Standard error of `rms` by the delta method.
    pub stderr: f64,
    /// `mean(|e|)`.
    pub mean_abs: f64,
    pub mean_card: f64,
    pub max_card: usize,
}

impl ErrorStats {
    pub fn from_trials(errors: &[f64], cards: &[usize]) -> Result<Self> {
        let t = errors.len();
        if t < 2 {
            return Err(Error::PreconditionViolated(format!(
                "error statistics need at least 2 trials, got {t}"
            )));
        }
        let squares: Vec<f64> = errors.iter().map(|e| e * e).collect();
        let mean_sq = compensated_sum(squares.iter().copied()) / t as f64;
        let rms = mean_sq.sqrt();
        let var_sq =
            compensated_sum(squares.iter().map(|s| (s - mean_sq) * (s - mean_sq))) / (t - 1) as f64;
        let stderr = if rms > 0.0 {
            (var_sq / t as f64).sqrt() / (2.0 * rms)
        } else {
            0.0
        };
        Ok(ErrorStats {
            trials: t,
            rms,
            stderr,
            mean_abs: compensated_sum(errors.iter().map(|e| e.abs())) / t as f64,
            mean_card: cards.iter().map(|&c| c as f64).sum::<f64>() / t.max(1) as f64,
            max_card: cards.iter().copied().max().unwrap_or(0),
        })
    }
}

/// `(mean |e|^w)^{1/w}`.
pub fn error_moment(errors: &[f64], w: f64) -> f64 {
    let s = compensated_sum(errors.iter().map(|e| e.abs().powf(w)));
    (s / errors.len() as f64).powf(1.0 / w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub error: f64,
    pub card: usize,
}

/// One trial: sample an instance and run the estimator on it.
pub fn run_trial(
    family: &HardFamily,
    estimator: Estimator,
    n: usize,
    m: Option<usize>,
    seed: u64,
    trial: usize,
) -> Result<TrialOutcome> {
    let stream = RngStream::new(seed, trial as u64);
    let f = family.sample(&mut stream.child(INSTANCE_STREAM));
    let truth = scalar_mean(&f);
    let (value, card) = run_estimator(&f, estimator, n, m, &stream.child(PRIMARY_STREAM))?;
    Ok(TrialOutcome {
        error: value - truth,
        card,
    })
}

/// Runs one estimator on `f`, returning the estimate and the queries used.
pub fn run_estimator(
    f: &MixedMatrix,
    estimator: Estimator,
    n: usize,
    m: Option<usize>,
    rng: &RngStream,
) -> Result<(f64, usize)> {
    match estimator {
        Estimator::A2 => {
            let rep = mc_mean_a2_nonadaptive(f, n, &mut rng.clone())?;
            Ok((rep.value, rep.cards))
        }
        Estimator::A3 => {
            let m = m.unwrap_or_else(|| default_m(f.spec().n1()));
            let mut tape = QueryTape::open_adaptive(f, Budget::Bounded(a3_card_bound(n, m)));
            let rep = adaptive_mean_a3(&mut tape, n, m, f.spec().p(), rng)?;
            Ok((rep.value, rep.cards))
        }
        Estimator::Exact => Ok((scalar_mean(f), f.spec().entry_count())),
    }
}

/// Error statistics of one (family, estimator, budget) configuration.
pub fn rms_error(
    family: &HardFamily,
    estimator: Estimator,
    n: usize,
    m: Option<usize>,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<ErrorStats> {
    let outcomes = run_indexed(trials, workers, |t| {
        run_trial(family, estimator, n, m, seed, t)
    })?;
    stats_of(&outcomes)
}

fn stats_of(outcomes: &[TrialOutcome]) -> Result<ErrorStats> {
    let errors: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
    let cards: Vec<usize> = outcomes.iter().map(|o| o.card).collect();
    ErrorStats::from_trials(&errors, &cards)
}

/// Ordinary least squares fit of `log2 error` against `log2 n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(log2 n, log2 error)`.
    pub points: Vec<(f64, f64)>,
}

pub const MIN_FIT_POINTS: usize = 4;

pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            got: points.len(),
        });
    }
    if let Some(&(n, _)) = points.iter().find(|(n, _)| n.is_nan() || *n <= 0.0) {
        return Err(Error::InvalidParameters(format!(
            "budgets must be positive, got {n}"
        )));
    }
    if let Some(&(_, e)) = points.iter().find(|(_, e)| e.is_nan() || *e <= 0.0) {
        return Err(Error::NonpositiveError(e));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(n, e)| (n.log2(), e.log2())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameters(
            "rate fit needs distinct budgets".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: logs,
    })
}

impl fmt::Display for RateFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slope={:.4} intercept={:.4} r2={:.4} points={}",
            self.slope,
            self.intercept,
            self.r_squared,
            self.points.len()
        )
    }
}

/// A plain table of formatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Column order of the standard error table.
pub const STANDARD_COLUMNS: [&str; 13] = [
    "family",
    "estimator",
    "p",
    "u",
    "N1",
    "N2",
    "n",
    "trials",
    "rms",
    "stderr",
    "mean_card",
    "seed",
    "mean_abs",
];

/// One row of the standard error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub variant: Variant,
    pub estimator: Estimator,
    pub spec: ProblemSpec,
    pub n: usize,
    pub seed: u64,
    pub stats: ErrorStats,
}

impl ErrorRow {
    pub fn cells(&self) -> Vec<String> {
        vec![
            self.variant.to_string(),
            self.estimator.to_string(),
            self.spec.p().to_string(),
            self.spec.u().to_string(),
            self.spec.n1().to_string(),
            self.spec.n2().to_string(),
            self.n.to_string(),
            self.stats.trials.to_string(),
            self.stats.rms.to_string(),
            self.stats.stderr.to_string(),
            self.stats.mean_card.to_string(),
            self.seed.to_string(),
            self.stats.mean_abs.to_string(),
        ]
    }
}

// ---------------------------------------------------------------------------
// Adaption gap

#[derive(Debug, Clone, PartialEq)]
pub struct GapConfig {
    pub budgets: Vec<usize>,
    /// `N1 = N2 = ceil(c3 sqrt(n))`.
    pub c3: f64,
    pub trials: usize,
    pub seed: u64,
    /// Regime guard constant; `None` disables the guard.
    pub regime_c0: Option<f64>,
    pub m: Option<usize>,
    pub workers: usize,
}

impl Default for GapConfig {
    fn default() -> Self {
        GapConfig {
            budgets: vec![1 << 10, 1 << 12, 1 << 14, 1 << 16],
            c3: 5.0,
            trials: 300,
            seed: DEFAULT_SEED,
            regime_c0: Some(DEFAULT_REGIME_C0),
            m: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub n: usize,
    pub n1: usize,
    pub m: usize,
    pub a2: ErrorStats,
    pub a3: ErrorStats,
    /// `rms_a2 / rms_a3`.
    pub ratio: f64,
}

pub const GAP_COLUMNS: [&str; 13] = [
    "n",
    "N1",
    "N2",
    "m",
    "trials",
    "rms_a2",
    "stderr_a2",
    "rms_a3",
    "stderr_a3",
    "ratio",
    "mean_card_a2",
    "mean_card_a3",
    "seed",
];

impl GapRow {
    pub fn cells(&self, seed: u64) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.n1.to_string(),
            self.n1.to_string(),
            self.m.to_string(),
            self.a3.trials.to_string(),
            self.a2.rms.to_string(),
            self.a2.stderr.to_string(),
            self.a3.rms.to_string(),
            self.a3.stderr.to_string(),
            self.ratio.to_string(),
            self.a2.mean_card.to_string(),
            self.a3.mean_card.to_string(),
            seed.to_string(),
        ]
    }
}

/// `ceil(c3 sqrt(n))`.
pub fn gap_dimension(n: usize, c3: f64) -> usize {
    ((c3 * (n as f64).sqrt()).ceil() as usize).max(1)
}

/// Square grid `N1 = N2 = ceil(c3 sqrt n)` with `p = 1, u = inf` on the
/// active-row family, checked against the regime guard and `n >= N1`.
pub fn gap_family(n: usize, c3: f64, regime_c0: Option<f64>) -> Result<HardFamily> {
    if c3.is_nan() || c3 <= 0.0 {
        return Err(Error::InvalidParameters(format!(
            "c3 must be positive, got {c3}"
        )));
    }
    let dim = gap_dimension(n, c3);
    let spec = ProblemSpec::new(dim, dim, Extended::Finite(1.0), Extended::Inf)?;
    if let Some(c0) = regime_c0 {
        check_regime(&spec, n, c0)?;
    }
    if n < dim {
        return Err(Error::RegimeViolation(format!(
            "the adaptive estimator needs n >= N1, got n = {n}, N1 = {dim}"
        )));
    }
    HardFamily::new(Variant::ActiveRowBernoulli, spec)
}

/// Adaptive vs non-adaptive error at matched information.
///
/// Each trial runs the adaptive estimator with parameter `n` and then the
/// non-adaptive estimator on the same input with the adaptive run's realized
/// query count.
pub fn gap_experiment(config: &GapConfig) -> Result<Vec<GapRow>> {
    if config.trials < 2 {
        return Err(Error::PreconditionViolated(
            "gap experiment needs >= 2 trials".into(),
        ));
    }
    check_budgets(&config.budgets)?;
    let families = config
        .budgets
        .iter()
        .map(|&n| gap_family(n, config.c3, config.regime_c0))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(config.budgets.len());
    for (&n, family) in config.budgets.iter().zip(&families) {
        let m = config.m.unwrap_or_else(|| default_m(family.spec().n1()));
        let pairs = run_indexed(config.trials, config.workers, |t| {
            let stream = RngStream::new(config.seed, t as u64);
            let f = family.sample(&mut stream.child(INSTANCE_STREAM));
            let truth = scalar_mean(&f);
            let (v3, c3) =
                run_estimator(&f, Estimator::A3, n, Some(m), &stream.child(PRIMARY_STREAM))?;
            let (v2, c2) =
                run_estimator(&f, Estimator::A2, c3, None, &stream.child(SECONDARY_STREAM))?;
            Ok((
                TrialOutcome {
                    error: v2 - truth,
                    card: c2,
                },
                TrialOutcome {
                    error: v3 - truth,
                    card: c3,
                },
            ))
        })?;
        let (a2, a3): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let a2 = stats_of(&a2)?;
        let a3 = stats_of(&a3)?;
        rows.push(GapRow {
            n,
            n1: family.spec().n1(),
            m,
            ratio: a2.rms / a3.rms,
            a2,
            a3,
        });
    }
    Ok(rows)
}

/// Fits of the gap table: `(ratio, rms_a2, rms_a3)` against `n`.
pub fn gap_fits(rows: &[GapRow]) -> Result<(RateFit, RateFit, RateFit)> {
    let pts = |g: &dyn Fn(&GapRow) -> f64| -> Vec<(f64, f64)> {
        rows.iter().map(|r| (r.n as f64, g(r))).collect()
    };
    Ok((
        rate_fit(&pts(&|r| r.ratio))?,
        rate_fit(&pts(&|r| r.a2.rms))?,
        rate_fit(&pts(&|r| r.a3.rms))?,
    ))
}

fn check_budgets(budgets: &[usize]) -> Result<()> {
    if budgets.is_empty() || budgets[0] == 0 || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameters(format!(
            "budgets must be positive and strictly increasing, got {budgets:?}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Rate regimes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `p >= u`
    PGeU,
    /// `p < u <= 2`
    PLtULe2,
    /// `2 <= p < u`
    TwoLePLtU,
    /// `p < 2 < u`
    PLt2LtU,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::PGeU,
        Regime::PLtULe2,
        Regime::TwoLePLtU,
        Regime::PLt2LtU,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::PGeU => "p-ge-u",
            Regime::PLtULe2 => "p-lt-u-le-2",
            Regime::TwoLePLtU => "two-le-p-lt-u",
            Regime::PLt2LtU => "p-lt-2-lt-u",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == key)
            .ok_or_else(|| Error::InvalidParameters(format!("unknown regime {s:?}")))
    }
}

/// Matrix dimensions of a rate series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dims {
    Fixed {
        n1: usize,
        n2: usize,
    },
    /// `N1 = N2 = ceil(c3 sqrt n)`.
    Scaled {
        c3: f64,
    },
}

impl Dims {
    pub fn at(self, n: usize) -> (usize, usize) {
        match self {
            Dims::Fixed { n1, n2 } => (n1, n2),
            Dims::Scaled { c3 } => {
                let d = gap_dimension(n, c3);
                (d, d)
            }
        }
    }
}

/// One measured curve of a rate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPlan {
    pub label: String,
    pub variant: Variant,
    pub estimator: Estimator,
    pub p: Extended,
    pub u: Extended,
    pub dims: Dims,
    pub budgets: Vec<usize>,
    /// Moment order `w` of the fitted error `(E|e|^w)^{1/w}`.
    pub moment: f64,
    /// Exponent of `n` in the matching upper bound on this grid.
    pub predicted_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePlan {
    pub regime: Regime,
    pub series: Vec<SeriesPlan>,
    pub trials: usize,
    pub seed: u64,
    pub regime_c0: Option<f64>,
    pub workers: usize,
}

fn pow2s(lo: u32, hi: u32, step: usize) -> Vec<usize> {
    (lo..=hi).step_by(step).map(|e| 1usize << e).collect()
}

impl RatePlan {
    /// Default grids. Every grid point satisfies `n < N1 N2 / 21`.
    pub fn for_regime(regime: Regime) -> RatePlan {
        let one = Extended::Finite(1.0);
        let two = Extended::Finite(2.0);
        let series = match regime {
            // p = u = 1: the first moment is bounded by a constant, no decay.
            Regime::PGeU => vec![SeriesPlan {
                label: "a2-single-spike".into(),
                variant: Variant::SingleSpike,
                estimator: Estimator::A2,
                p: one,
                u: one,
                dims: Dims::Fixed { n1: 256, n2: 16 },
                budgets: pow2s(4, 7, 1),
                moment: 1.0,
                predicted_slope: 0.0,
            }],
            // p = 1, u = 2, n >= N1: N1^{1/2} n^{-1/2}.
            Regime::PLtULe2 => vec![SeriesPlan {
                label: "a2-active-row".into(),
                variant: Variant::ActiveRowBernoulli,
                estimator: Estimator::A2,
                p: one,
                u: two,
                dims: Dims::Fixed { n1: 64, n2: 4096 },
                budgets: pow2s(9, 13, 1),
                moment: 1.0,
                predicted_slope: -0.5,
            }],
            // p = 2, u = inf: n^{-1/2}.
            Regime::TwoLePLtU => vec![SeriesPlan {
                label: "a2-full-bernoulli".into(),
                variant: Variant::FullBernoulli,
                estimator: Estimator::A2,
                p: two,
                u: Extended::Inf,
                dims: Dims::Fixed { n1: 256, n2: 256 },
                budgets: pow2s(6, 11, 1),
                moment: 2.0,
                predicted_slope: -0.5,
            }],
            Regime::PLt2LtU => vec![
                // N1 ~ sqrt n: N1^{1/2} n^{-1/2} = n^{-1/4}
                SeriesPlan {
                    label: "a2-active-row-scaled".into(),
                    variant: Variant::ActiveRowBernoulli,
                    estimator: Estimator::A2,
                    p: one,
                    u: Extended::Inf,
                    dims: Dims::Scaled { c3: 5.0 },
                    budgets: pow2s(8, 14, 2),
                    moment: 2.0,
                    predicted_slope: -0.25,
                },
                // N1 n^{-1} + n^{-1/2} ~ n^{-1/2} up to logarithms
                SeriesPlan {
                    label: "a3-active-row-scaled".into(),
                    variant: Variant::ActiveRowBernoulli,
                    estimator: Estimator::A3,
                    p: one,
                    u: Extended::Inf,
                    dims: Dims::Scaled { c3: 5.0 },
                    budgets: pow2s(8, 14, 2),
                    moment: 2.0,
                    predicted_slope: -0.5,
                },
                // n < N1: n^{-1+1/p} = n^0 in the first moment
                SeriesPlan {
                    label: "a2-spike-below-n1".into(),
                    variant: Variant::SingleSpike,
                    estimator: Estimator::A2,
                    p: one,
                    u: Extended::Inf,
                    dims: Dims::Fixed { n1: 4096, n2: 1 },
                    budgets: pow2s(4, 7, 1),
                    moment: 1.0,
                    predicted_slope: 0.0,
                },
            ],
        };
        RatePlan {
            regime,
            series,
            trials: 300,
            seed: DEFAULT_SEED,
            regime_c0: Some(DEFAULT_REGIME_C0),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub plan: SeriesPlan,
    pub rows: Vec<ErrorRow>,
    /// `(E|e|^w)^{1/w}` per budget.
    pub moments: Vec<f64>,
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub regime: Regime,
    pub series: Vec<SeriesResult>,
}

impl RateReport {
    pub fn table(&self) -> Table {
        let mut table = Table::new(&STANDARD_COLUMNS);
        for s in &self.series {
            for r in &s.rows {
                table.push(r.cells());
            }
        }
        table
    }
}

pub fn rate_experiment(plan: &RatePlan) -> Result<RateReport> {
    if plan.trials < 2 {
        return Err(Error::PreconditionViolated(
            "rate experiment needs >= 2 trials".into(),
        ));
    }
    let mut series = Vec::with_capacity(plan.series.len());
    // validate every grid point before spending any time
    for s in &plan.series {
        check_budgets(&s.budgets)?;
        for &n in &s.budgets {
            let (n1, n2) = s.dims.at(n);
            let spec = ProblemSpec::new(n1, n2, s.p, s.u)?;
            if let Some(c0) = plan.regime_c0 {
                check_regime(&spec, n, c0)?;
            }
            if s.estimator == Estimator::A3 && n < n1 {
                return Err(Error::RegimeViolation(format!(
                    "series {}: adaptive estimator needs n >= N1, got n = {n}, N1 = {n1}",
                    s.label
                )));
            }
        }
    }
    for s in &plan.series {
        let mut rows = Vec::with_capacity(s.budgets.len());
        let mut moments = Vec::with_capacity(s.budgets.len());
        for &n in &s.budgets {
            let (n1, n2) = s.dims.at(n);
            let family = HardFamily::new(s.variant, ProblemSpec::new(n1, n2, s.p, s.u)?)?;
            let outcomes = run_indexed(plan.trials, plan.workers, |t| {
                run_trial(&family, s.estimator, n, None, plan.seed, t)
            })?;
            let errors: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
            moments.push(error_moment(&errors, s.moment));
            rows.push(ErrorRow {
                variant: s.variant,
                estimator: s.estimator,
                spec: *family.spec(),
                n,
                seed: plan.seed,
                stats: stats_of(&outcomes)?,
            });
        }
        let points: Vec<(f64, f64)> = s
            .budgets
            .iter()
            .zip(&moments)
            .map(|(&n, &e)| (n as f64, e))
            .collect();
        series.push(SeriesResult {
            plan: s.clone(),
            rows,
            fit: rate_fit(&points)?,
            moments,
        });
    }
    Ok(RateReport {
        regime: plan.regime,
        series,
    })
}

// ---------------------------------------------------------------------------
// Direct sum

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsMode {
    Adaptive,
    NonAdaptive,
    /// Both, with the non-adaptive run granted the adaptive run's realized
    /// per-level query counts.
    Both,
}

impl FromStr for DsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" => Ok(DsMode::Adaptive),
            "nonadaptive" | "non-adaptive" => Ok(DsMode::NonAdaptive),
            "both" => Ok(DsMode::Both),
            _ => Err(Error::InvalidParameters(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsConfig {
    pub alpha: f64,
    pub p: Extended,
    pub u: Extended,
    pub p1: Extended,
    pub k0s: Vec<u32>,
    /// `None` uses `(alpha - 1)/2`.
    pub delta: Option<f64>,
    pub c0: f64,
    pub m: Option<usize>,
    pub mode: DsMode,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for DsConfig {
    fn default() -> Self {
        DsConfig {
            alpha: 1.5,
            p: Extended::Finite(1.0),
            u: Extended::Inf,
            p1: Extended::Finite(1.0),
            k0s: vec![4, 5, 6],
            delta: None,
            c0: DEFAULT_C0,
            m: None,
            mode: DsMode::Both,
            trials: 200,
            seed: DEFAULT_SEED,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsRow {
    pub mode: Mode,
    pub k0: u32,
    pub k1: u32,
    /// `c3 4^k0`.
    pub bound: usize,
    pub stats: ErrorStats,
}

pub const DS_COLUMNS: [&str; 12] = [
    "mode",
    "alpha",
    "p",
    "u",
    "k0",
    "k1",
    "budget_bound",
    "trials",
    "rms",
    "stderr",
    "mean_card",
    "seed",
];

impl DsRow {
    pub fn cells(&self, config: &DsConfig) -> Vec<String> {
        vec![
            self.mode.to_string(),
            config.alpha.to_string(),
            config.p.to_string(),
            config.u.to_string(),
            self.k0.to_string(),
            self.k1.to_string(),
            self.bound.to_string(),
            self.stats.trials.to_string(),
            self.stats.rms.to_string(),
            self.stats.stderr.to_string(),
            self.stats.mean_card.to_string(),
            config.seed.to_string(),
        ]
    }
}

/// Composite estimator errors on the active-row test bed, for each `k0`.
/// Inputs are represented up to level `k1`, so nothing is truncated.
pub fn ds_experiment(config: &DsConfig) -> Result<Vec<DsRow>> {
    if config.trials < 2 {
        return Err(Error::PreconditionViolated(
            "direct-sum experiment needs >= 2 trials".into(),
        ));
    }
    let delta = config.delta.unwrap_or_else(|| default_delta(config.alpha));
    let mut rows = Vec::new();
    for &k0 in &config.k0s {
        let alloc = level_allocation(k0, config.alpha, delta, config.c0)?;
        let spec = DirectSumSpec::new(config.alpha, config.p, config.u, config.p1, alloc.k1)?;
        let params = |mode| DsParams {
            k0,
            delta,
            c0: config.c0,
            mode,
            m: config.m,
        };
        let outcomes = run_indexed(config.trials, config.workers, |t| {
            let stream = RngStream::new(config.seed, t as u64);
            let x = sample_active_row_levels(&spec, &stream.child(INSTANCE_STREAM))?;
            let truth = ds_integral(&x);
            let mut adaptive = None;
            let mut nonadaptive = None;
            if config.mode != DsMode::NonAdaptive {
                let rep = ds_estimate(&x, &params(Mode::Adaptive), &stream.child(PRIMARY_STREAM))?;
                adaptive = Some((rep.value - truth, rep.cards, rep.allocation));
            }
            if config.mode != DsMode::Adaptive {
                let rng = stream.child(SECONDARY_STREAM);
                let rep = match &adaptive {
                    Some((_, _, Some(cards))) => {
                        ds_estimate_with_budgets(&x, k0, cards, Mode::NonAdaptive, None, &rng)?
                    }
                    _ => ds_estimate(&x, &params(Mode::NonAdaptive), &rng)?,
                };
                nonadaptive = Some((rep.value - truth, rep.cards));
            }
            Ok((
                adaptive.map(|(e, c, _)| TrialOutcome { error: e, card: c }),
                nonadaptive.map(|(e, c)| TrialOutcome { error: e, card: c }),
            ))
        })?;
        for (mode, pick) in [(Mode::Adaptive, 0usize), (Mode::NonAdaptive, 1usize)] {
            let selected: Vec<TrialOutcome> = outcomes
                .iter()
                .filter_map(|o| if pick == 0 { o.0 } else { o.1 })
                .collect();
            if selected.is_empty() {
                continue;
            }
            rows.push(DsRow {
                mode,
                k0,
                k1: alloc.k1,
                bound: alloc.bound(),
                stats: stats_of(&selected)?,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Norm estimation

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstConfig {
    pub v: Extended,
    pub u: Extended,
    pub population_size: usize,
    pub budgets: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for NormEstConfig {
    fn default() -> Self {
        NormEstConfig {
            v: Extended::Finite(2.0),
            u: Extended::Inf,
            population_size: 4,
            budgets: pow2s(4, 12, 1),
            trials: 500,
            seed: DEFAULT_SEED,
            workers: 1,
        }
    }
}

pub const NORM_EST_COLUMNS: [&str; 9] = [
    "v",
    "u",
    "population",
    "n",
    "trials",
    "rms_dev",
    "stderr",
    "mean_abs_dev",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstRow {
    pub n: usize,
    pub stats: ErrorStats,
}

impl NormEstConfig {
    /// `max(1/u - 1/v, -1/2)`.
    pub fn predicted_slope(&self) -> f64 {
        (self.u.recip() - self.v.recip()).max(-0.5)
    }

    /// Spike population `(P^{1/v}, 0, ..., 0)` with unit `L_v` norm.
    pub fn population(&self) -> Result<Vec<f64>> {
        let Extended::Finite(v) = self.v else {
            return Err(Error::InvalidExponent("v must be finite".into()));
        };
        if self.population_size == 0 {
            return Err(Error::InvalidParameters(
                "population must be nonempty".into(),
            ));
        }
        let mut pop = vec![0.0; self.population_size];
        pop[0] = (self.population_size as f64).powf(1.0 / v);
        Ok(pop)
    }
}

impl NormEstRow {
    pub fn cells(&self, config: &NormEstConfig) -> Vec<String> {
        vec![
            config.v.to_string(),
            config.u.to_string(),
            config.population_size.to_string(),
            self.n.to_string(),
            self.stats.trials.to_string(),
            self.stats.rms.to_string(),
            self.stats.stderr.to_string(),
            self.stats.mean_abs.to_string(),
            config.seed.to_string(),
        ]
    }
}

/// Deviation of the empirical `L_v` norm from the true norm `1` of a spike
/// population.
pub fn norm_est_experiment(config: &NormEstConfig) -> Result<Vec<NormEstRow>> {
    if config.v >= config.u {
        return Err(Error::PreconditionViolated(format!(
            "norm estimation needs v < u, got v = {}, u = {}",
            config.v, config.u
        )));
    }
    check_budgets(&config.budgets)?;
    let pop = config.population()?;
    let truth = crate::mixed_norm::lp_mean_norm(&pop, config.v);
    config
        .budgets
        .iter()
        .map(|&n| {
            let outcomes = run_indexed(config.trials, config.workers, |t| {
                let mut rng = RngStream::new(config.seed, t as u64).child(PRIMARY_STREAM);
                let est = norm_est_a1(|i| Ok(pop[i]), pop.len(), config.v, n, &mut rng)?;
                Ok(TrialOutcome {
                    error: est - truth,
                    card: n,
                })
            })?;
            Ok(NormEstRow {
                n,
                stats: stats_of(&outcomes)?,
            })
        })
        .collect()
}
