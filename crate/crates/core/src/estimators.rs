//! Randomized estimators for the mean `I f = (1/(N1 N2)) sum_ij f(i,j)`.
//!
//! * [`median`]: the median map used to boost confidence.
//! * [`norm_est_a1`]: empirical `L_v` norm from i.i.d. uniform samples.
//! * [`mc_mean_a2`]: plain Monte Carlo over uniformly drawn entries.
//! * [`adaptive_mean_a3`]: two-stage estimator. Stage 1 estimates every row's
//!   `L_2` norm by the median of `m` independent probes, stage 2 spends more
//!   samples on rows with large estimated norm (see [`allocate_samples`]).

use crate::error::{Error, Result};
use crate::mixed_norm::{abs_pow, compensated_sum, root, Extended, MixedMatrix, ProblemSpec};
use crate::oracle::{Budget, QueryTape};
use crate::rng::RngStream;

/// Child-stream tag for stage 1 of the adaptive estimator.
pub const STAGE1_STREAM: u64 = 1;
/// Child-stream tag for stage 2 of the adaptive estimator.
pub const STAGE2_STREAM: u64 = 2;

/// Relative slack under which `a_i^p` counts as not exceeding the mean of
/// the `a_l^p`, so exact ties survive rounding in the sum.
pub const ALLOCATION_TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub value: f64,
    /// Total number of queries issued.
    pub cards: usize,
    /// `(stage 1, stage 2)` query counts for two-stage estimators.
    pub stage_cards: Option<(usize, usize)>,
    /// Per-row (or per-level) sample counts.
    pub allocation: Option<Vec<usize>>,
}

/// Median of a nonempty slice; the mean of the two middle values for even
/// lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    Ok(if m % 2 == 1 {
        sorted[m / 2]
    } else {
        (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
    })
}

/// `((1/n) sum_{i<n} |f(xi_i)|^v)^(1/v)` with `xi_i` i.i.d. uniform on
/// `0..population_size`.
pub fn norm_est_a1<F>(
    mut sample: F,
    population_size: usize,
    v: Extended,
    n: usize,
    rng: &mut RngStream,
) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let Extended::Finite(v) = v else {
        return Err(Error::InvalidExponent(
            "norm estimation needs a finite exponent v".into(),
        ));
    };
    if n == 0 || population_size == 0 {
        return Err(Error::PreconditionViolated(
            "norm estimation needs n >= 1 and a nonempty population".into(),
        ));
    }
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let idx = rng.index(population_size);
        terms.push(abs_pow(sample(idx)?, v));
    }
    Ok(root(compensated_sum(terms) / n as f64, v))
}

/// `n` entry positions drawn uniformly with replacement.
pub fn draw_indices(spec: &ProblemSpec, n: usize, rng: &mut RngStream) -> Vec<(usize, usize)> {
    let total = spec.entry_count();
    let n2 = spec.n2();
    (0..n)
        .map(|_| {
            let k = rng.index(total);
            (k / n2, k % n2)
        })
        .collect()
}

/// Plain Monte Carlo mean from `n` uniform entry samples.
///
/// On a non-adaptive tape the declared list must be the output of
/// [`draw_indices`] for an identical stream; see [`mc_mean_a2_nonadaptive`].
pub fn mc_mean_a2(
    tape: &mut QueryTape<'_>,
    n: usize,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::PreconditionViolated(
            "sample size n must be positive".into(),
        ));
    }
    let before = tape.card();
    let indices = draw_indices(tape.spec(), n, rng);
    let mut values = Vec::with_capacity(n);
    for (i, j) in indices {
        values.push(tape.query(i, j)?);
    }
    Ok(EstimateReport {
        value: compensated_sum(values) / n as f64,
        cards: tape.card() - before,
        stage_cards: None,
        allocation: None,
    })
}

/// Runs [`mc_mean_a2`] on a non-adaptive tape whose query list is declared
/// before any entry is read.
pub fn mc_mean_a2_nonadaptive(
    f: &MixedMatrix,
    n: usize,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    let declared = draw_indices(f.spec(), n, &mut rng.clone());
    let mut tape = QueryTape::open_nonadaptive(f, declared)?;
    mc_mean_a2(&mut tape, n, rng)
}

fn check_adaptive_exponent(p: Extended) -> Result<f64> {
    match p {
        Extended::Finite(v) if (1.0..2.0).contains(&v) => Ok(v),
        _ => Err(Error::InvalidExponent(format!(
            "adaptive allocation needs 1 <= p < 2, got p = {p}"
        ))),
    }
}

/// Stage-2 sample sizes.
///
/// Row `i` receives `ceil(n/N1)` samples when `a_i^p` does not exceed the
/// average of the `a_l^p`, and `ceil(a_i^p n / sum_l a_l^p)` otherwise.
pub fn allocate_samples(a_tilde: &[f64], p: Extended, n: usize) -> Result<Vec<usize>> {
    let p = check_adaptive_exponent(p)?;
    let n1 = a_tilde.len();
    if n1 == 0 {
        return Err(Error::EmptyInput);
    }
    if n < n1 {
        return Err(Error::PreconditionViolated(format!(
            "allocation needs n >= N1, got n = {n}, N1 = {n1}"
        )));
    }
    if let Some(a) = a_tilde.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidParameters(format!(
            "row norm estimates must be finite and nonnegative, got {a}"
        )));
    }
    let base = n.div_ceil(n1);
    let powers: Vec<f64> = a_tilde.iter().map(|&a| abs_pow(a, p)).collect();
    let total = compensated_sum(powers.iter().copied());
    let average = total / n1 as f64;
    Ok(powers
        .iter()
        .map(|&w| {
            if w <= average * (1.0 + ALLOCATION_TIE_RTOL) {
                base
            } else {
                ((w * n as f64 / total).ceil() as usize).max(base)
            }
        })
        .collect())
}

/// `max(1, ceil(log2(N1 + 1)))`, the default number of stage-1 repetitions.
pub fn default_m(n1: usize) -> usize {
    ((n1 as f64 + 1.0).log2().ceil() as usize).max(1)
}

/// Repetition count sufficient for the high-probability guarantee on all
/// rows at once: `m >= 16 ln(N1 + 1)`, i.e. `c_1 log2(N1 + 1)` with
/// `c_1 = 16 / log2(e)`, which makes `exp(-m/8) <= (N1 + 1)^-2`.
pub fn proof_m(n1: usize) -> usize {
    ((16.0 * (n1 as f64 + 1.0).ln()).ceil() as usize).max(1)
}

/// Upper bound `6 m n` on the queries of [`adaptive_mean_a3`].
pub fn a3_card_bound(n: usize, m: usize) -> usize {
    6 * m * n
}

/// Two-stage adaptive mean estimator for `1 <= p < 2 < u`.
///
/// Stage 1 draws, for each of `m` repetitions, `ceil(n/N1)` columns shared
/// by all rows and forms the root mean square of each row over them; the
/// row norm estimate is the median over repetitions. Stage 2 samples row
/// `i` at `n_i` fresh uniform columns and returns the average of the row
/// means.
pub fn adaptive_mean_a3(
    tape: &mut QueryTape<'_>,
    n: usize,
    m: usize,
    p: Extended,
    rng: &RngStream,
) -> Result<EstimateReport> {
    let spec = *tape.spec();
    let (n1, n2) = (spec.n1(), spec.n2());
    if tape.mode() != crate::oracle::Mode::Adaptive {
        return Err(Error::PreconditionViolated(
            "adaptive estimator needs an adaptive tape".into(),
        ));
    }
    if n < n1 {
        return Err(Error::PreconditionViolated(format!(
            "adaptive estimator needs n >= N1, got n = {n}, N1 = {n1}"
        )));
    }
    if m == 0 {
        return Err(Error::PreconditionViolated(
            "repetition count m must be positive".into(),
        ));
    }
    match p {
        Extended::Finite(v) if (1.0..2.0).contains(&v) => {}
        _ => {
            return Err(Error::PreconditionViolated(format!(
                "adaptive estimator needs 1 <= p < 2, got p = {p}"
            )))
        }
    }
    if spec.u().as_f64() <= 2.0 {
        return Err(Error::PreconditionViolated(format!(
            "adaptive estimator needs u > 2, got u = {}",
            spec.u()
        )));
    }
    if let Budget::Bounded(b) = tape.budget() {
        let needed = a3_card_bound(n, m);
        if b < needed {
            return Err(Error::PreconditionViolated(format!(
                "tape budget {b} below the adaptive bound 6mn = {needed}"
            )));
        }
    }

    let before = tape.card();
    let probe = n.div_ceil(n1);

    let mut stage1 = rng.child(STAGE1_STREAM);
    let mut probes = vec![Vec::with_capacity(m); n1];
    let mut squares = Vec::with_capacity(probe);
    for _ in 0..m {
        let cols: Vec<usize> = (0..probe).map(|_| stage1.index(n2)).collect();
        for (i, row_probes) in probes.iter_mut().enumerate() {
            squares.clear();
            for &j in &cols {
                let x = tape.query(i, j)?;
                squares.push(x * x);
            }
            row_probes.push((compensated_sum(squares.iter().copied()) / probe as f64).sqrt());
        }
    }
    let a_tilde = probes
        .iter()
        .map(|ps| median(ps))
        .collect::<Result<Vec<f64>>>()?;
    let stage1_cards = tape.card() - before;

    let allocation = allocate_samples(&a_tilde, p, n)?;

    let mut stage2 = rng.child(STAGE2_STREAM);
    let mut row_estimates = Vec::with_capacity(n1);
    let mut values = Vec::new();
    for (i, &ni) in allocation.iter().enumerate() {
        values.clear();
        for _ in 0..ni {
            let j = stage2.index(n2);
            values.push(tape.query(i, j)?);
        }
        row_estimates.push(compensated_sum(values.iter().copied()) / ni as f64);
    }
    let cards = tape.card() - before;

    Ok(EstimateReport {
        value: compensated_sum(row_estimates) / n1 as f64,
        cards,
        stage_cards: Some((stage1_cards, cards - stage1_cards)),
        allocation: Some(allocation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixed_norm::scalar_mean;

    fn ext(v: f64) -> Extended {
        Extended::finite(v).unwrap()
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[]), Err(Error::EmptyInput));
    }

    #[test]
    fn a1_constant_population() {
        let mut rng = RngStream::new(3, 0);
        for n in [1, 7, 100] {
            let est = norm_est_a1(|_| Ok(-1.25), 10, ext(2.0), n, &mut rng).unwrap();
            assert!((est - 1.25).abs() < 1e-15);
        }
    }

    #[test]
    fn a1_single_draw_hits_spike() {
        let pop = [2.0, 0.0, 0.0, 0.0];
        let mut rng = RngStream::new(0, 0);
        let mut hits = 0;
        for _ in 0..200 {
            let est = norm_est_a1(|i| Ok(pop[i]), 4, ext(2.0), 1, &mut rng).unwrap();
            assert!(est == 2.0 || est == 0.0);
            if est == 2.0 {
                hits += 1;
            }
        }
        assert!(hits > 0);
        assert!(norm_est_a1(|i| Ok(pop[i]), 4, Extended::Inf, 1, &mut rng).is_err());
    }

    #[test]
    fn a2_constant_input() {
        let spec = ProblemSpec::new(4, 5, ext(2.0), ext(2.0)).unwrap();
        let f = MixedMatrix::constant(spec, 0.3).unwrap();
        let mut tape = QueryTape::open_adaptive(&f, Budget::Bounded(17));
        let rep = mc_mean_a2(&mut tape, 17, &mut RngStream::new(1, 1)).unwrap();
        assert!((rep.value - 0.3).abs() < 1e-15);
        assert_eq!(rep.cards, 17);
        assert_eq!(tape.card(), 17);
    }

    #[test]
    fn a2_budget_too_small() {
        let spec = ProblemSpec::new(2, 2, ext(2.0), ext(2.0)).unwrap();
        let f = MixedMatrix::zeros(spec);
        let mut tape = QueryTape::open_adaptive(&f, Budget::Bounded(3));
        assert!(matches!(
            mc_mean_a2(&mut tape, 4, &mut RngStream::new(1, 1)),
            Err(Error::BudgetExceeded { budget: 3 })
        ));
    }

    #[test]
    fn a2_nonadaptive_matches_adaptive() {
        let spec = ProblemSpec::new(3, 3, ext(2.0), ext(2.0)).unwrap();
        let f = MixedMatrix::new(spec, (0..9).map(f64::from).collect()).unwrap();
        let rng = RngStream::new(9, 2);
        let a = mc_mean_a2_nonadaptive(&f, 50, &mut rng.clone()).unwrap();
        let mut tape = QueryTape::open_adaptive(&f, Budget::Unbounded);
        let b = mc_mean_a2(&mut tape, 50, &mut rng.clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(
            allocate_samples(&[0.7; 3], ext(1.3), 10).unwrap(),
            vec![4, 4, 4]
        );
        assert_eq!(
            allocate_samples(&[1.0, 0.0], ext(1.0), 10).unwrap(),
            vec![10, 5]
        );
        assert_eq!(
            allocate_samples(&[2.0, 1.0, 1.0], ext(1.0), 9).unwrap(),
            vec![5, 3, 3]
        );
        assert_eq!(
            allocate_samples(&[0.0; 4], ext(1.0), 8).unwrap(),
            vec![2; 4]
        );
        assert!(matches!(
            allocate_samples(&[1.0], ext(2.0), 4),
            Err(Error::InvalidExponent(_))
        ));
        assert!(matches!(
            allocate_samples(&[1.0], Extended::Inf, 4),
            Err(Error::InvalidExponent(_))
        ));
        assert!(matches!(
            allocate_samples(&[1.0, 1.0], ext(1.0), 1),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn repetition_counts() {
        assert_eq!(default_m(1), 1);
        assert_eq!(default_m(3), 2);
        assert_eq!(default_m(64), 7);
        // 16 ln 2 = 11.09
        assert_eq!(proof_m(1), 12);
    }

    #[test]
    fn a3_constant_input() {
        let spec = ProblemSpec::new(4, 6, ext(1.0), Extended::Inf).unwrap();
        let f = MixedMatrix::constant(spec, -2.0).unwrap();
        let mut tape = QueryTape::open_adaptive(&f, Budget::Unbounded);
        let rep = adaptive_mean_a3(&mut tape, 20, 3, ext(1.0), &RngStream::new(4, 0)).unwrap();
        assert_eq!(rep.value, -2.0);
        assert_eq!(rep.cards, tape.card());
        let (s1, s2) = rep.stage_cards.unwrap();
        assert_eq!(s1, 3 * 4 * 5);
        assert_eq!(s2, rep.allocation.as_ref().unwrap().iter().sum::<usize>());
        assert!(rep.cards <= a3_card_bound(20, 3));
    }

    #[test]
    fn a3_preconditions() {
        let spec = ProblemSpec::new(4, 6, ext(1.0), Extended::Inf).unwrap();
        let f = MixedMatrix::zeros(spec);
        let rng = RngStream::new(0, 0);
        let mut tape = QueryTape::open_adaptive(&f, Budget::Unbounded);
        assert!(matches!(
            adaptive_mean_a3(&mut tape, 3, 2, ext(1.0), &rng),
            Err(Error::PreconditionViolated(_))
        ));
        assert!(matches!(
            adaptive_mean_a3(&mut tape, 8, 2, ext(2.0), &rng),
            Err(Error::PreconditionViolated(_))
        ));
        let mut small = QueryTape::open_adaptive(&f, Budget::Bounded(10));
        assert!(matches!(
            adaptive_mean_a3(&mut small, 8, 2, ext(1.0), &rng),
            Err(Error::PreconditionViolated(_))
        ));
        let g = MixedMatrix::zeros(ProblemSpec::new(4, 6, ext(1.0), ext(2.0)).unwrap());
        let mut tape = QueryTape::open_adaptive(&g, Budget::Unbounded);
        assert!(matches!(
            adaptive_mean_a3(&mut tape, 8, 2, ext(1.0), &rng),
            Err(Error::PreconditionViolated(_))
        ));
        let mut na = QueryTape::open_nonadaptive(&f, vec![]).unwrap();
        assert!(adaptive_mean_a3(&mut na, 8, 2, ext(1.0), &rng).is_err());
    }

    #[test]
    fn a3_finds_active_row() {
        let (n1, n2) = (8, 16);
        let spec = ProblemSpec::new(n1, n2, ext(1.0), Extended::Inf).unwrap();
        let mut rows = vec![vec![0.0; n2]; n1];
        for (j, x) in rows[5].iter_mut().enumerate() {
            *x = if j % 3 == 0 { -8.0 } else { 8.0 };
        }
        let f = MixedMatrix::from_rows(spec.p(), spec.u(), &rows).unwrap();
        let n = 64;
        let mut tape = QueryTape::open_adaptive(&f, Budget::Unbounded);
        let rep = adaptive_mean_a3(&mut tape, n, 4, ext(1.0), &RngStream::new(2, 2)).unwrap();
        let alloc = rep.allocation.unwrap();
        for (i, &ni) in alloc.iter().enumerate() {
            assert_eq!(ni, if i == 5 { n } else { n / n1 });
        }
        assert!((rep.value - scalar_mean(&f)).abs() < 1.0);
    }

    #[test]
    fn a3_reproducible() {
        let spec = ProblemSpec::new(5, 9, ext(1.5), ext(3.0)).unwrap();
        let f =
            MixedMatrix::new(spec, (0..45).map(|k| ((k * 7) % 11) as f64 - 5.0).collect()).unwrap();
        let rng = RngStream::new(42, 7);
        let run = || {
            let mut tape = QueryTape::open_adaptive(&f, Budget::Unbounded);
            adaptive_mean_a3(&mut tape, 30, 3, ext(1.5), &rng).unwrap()
        };
        assert_eq!(run(), run());
    }
}
