//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line; the process exits
//! nonzero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use adaptgap_core::direct_sum::{default_delta, level_allocation};
use adaptgap_core::estimators::{a3_card_bound, mc_mean_a2_nonadaptive};
use adaptgap_core::harness::{
    ds_experiment, gap_experiment, gap_family, norm_est_experiment, rate_experiment, rms_error,
    run_indexed, DsConfig, DsMode, Estimator, GapConfig, GapRow, NormEstConfig, RatePlan, Regime,
    DEFAULT_SEED,
};
use adaptgap_core::instances::HardFamily;
use adaptgap_core::{
    adaptive_mean_a3, allocate_samples, mixed_norm, rate_fit, scalar_mean, Budget, Extended,
    MixedMatrix, Mode, ProblemSpec, QueryTape, RngStream, Variant,
};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn ext(v: f64) -> Extended {
    Extended::finite(v).unwrap()
}

fn grid() -> [Extended; 5] {
    [ext(1.0), ext(1.5), ext(2.0), ext(4.0), Extended::Inf]
}

fn c01_baseline_rate() -> Outcome {
    let spec = ProblemSpec::new(64, 64, ext(2.0), ext(2.0)).unwrap();
    let family = HardFamily::new(Variant::FullBernoulli, spec).unwrap();
    let budgets = [1usize << 6, 1 << 8, 1 << 10, 1 << 12];
    let mut points = Vec::new();
    let mut rms_1024 = 0.0;
    for &n in &budgets {
        let s = rms_error(
            &family,
            Estimator::A2,
            n,
            None,
            500,
            DEFAULT_SEED,
            workers(),
        )
        .unwrap();
        if n == 1 << 10 {
            rms_1024 = s.rms;
        }
        points.push((n as f64, s.rms));
    }
    let fit = rate_fit(&points).unwrap();
    let closed = (1.0f64 / 1024.0).sqrt();
    let rel = (rms_1024 / closed - 1.0).abs();
    (
        (-0.57..=-0.43).contains(&fit.slope) && rel <= 0.15,
        format!("slope {:.4} in [-0.57, -0.43]; rms(2^10) {rms_1024:.5} vs {closed:.5} ({:.1}% off, limit 15%)", fit.slope, rel * 100.0),
    )
}

const GAP_BUDGETS: [usize; 4] = [1 << 10, 1 << 12, 1 << 14, 1 << 16];

fn c02_nonadaptive_gap_rate() -> Outcome {
    let mut points = Vec::new();
    for &n in &GAP_BUDGETS {
        let family = gap_family(n, 1.0, None).unwrap();
        let s = rms_error(
            &family,
            Estimator::A2,
            n,
            None,
            300,
            DEFAULT_SEED,
            workers(),
        )
        .unwrap();
        points.push((n as f64, s.rms));
    }
    let fit = rate_fit(&points).unwrap();
    (
        (-0.32..=-0.18).contains(&fit.slope),
        format!("slope {:.4} in [-0.32, -0.18]", fit.slope),
    )
}

fn gap_rows() -> &'static [GapRow] {
    static ROWS: OnceLock<Vec<GapRow>> = OnceLock::new();
    ROWS.get_or_init(|| {
        gap_experiment(&GapConfig {
            budgets: GAP_BUDGETS.to_vec(),
            c3: 1.0,
            trials: 300,
            seed: DEFAULT_SEED,
            regime_c0: None,
            m: None,
            workers: workers(),
        })
        .unwrap()
    })
}

fn c03_adaptive_rate() -> Outcome {
    let rows = gap_rows();
    let points: Vec<_> = rows.iter().map(|r| (r.n as f64, r.a3.rms)).collect();
    let fit = rate_fit(&points).unwrap();
    (
        (-0.60..=-0.40).contains(&fit.slope),
        format!("slope {:.4} in [-0.60, -0.40]", fit.slope),
    )
}

fn c04_adaption_gap() -> Outcome {
    let rows = gap_rows();
    let points: Vec<_> = rows.iter().map(|r| (r.n as f64, r.ratio)).collect();
    let fit = rate_fit(&points).unwrap();
    let last = rows.last().unwrap().ratio;
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.ratio)).collect();
    (
        (0.15..=0.35).contains(&fit.slope) && last > 1.0,
        format!(
            "ratio slope {:.4} in [0.15, 0.35]; ratios [{}]; ratio(2^16) {last:.3} > 1",
            fit.slope,
            ratios.join(", ")
        ),
    )
}

fn c05_cost_bounds() -> Outcome {
    let mut rng = RngStream::new(DEFAULT_SEED, 5);
    let mut violations = 0usize;
    let mut a2_violations = 0usize;
    let runs = 10_000;
    for t in 0..runs {
        let n1 = 1 + rng.index(24);
        let n2 = 1 + rng.index(24);
        let n = n1 + rng.index(4 * n1 * n2);
        let m = 1 + rng.index(8);
        let p = if rng.index(2) == 0 {
            ext(1.0)
        } else {
            ext(1.0 + rng.unit())
        };
        let spec = ProblemSpec::new(n1, n2, p, Extended::Inf).unwrap();
        let variant = Variant::ALL[rng.index(4)];
        let f = HardFamily::new(variant, spec).unwrap().sample(&mut rng);
        let mut tape = QueryTape::open_adaptive(&f, Budget::Unbounded);
        let rep = adaptive_mean_a3(&mut tape, n, m, p, &RngStream::new(t as u64, 1)).unwrap();
        if rep.cards > a3_card_bound(n, m) || rep.cards != tape.card() {
            violations += 1;
        }
        let rep2 = mc_mean_a2_nonadaptive(&f, n, &mut RngStream::new(t as u64, 2)).unwrap();
        if rep2.cards != n {
            a2_violations += 1;
        }
    }
    (
        violations == 0 && a2_violations == 0,
        format!("{runs} runs: {violations} adaptive runs above 6mn, {a2_violations} Monte Carlo runs with card != n"),
    )
}

/// Direct evaluation of the stage-2 sample sizes on exact integers.
fn allocation_oracle_int(a: &[u64], n: u64) -> Vec<usize> {
    let n1 = a.len() as u64;
    let total: u64 = a.iter().sum();
    let base = n.div_ceil(n1);
    a.iter()
        .map(|&x| {
            // x <= total / n1  <=>  x n1 <= total
            if x * n1 <= total {
                base as usize
            } else {
                (x * n).div_ceil(total) as usize
            }
        })
        .collect()
}

fn allocation_oracle_real(a: &[f64], p: f64, n: usize) -> Vec<usize> {
    let mut total = 0.0;
    for x in a {
        total += x.powf(p);
    }
    let n1 = a.len();
    a.iter()
        .map(|x| {
            let w = x.powf(p);
            if w <= total / n1 as f64 {
                n.div_ceil(n1)
            } else {
                (w * n as f64 / total).ceil() as usize
            }
        })
        .collect()
}

fn c06_allocation_oracle() -> Outcome {
    let mut rng = RngStream::new(DEFAULT_SEED, 6);
    let mut mismatches = 0usize;
    let mut floor_violations = 0usize;
    let cases = 10_000;
    for t in 0..cases {
        let n1 = 1 + rng.index(20);
        let n = n1 + rng.index(50 * n1);
        let (got, want) = if t % 2 == 0 {
            // small integers make exact ties frequent
            let a: Vec<u64> = (0..n1).map(|_| rng.index(5) as u64).collect();
            let af: Vec<f64> = a.iter().map(|&x| x as f64).collect();
            (
                allocate_samples(&af, ext(1.0), n).unwrap(),
                allocation_oracle_int(&a, n as u64),
            )
        } else {
            let p = 1.0 + 0.999 * rng.unit();
            let a: Vec<f64> = (0..n1).map(|_| 10.0 * rng.unit()).collect();
            (
                allocate_samples(&a, ext(p), n).unwrap(),
                allocation_oracle_real(&a, p, n),
            )
        };
        if got != want {
            mismatches += 1;
        }
        if got.iter().any(|&ni| ni < n.div_ceil(n1)) {
            floor_violations += 1;
        }
    }
    (
        mismatches == 0 && floor_violations == 0,
        format!("{cases} inputs: {mismatches} mismatches against direct evaluation, {floor_violations} below ceil(n/N1)"),
    )
}

fn c07_unbiasedness() -> Outcome {
    let mut worst: f64 = 0.0;
    let reps = 10_000;
    for k in 0..5u64 {
        let mut rng = RngStream::new(DEFAULT_SEED, 700 + k);
        let (n1, n2) = (3 + rng.index(10), 3 + rng.index(10));
        let entries = (0..n1 * n2).map(|_| 4.0 * rng.unit() - 1.0).collect();
        let spec = ProblemSpec::new(n1, n2, ext(2.0), ext(2.0)).unwrap();
        let f = MixedMatrix::new(spec, entries).unwrap();
        let truth = scalar_mean(&f);
        let estimates = run_indexed(reps, workers(), |t| {
            let mut s = RngStream::new(DEFAULT_SEED ^ k, t as u64);
            Ok(mc_mean_a2_nonadaptive(&f, 8, &mut s)?.value)
        })
        .unwrap();
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        worst = worst.max((mean - truth).abs() / se);
    }
    (
        worst <= 3.0,
        format!("largest deviation {worst:.3} standard errors (limit 3) over 5 matrices"),
    )
}

fn c08_norm_estimation() -> Outcome {
    let config = NormEstConfig {
        trials: 2000,
        workers: workers(),
        ..NormEstConfig::default()
    };
    let rows = norm_est_experiment(&config).unwrap();
    let points: Vec<_> = rows.iter().map(|r| (r.n as f64, r.stats.rms)).collect();
    let fit = rate_fit(&points).unwrap();
    (
        (-0.60..=-0.40).contains(&fit.slope),
        format!(
            "slope {:.4} in [-0.60, -0.40] (predicted {})",
            fit.slope,
            config.predicted_slope()
        ),
    )
}

fn c09_unit_ball() -> Outcome {
    let mut violations = 0usize;
    let mut draws = 0usize;
    let mut worst: f64 = 0.0;
    for (vi, variant) in Variant::ALL.into_iter().enumerate() {
        for (pi, p) in grid().into_iter().enumerate() {
            if variant == Variant::ActiveRowBernoulli && p.is_inf() {
                continue;
            }
            for (ui, u) in grid().into_iter().enumerate() {
                let mut rng = RngStream::new(DEFAULT_SEED, (vi * 100 + pi * 10 + ui) as u64);
                for _ in 0..10_000 {
                    let spec =
                        ProblemSpec::new(1 + rng.index(12), 1 + rng.index(12), p, u).unwrap();
                    let f = HardFamily::new(variant, spec).unwrap().sample(&mut rng);
                    let norm = mixed_norm(&f);
                    worst = worst.max(norm);
                    draws += 1;
                    if norm > 1.0 + 1e-12 {
                        violations += 1;
                    }
                }
            }
        }
    }
    (
        violations == 0,
        format!("{draws} draws, {violations} with norm > 1 + 1e-12, largest norm {worst:.15}"),
    )
}

fn c10_direct_sum() -> Outcome {
    let mut bound_violations = 0usize;
    let mut schedules = 0usize;
    for k0 in 1..=8u32 {
        for alpha in [1.25, 1.5, 2.0, 3.0, 4.0] {
            for c0 in [0.1, 0.5, 0.75, 0.99] {
                for frac in [0.1, 0.5, 0.9] {
                    let delta = frac * (alpha - 1.0);
                    let a = level_allocation(k0, alpha, delta, c0).unwrap();
                    schedules += 1;
                    if a.total() > a.bound() {
                        bound_violations += 1;
                    }
                }
            }
        }
    }
    let config = DsConfig {
        alpha: 1.5,
        p: ext(1.0),
        u: Extended::Inf,
        p1: ext(1.0),
        k0s: vec![4, 5, 6],
        delta: Some(default_delta(1.5)),
        c0: 0.75,
        m: None,
        mode: DsMode::Both,
        trials: 200,
        seed: DEFAULT_SEED,
        workers: workers(),
    };
    let rows = ds_experiment(&config).unwrap();
    let mut ratios = Vec::new();
    let mut dominated = true;
    for &k0 in &config.k0s {
        let pick = |mode| rows.iter().find(|r| r.k0 == k0 && r.mode == mode).unwrap();
        let (a, na) = (pick(Mode::Adaptive), pick(Mode::NonAdaptive));
        dominated &= a.stats.rms <= na.stats.rms;
        ratios.push(na.stats.rms / a.stats.rms);
    }
    let monotone = ratios.windows(2).all(|w| w[1] >= w[0]);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    (
        bound_violations == 0 && dominated && monotone,
        format!(
            "{schedules} schedules, {bound_violations} over c3 4^k0; non-adaptive/adaptive rms at k0 = 4,5,6: [{}]",
            shown.join(", ")
        ),
    )
}

fn c11_determinism() -> Outcome {
    let mut gap = GapConfig {
        budgets: vec![64, 128, 256, 512],
        c3: 5.0,
        trials: 40,
        regime_c0: Some(adaptgap_core::instances::DEFAULT_REGIME_C0),
        workers: 1,
        ..GapConfig::default()
    };
    let serial = gap_experiment(&gap).unwrap();
    gap.workers = 4;
    let parallel = gap_experiment(&gap).unwrap();
    let gap_same = serial
        .iter()
        .zip(&parallel)
        .all(|(a, b)| a.cells(gap.seed) == b.cells(gap.seed));

    let mut plan = RatePlan::for_regime(Regime::TwoLePLtU);
    plan.trials = 30;
    plan.workers = 1;
    let t1 = rate_experiment(&plan).unwrap().table();
    plan.workers = 3;
    let t3 = rate_experiment(&plan).unwrap().table();

    let mut ds = DsConfig {
        k0s: vec![3, 4],
        trials: 20,
        c0: 0.75,
        workers: 1,
        ..DsConfig::default()
    };
    let d1: Vec<_> = ds_experiment(&ds)
        .unwrap()
        .iter()
        .map(|r| r.cells(&ds))
        .collect();
    ds.workers = 5;
    let d5: Vec<_> = ds_experiment(&ds)
        .unwrap()
        .iter()
        .map(|r| r.cells(&ds))
        .collect();

    let ok = gap_same && t1 == t3 && d1 == d5;
    (
        ok,
        format!(
            "gap 1 vs 4 workers identical: {gap_same}; rates 1 vs 3: {}; direct sum 1 vs 5: {}",
            t1 == t3,
            d1 == d5
        ),
    )
}

fn brute_norm(rows: &[Vec<f64>], p: Extended, u: Extended) -> f64 {
    fn lp(values: &[f64], e: Extended) -> f64 {
        match e {
            Extended::Inf => values
                .iter()
                .fold(0.0, |m, x| if x.abs() > m { x.abs() } else { m }),
            Extended::Finite(e) => {
                let mut s = 0.0;
                for x in values {
                    s += x.abs().powf(e);
                }
                (s / values.len() as f64).powf(1.0 / e)
            }
        }
    }
    let row_norms: Vec<f64> = rows.iter().map(|r| lp(r, u)).collect();
    lp(&row_norms, p)
}

fn c12_small_instances() -> Outcome {
    let mut shapes = Vec::new();
    for n1 in 1..=16usize {
        for n2 in 1..=16 / n1 {
            shapes.push((n1, n2));
        }
    }
    let mut mean_mismatches = 0usize;
    let mut mean_checked = 0usize;
    let mut norm_mismatches = 0usize;
    let mut norm_checked = 0usize;
    let mut worst: f64 = 0.0;
    for &(n1, n2) in &shapes {
        let len = n1 * n2;
        let spec = ProblemSpec::new(n1, n2, ext(2.0), ext(2.0)).unwrap();
        // every sign pattern in {-1, 0, 1}^len
        let mut digits = vec![0usize; len];
        let mut entries = vec![-1.0f64; len];
        loop {
            let f = MixedMatrix::new(spec, entries.clone()).unwrap();
            let mut sum = 0i64;
            for i in 0..n1 {
                for j in 0..n2 {
                    sum += entries[i * n2 + j] as i64;
                }
            }
            mean_checked += 1;
            if scalar_mean(&f) != sum as f64 / len as f64 {
                mean_mismatches += 1;
            }
            let mut k = 0;
            while k < len && digits[k] == 2 {
                digits[k] = 0;
                entries[k] = -1.0;
                k += 1;
            }
            if k == len {
                break;
            }
            digits[k] += 1;
            entries[k] += 1.0;
        }
        // the norm only sees magnitudes, so the {0, 1} patterns give every
        // distinct value; signs are flipped pseudo-randomly as a check
        let mut rng = RngStream::new(DEFAULT_SEED, (n1 * 32 + n2) as u64);
        for mask in 0u32..(1 << len) {
            let signed: Vec<f64> = (0..len)
                .map(|k| if mask >> k & 1 == 1 { rng.sign() } else { 0.0 })
                .collect();
            let rows: Vec<Vec<f64>> = signed.chunks(n2).map(|c| c.to_vec()).collect();
            for p in grid() {
                for u in grid() {
                    let f = MixedMatrix::from_rows(p, u, &rows).unwrap();
                    let diff = (mixed_norm(&f) - brute_norm(&rows, p, u)).abs();
                    worst = worst.max(diff);
                    norm_checked += 1;
                    if diff > 1e-13 {
                        norm_mismatches += 1;
                    }
                }
            }
        }
    }
    (
        mean_mismatches == 0 && norm_mismatches == 0,
        format!(
            "{} shapes; means: {mean_checked} matrices, {mean_mismatches} mismatches; norms: {norm_checked} evaluations, {norm_mismatches} off by > 1e-13 (max diff {worst:.2e})",
            shapes.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("baseline Monte Carlo rate", c01_baseline_rate),
        (
            "non-adaptive rate on the active-row family",
            c02_nonadaptive_gap_rate,
        ),
        ("adaptive rate on the active-row family", c03_adaptive_rate),
        ("adaption gap at matched budgets", c04_adaption_gap),
        ("query cost bounds", c05_cost_bounds),
        (
            "allocation against direct evaluation",
            c06_allocation_oracle,
        ),
        ("Monte Carlo unbiasedness", c07_unbiasedness),
        ("norm estimation rate", c08_norm_estimation),
        ("hard families lie in the unit ball", c09_unit_ball),
        ("composite budget and direction", c10_direct_sum),
        ("determinism across worker counts", c11_determinism),
        ("small-instance exhaustive oracle", c12_small_instances),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (k, (title, check)) in criteria.iter().enumerate() {
        let id = format!("{:02}", k + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} {} {title}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
