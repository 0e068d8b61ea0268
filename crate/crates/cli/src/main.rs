mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptgap_core::direct_sum::{default_delta, level_allocation, DEFAULT_C0};
use adaptgap_core::estimators::{
    a3_card_bound, adaptive_mean_a3, default_m, mc_mean_a2_nonadaptive,
};
use adaptgap_core::harness::{
    ds_experiment, gap_experiment, gap_fits, norm_est_experiment, rate_experiment, DsConfig,
    DsMode, Estimator, GapConfig, NormEstConfig, RatePlan, Regime, Table, DEFAULT_SEED, DS_COLUMNS,
    GAP_COLUMNS, NORM_EST_COLUMNS,
};
use adaptgap_core::instances::{HardFamily, DEFAULT_REGIME_C0};
use adaptgap_core::{
    rate_fit, scalar_mean, Budget, Extended, MixedMatrix, ProblemSpec, QueryTape, RngStream,
    Variant,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use output::{Format, Report};

#[derive(Debug, Parser)]
#[command(
    name = "adaptgap",
    version,
    about = "Adaptive vs non-adaptive Monte Carlo mean estimation on mixed-norm spaces"
)]
struct Cli {
    /// Worker threads for independent trials; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one estimator on one input and print the estimate.
    Estimate(EstimateArgs),
    /// Error-vs-budget curves for one smoothness regime.
    Rates(RatesArgs),
    /// Adaptive vs non-adaptive error at matched query counts.
    Gap(GapArgs),
    /// Composite estimator on the multi-level space.
    Ds(DsArgs),
    /// Convergence of the empirical L_v norm.
    NormEst(NormEstArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed.
    #[arg(long, env = "ADAPTGAP_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, default_value = "mu2")]
    family: Variant,
    #[arg(long, default_value = "a2")]
    alg: Estimator,
    #[arg(long, default_value_t = 64)]
    n1: usize,
    #[arg(long, default_value_t = 64)]
    n2: usize,
    #[arg(long, default_value = "1")]
    p: Extended,
    #[arg(long, default_value = "inf")]
    u: Extended,
    /// Query budget parameter.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Stage-1 repetitions of the adaptive estimator.
    #[arg(long)]
    m: Option<usize>,
    /// Read the matrix from a headerless CSV file (one row per line)
    /// instead of sampling it; overrides --family, --n1 and --n2.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Guard {
    /// Constant of the lower-bound regime guard n < c0 N1 N2.
    #[arg(long, default_value_t = DEFAULT_REGIME_C0)]
    regime_c0: f64,
    /// Skip the regime guard.
    #[arg(long)]
    no_guard: bool,
}

impl Guard {
    fn c0(&self) -> Option<f64> {
        (!self.no_guard).then_some(self.regime_c0)
    }
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[arg(long)]
    regime: Regime,
    #[arg(long, default_value_t = 300)]
    trials: usize,
    /// Replace the budget grid of every series.
    #[arg(long, value_delimiter = ',', value_parser = parse_budget)]
    budgets: Option<Vec<usize>>,
    #[command(flatten)]
    guard: Guard,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct GapArgs {
    /// Comma-separated budgets; `2^k` is accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_budget, default_value = "2^10,2^12,2^14,2^16")]
    budgets: Vec<usize>,
    /// N1 = N2 = ceil(c3 sqrt(n)).
    #[arg(long, default_value_t = 5.0)]
    c3: f64,
    #[arg(long, default_value_t = 300)]
    trials: usize,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    guard: Guard,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct DsArgs {
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value = "1")]
    p: Extended,
    #[arg(long, default_value = "inf")]
    u: Extended,
    /// Exponent of the sum over levels.
    #[arg(long, default_value = "1")]
    p1: Extended,
    #[arg(long, value_delimiter = ',', default_value = "4,5,6")]
    k0: Vec<u32>,
    /// Budget decay across levels; defaults to (alpha - 1)/2.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C0)]
    c0: f64,
    #[arg(long)]
    m: Option<usize>,
    /// adaptive, nonadaptive, or both (non-adaptive at matched budgets).
    #[arg(long, default_value = "both")]
    mode: DsMode,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct NormEstArgs {
    #[arg(long, default_value = "2")]
    v: Extended,
    #[arg(long, default_value = "inf")]
    u: Extended,
    /// Size of the spike population.
    #[arg(long, default_value_t = 4)]
    population: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_budget, default_value = "2^4,2^5,2^6,2^7,2^8,2^9,2^10,2^11,2^12")]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[command(flatten)]
    common: Common,
}

fn parse_budget(s: &str) -> std::result::Result<usize, String> {
    let s = s.trim();
    let parsed = match s.split_once('^') {
        Some((base, exp)) => {
            let base: usize = base.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let exp: u32 = exp.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            base.checked_pow(exp)
                .ok_or_else(|| format!("{s} overflows"))?
        }
        None => s.parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if parsed == 0 {
        return Err("budgets must be positive".into());
    }
    Ok(parsed)
}

fn join<T: ToString>(values: &[T], sep: &str) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn load_matrix(path: &Path, p: Extended, u: Extended) -> Result<MixedMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| {
                    adaptgap_core::Error::InvalidParameters(format!(
                        "row {}: cannot parse {cell:?}",
                        line + 1
                    ))
                })
            })
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(MixedMatrix::from_rows(p, u, &rows)?)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<Report> {
    let stream = RngStream::new(args.common.seed, 0);
    let f = match &args.input {
        Some(path) => load_matrix(path, args.p, args.u)?,
        None => {
            let spec = ProblemSpec::new(args.n1, args.n2, args.p, args.u)?;
            HardFamily::new(args.family, spec)?.sample(&mut stream.child(0))
        }
    };
    let spec = *f.spec();
    let truth = scalar_mean(&f);
    let rng = stream.child(1);

    let mut report = Report::new("estimate");
    match &args.input {
        Some(path) => report.set("input", path.display()),
        None => report.set("family", args.family),
    }
    report.set("alg", args.alg);
    report.set("N1", spec.n1());
    report.set("N2", spec.n2());
    report.set("p", spec.p());
    report.set("u", spec.u());
    report.set("n", args.n);

    let mut rows: Vec<(&str, String)> = Vec::new();
    match args.alg {
        Estimator::A2 => {
            let rep = mc_mean_a2_nonadaptive(&f, args.n, &mut rng.clone())?;
            rows.push(("value", rep.value.to_string()));
            rows.push(("true_mean", truth.to_string()));
            rows.push(("error", (rep.value - truth).to_string()));
            rows.push(("card", rep.cards.to_string()));
        }
        Estimator::A3 => {
            let m = args.m.unwrap_or_else(|| default_m(spec.n1()));
            report.set("m", m);
            let mut tape = QueryTape::open_adaptive(&f, Budget::Bounded(a3_card_bound(args.n, m)));
            let rep = adaptive_mean_a3(&mut tape, args.n, m, spec.p(), &rng)?;
            let (s1, s2) = rep.stage_cards.unwrap_or_default();
            rows.push(("value", rep.value.to_string()));
            rows.push(("true_mean", truth.to_string()));
            rows.push(("error", (rep.value - truth).to_string()));
            rows.push(("card", rep.cards.to_string()));
            rows.push(("card_bound", a3_card_bound(args.n, m).to_string()));
            rows.push(("stage1_card", s1.to_string()));
            rows.push(("stage2_card", s2.to_string()));
            rows.push(("allocation", join(&rep.allocation.unwrap_or_default(), " ")));
        }
        Estimator::Exact => {
            rows.push(("value", truth.to_string()));
            rows.push(("true_mean", truth.to_string()));
            rows.push(("error", "0".into()));
            rows.push(("card", spec.entry_count().to_string()));
        }
    }
    report.set("seed", args.common.seed);
    let mut table = Table::new(&["field", "value"]);
    for (k, v) in rows {
        table.push(vec![k.to_string(), v]);
    }
    report.table(table);
    Ok(report)
}

fn cmd_rates(args: &RatesArgs, workers: usize) -> Result<Report> {
    let mut plan = RatePlan::for_regime(args.regime);
    plan.trials = args.trials;
    plan.seed = args.common.seed;
    plan.regime_c0 = args.guard.c0();
    plan.workers = workers;
    if let Some(budgets) = &args.budgets {
        for s in &mut plan.series {
            s.budgets = budgets.clone();
        }
    }
    let result = rate_experiment(&plan)?;

    let mut report = Report::new("rates");
    report.set("regime", args.regime);
    report.set("trials", args.trials);
    report.set("regime_c0", guard_text(plan.regime_c0));
    for s in &plan.series {
        report.set(
            &format!("series.{}", s.label),
            format!(
                "family={} estimator={} p={} u={} dims={} budgets={} moment={}",
                s.variant,
                s.estimator,
                s.p,
                s.u,
                match s.dims {
                    adaptgap_core::harness::Dims::Fixed { n1, n2 } => format!("{n1}x{n2}"),
                    adaptgap_core::harness::Dims::Scaled { c3 } => format!("ceil({c3}*sqrt(n))"),
                },
                join(&s.budgets, ";"),
                s.moment
            ),
        );
    }
    report.set("seed", plan.seed);
    report.table(result.table());
    for s in &result.series {
        report.note(format!(
            "fit series={} metric=moment{} predicted_slope={} {}",
            s.plan.label, s.plan.moment, s.plan.predicted_slope, s.fit
        ));
    }
    Ok(report)
}

fn guard_text(c0: Option<f64>) -> String {
    c0.map_or_else(|| "off".to_string(), |c| c.to_string())
}

fn cmd_gap(args: &GapArgs, workers: usize) -> Result<Report> {
    let config = GapConfig {
        budgets: args.budgets.clone(),
        c3: args.c3,
        trials: args.trials,
        seed: args.common.seed,
        regime_c0: args.guard.c0(),
        m: args.m,
        workers,
    };
    let rows = gap_experiment(&config)?;

    let mut report = Report::new("gap");
    report.set("family", Variant::ActiveRowBernoulli);
    report.set("p", 1);
    report.set("u", Extended::Inf);
    report.set("budgets", join(&config.budgets, ";"));
    report.set("c3", config.c3);
    report.set("trials", config.trials);
    report.set(
        "m",
        config
            .m
            .map_or_else(|| "default".to_string(), |m| m.to_string()),
    );
    report.set("regime_c0", guard_text(config.regime_c0));
    report.set("seed", config.seed);
    let mut table = Table::new(&GAP_COLUMNS);
    for r in &rows {
        table.push(r.cells(config.seed));
    }
    report.table(table);
    match gap_fits(&rows) {
        Ok((ratio, a2, a3)) => {
            report.note(format!("fit ratio {ratio}"));
            report.note(format!("fit rms_a2 {a2}"));
            report.note(format!("fit rms_a3 {a3}"));
        }
        Err(e) => report.note(format!("fit unavailable: {e}")),
    }
    Ok(report)
}

fn cmd_ds(args: &DsArgs, workers: usize) -> Result<Report> {
    let config = DsConfig {
        alpha: args.alpha,
        p: args.p,
        u: args.u,
        p1: args.p1,
        k0s: args.k0.clone(),
        delta: args.delta,
        c0: args.c0,
        m: args.m,
        mode: args.mode,
        trials: args.trials,
        seed: args.common.seed,
        workers,
    };
    let rows = ds_experiment(&config)?;
    let delta = args.delta.unwrap_or_else(|| default_delta(args.alpha));

    let mut report = Report::new("ds");
    report.set("alpha", config.alpha);
    report.set("p", config.p);
    report.set("u", config.u);
    report.set("p1", config.p1);
    report.set("k0", join(&config.k0s, ";"));
    report.set("delta", delta);
    report.set("c0", config.c0);
    report.set(
        "m",
        config
            .m
            .map_or_else(|| "default".to_string(), |m| m.to_string()),
    );
    report.set("mode", format!("{:?}", config.mode).to_lowercase());
    report.set("trials", config.trials);
    report.set("seed", config.seed);
    for &k0 in &config.k0s {
        let alloc = level_allocation(k0, config.alpha, delta, config.c0)?;
        report.set(
            &format!("schedule.k0={k0}"),
            format!(
                "budgets={} total={} c3={}",
                join(&alloc.budgets, ";"),
                alloc.total(),
                alloc.c3
            ),
        );
    }
    let mut table = Table::new(&DS_COLUMNS);
    for r in &rows {
        table.push(r.cells(&config));
    }
    report.table(table);
    for &k0 in &config.k0s {
        let rms = |mode| {
            rows.iter()
                .find(|r| r.k0 == k0 && r.mode == mode)
                .map(|r| r.stats.rms)
        };
        if let (Some(a), Some(na)) = (
            rms(adaptgap_core::Mode::Adaptive),
            rms(adaptgap_core::Mode::NonAdaptive),
        ) {
            report.note(format!("ratio k0={k0} nonadaptive/adaptive={}", na / a));
        }
    }
    Ok(report)
}

fn cmd_norm_est(args: &NormEstArgs, workers: usize) -> Result<Report> {
    let config = NormEstConfig {
        v: args.v,
        u: args.u,
        population_size: args.population,
        budgets: args.budgets.clone(),
        trials: args.trials,
        seed: args.common.seed,
        workers,
    };
    let rows = norm_est_experiment(&config)?;

    let mut report = Report::new("norm-est");
    report.set("v", config.v);
    report.set("u", config.u);
    report.set("population", join(&config.population()?, ";"));
    report.set("budgets", join(&config.budgets, ";"));
    report.set("trials", config.trials);
    report.set("seed", config.seed);
    let mut table = Table::new(&NORM_EST_COLUMNS);
    for r in &rows {
        table.push(r.cells(&config));
    }
    report.table(table);
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.stats.rms)).collect();
    match rate_fit(&points) {
        Ok(fit) => report.note(format!(
            "fit rms_dev predicted_slope={} {fit}",
            config.predicted_slope()
        )),
        Err(e) => report.note(format!("fit unavailable: {e}")),
    }
    Ok(report)
}

fn run(cli: &Cli) -> Result<()> {
    if cli.workers == 0 {
        bail!(adaptgap_core::Error::InvalidParameters(
            "--workers must be at least 1".into()
        ));
    }
    let (report, common) = match &cli.command {
        Command::Estimate(a) => (cmd_estimate(a)?, &a.common),
        Command::Rates(a) => (cmd_rates(a, cli.workers)?, &a.common),
        Command::Gap(a) => (cmd_gap(a, cli.workers)?, &a.common),
        Command::Ds(a) => (cmd_ds(a, cli.workers)?, &a.common),
        Command::NormEst(a) => (cmd_norm_est(a, cli.workers)?, &a.common),
    };
    report.emit(common.out.as_deref(), common.format)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use adaptgap_core::Error;
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_precondition() => 3,
        Some(
            Error::InvalidParameters(_)
            | Error::InvalidSpec(_)
            | Error::ShapeMismatch { .. }
            | Error::NonFinite { .. }
            | Error::EmptyInput,
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
