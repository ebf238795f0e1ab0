use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gwpva::baseline::{log_growth_moments, regression_extinction_interval};
use gwpva::extinction::DEFAULT_HORIZON_CAP;
use gwpva::inference::{
    credible_interval, marginal_beta, posterior_mean_matrix, posterior_update, posterior_update_with_sexes,
    scenario_draws, PairParams, PosteriorParams,
};
use gwpva::io::{
    parse_life_table, parse_population, parse_prior_config, parse_sexed_counts, sig4, to_csv, write_life_table,
    DrawDocument, InputsDigest, IntervalRecord, PosteriorDocument, Report,
};
use gwpva::model::{abundances_from_table, ParameterDraw, PopulationState, TypeIndex};
use gwpva::montecarlo::{McConfig, McEstimate, PosteriorSample};
use gwpva::sampling::{sample_parameter_draw, simulate_with_rng, SeedSpec, DEFAULT_OVERFLOW_CAP};
use gwpva::spectral::{mean_matrix, perron_triple};

#[derive(Parser)]
#[command(name = "gwpva", version, about = "Bayesian branching-process population viability analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Posterior parameters, mean matrix and credible intervals from a life table.
    Fit(FitArgs),
    /// Posterior probability that the growth rate exceeds one.
    Viability(McArgs),
    /// Posterior probability of eventual extinction from a population.
    Extinction(PopArgs),
    /// Integer horizon bounds for extinction, with survival curves.
    TimeBounds(TimeBoundsArgs),
    /// Extinction probability of a single founder of each type, and the
    /// number of founders needed to reach a threshold.
    Reintroduce(ReintroduceArgs),
    /// Short-time expected abundance with standard errors.
    Predict(PredictArgs),
    /// Simulated trajectories and their life tables.
    Simulate(SimulateArgs),
    /// Log-growth moments and the log-linear regression interval.
    Baseline(BaselineArgs),
    /// Parameter draws built from posterior marginal quantiles.
    Scenarios(ScenarioArgs),
}

#[derive(Args)]
struct Output {
    /// Write the full JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    prior: PathBuf,
    /// Sexed offspring counts (`i,j,females,males`) for thinned pairs.
    #[arg(long)]
    sexes: Option<PathBuf>,
    /// Number of types; inferred from the table when absent.
    #[arg(long)]
    types: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Posterior document to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    posterior: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    nprec: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PopArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Initial abundances, comma separated.
    #[arg(long)]
    pop: String,
}

#[derive(Args)]
struct TimeBoundsArgs {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long)]
    pop: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_HORIZON_CAP)]
    horizon_cap: u64,
    /// Survival-bound curves as CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args)]
struct ReintroduceArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Target extinction probability for the effective population size.
    #[arg(long)]
    threshold: f64,
    /// Founder type for the effective population size.
    #[arg(long = "type")]
    kind: usize,
    /// Largest founder count searched.
    #[arg(long, default_value_t = 10_000)]
    max_size: u64,
    /// Per-type histograms of the extinction probability as CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long)]
    pop: String,
    #[arg(long)]
    horizon: u32,
    /// Abundance curve as CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Fixed parameter draw.
    #[arg(long, conflicts_with = "posterior", required_unless_present = "posterior")]
    draw: Option<PathBuf>,
    /// Sample a fresh draw per replicate from this posterior.
    #[arg(long)]
    posterior: Option<PathBuf>,
    #[arg(long)]
    pop: String,
    #[arg(long)]
    horizon: u32,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: u64,
    /// Directory receiving one life-table CSV per replicate.
    #[arg(long)]
    tables: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, conflicts_with = "abundances", required_unless_present = "abundances")]
    table: Option<PathBuf>,
    /// Total abundances, comma separated.
    #[arg(long)]
    abundances: Option<String>,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    posterior: PathBuf,
    /// Comma-separated quantile levels in (0,1).
    #[arg(long)]
    quantiles: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Serialize)]
struct ErrorRecord {
    error: String,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = match err.downcast_ref::<gwpva::Error>() {
                Some(e) => error_kind(e),
                None => "io".to_string(),
            };
            let record = ErrorRecord {
                error: kind,
                message: format!("{err:#}"),
            };
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_else(|_| record.message.clone()));
            ExitCode::FAILURE
        }
    }
}

fn error_kind(e: &gwpva::Error) -> String {
    let debug = format!("{e:?}");
    let name: String = debug.chars().take_while(|c| c.is_alphanumeric()).collect();
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_uppercase() && i > 0 {
            out.push('_');
        }
        out.push(c.to_ascii_lowercase());
    }
    out
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Viability(a) => viability(a),
        Command::Extinction(a) => extinction(a),
        Command::TimeBounds(a) => time_bounds(a),
        Command::Reintroduce(a) => reintroduce(a),
        Command::Predict(a) => predict(a),
        Command::Simulate(a) => simulate(a),
        Command::Baseline(a) => baseline(a),
        Command::Scenarios(a) => scenarios(a),
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(report: &Report, out: &Output) -> anyhow::Result<()> {
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if let Some(path) = &out.out {
        write(path, &report.to_json()?)?;
    }
    Ok(())
}

fn load_posterior(path: &Path) -> anyhow::Result<(PosteriorParams, Vec<u8>)> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone()).context("posterior is not UTF-8")?;
    let post = PosteriorDocument::from_json(&text)?.posterior()?;
    Ok((post, bytes))
}

fn population(text: &str, post: &PosteriorParams) -> anyhow::Result<PopulationState> {
    let n = parse_population(text)?;
    if n.types() != post.types() {
        bail!(gwpva::Error::DimensionMismatch {
            expected: post.types(),
            actual: n.types()
        });
    }
    Ok(n)
}

/// Loads the posterior, draws the Monte Carlo sample and starts the inputs
/// digest.
fn sample(mc: &McArgs) -> anyhow::Result<(PosteriorParams, PosteriorSample, InputsDigest)> {
    let (post, bytes) = load_posterior(&mc.posterior)?;
    let mut config = McConfig::new(mc.nprec, mc.seed);
    if let Some(t) = mc.threads {
        config = config.with_threads(t);
    }
    let sample = PosteriorSample::draw(&post, config)?;
    let inputs = InputsDigest {
        seed: Some(mc.seed),
        n_prec: Some(mc.nprec),
        ..InputsDigest::default()
    }
    .file("posterior", &bytes);
    Ok((post, sample, inputs))
}

fn estimate_line(label: &str, e: &McEstimate) -> String {
    format!(
        "{label} = {} (std error {}, n_prec {}, used {}, seed {})",
        sig4(e.value),
        sig4(e.std_error),
        e.n_prec,
        e.used,
        e.master_seed
    )
}

fn estimate_warnings(e: &McEstimate) -> Vec<String> {
    let mut w = Vec::new();
    if e.quality_warning {
        w.push(format!("{} of {} replicates excluded after solver failures", e.excluded, e.n_prec));
    }
    if e.nonprimitive > 0 {
        w.push(format!("{} replicates have a non-primitive mean matrix", e.nonprimitive));
    }
    w
}

fn fit(a: FitArgs) -> anyhow::Result<()> {
    let table_bytes = read(&a.table)?;
    let prior_bytes = read(&a.prior)?;
    let prior = parse_prior_config(std::str::from_utf8(&prior_bytes).context("prior is not UTF-8")?)?;
    let types = a.types.unwrap_or(prior.hyper.types());
    let table = parse_life_table(std::str::from_utf8(&table_bytes).context("table is not UTF-8")?, Some(types))?;
    let post = match &a.sexes {
        Some(path) => {
            let sexed = parse_sexed_counts(&read_text(path)?, types)?;
            posterior_update_with_sexes(&prior.hyper, &table, &sexed)?
        }
        None => posterior_update(&prior.hyper, &table)?,
    };
    let m = posterior_mean_matrix(&post);
    let mut doc = PosteriorDocument::new(&post);
    doc.mean_matrix = Some(m.rows());
    doc.credible_level = Some(a.level);
    doc.warnings = prior.warnings;
    for (from, to, params) in post.as_hyper().pairs().iter() {
        if let PairParams::Categorical { alpha } = params {
            for k in 0..alpha.len() {
                let beta = marginal_beta(alpha, k)?;
                let (lower, upper) = credible_interval(alpha, k, a.level)?;
                doc.intervals.push(IntervalRecord {
                    from,
                    to,
                    k: k as u32,
                    a: beta.a,
                    b: beta.b,
                    mean: beta.mean(),
                    lower,
                    upper,
                });
            }
        }
    }
    write(&a.out, &doc.to_json()?)?;
    for w in &doc.warnings {
        println!("warning: {w}");
    }
    println!("types: {}", post.types());
    for (from, to, params) in post.as_hyper().pairs().iter() {
        match params {
            PairParams::Forbidden => {}
            PairParams::Categorical { alpha } => {
                let shown: Vec<String> = alpha.iter().map(|x| sig4(*x)).collect();
                println!("({from},{to}) categorical alpha = ({})", shown.join(", "));
            }
            PairParams::Poisson { gamma } => {
                println!("({from},{to}) poisson gamma shape {} rate {}", sig4(gamma.shape), sig4(gamma.rate));
            }
            PairParams::Thinned { litter_alpha, sex_ratio } => {
                let shown: Vec<String> = litter_alpha.iter().map(|x| sig4(*x)).collect();
                println!(
                    "({from},{to}) thinned litter alpha = ({}), sex ratio beta({}, {})",
                    shown.join(", "),
                    sig4(sex_ratio.a),
                    sig4(sex_ratio.b)
                );
            }
        }
    }
    println!("posterior mean matrix:");
    for row in m.rows() {
        let shown: Vec<String> = row.iter().map(|x| sig4(*x)).collect();
        println!("  {}", shown.join("  "));
    }
    for r in &doc.intervals {
        println!(
            "({},{}) k={} mean {} interval [{}, {}]",
            r.from,
            r.to,
            r.k,
            sig4(r.mean),
            sig4(r.lower),
            sig4(r.upper)
        );
    }
    Ok(())
}

fn viability(a: McArgs) -> anyhow::Result<()> {
    let (_, sample, inputs) = sample(&a)?;
    let e = sample.viability();
    println!("{}", estimate_line("P(lambda > 1 | data)", &e));
    let report = Report::new("viability", inputs, &e)?.with_warnings(estimate_warnings(&e));
    emit(&report, &a.output)
}

fn extinction(a: PopArgs) -> anyhow::Result<()> {
    let (post, sample, inputs) = sample(&a.mc)?;
    let n = population(&a.pop, &post)?;
    let e = sample.extinction_probability(&n);
    println!("{}", estimate_line("P(extinction | data)", &e));
    let report = Report::new("extinction", inputs.param("population", &n.counts), &e)?
        .with_warnings(estimate_warnings(&e));
    emit(&report, &a.mc.output)
}

fn time_bounds(a: TimeBoundsArgs) -> anyhow::Result<()> {
    let (post, sample, inputs) = sample(&a.mc)?;
    let n = population(&a.pop, &post)?;
    let tb = sample.time_bounds(&n, a.alpha, a.horizon_cap)?;
    println!(
        "alpha {}: extinction between {} and {} generations (lambda < 1 in {} of {} draws, seed {})",
        sig4(a.alpha),
        tb.bounds.lower,
        tb.bounds.upper,
        tb.lambda_condition_count,
        tb.n_prec,
        tb.master_seed
    );
    if let Some(path) = &a.curves {
        let len = tb.upper_curve.len().max(tb.lower_curve.len());
        let cell = |c: &[f64], t: usize| c.get(t).map_or(String::new(), |x| x.to_string());
        let rows: Vec<Vec<String>> = (0..len)
            .map(|t| vec![t.to_string(), cell(&tb.upper_curve, t), cell(&tb.lower_curve, t)])
            .collect();
        write(path, &to_csv(&["t", "upper", "lower"], &rows))?;
    }
    let inputs = inputs
        .param("population", &n.counts)
        .param("alpha", a.alpha)
        .param("horizon_cap", a.horizon_cap);
    let mut warnings = Vec::new();
    if tb.excluded > 0 {
        warnings.push(format!("{} replicates excluded after solver failures", tb.excluded));
    }
    emit(&Report::new("time-bounds", inputs, &tb)?.with_warnings(warnings), &a.mc.output)
}

fn reintroduce(a: ReintroduceArgs) -> anyhow::Result<()> {
    let (post, sample, inputs) = sample(&a.mc)?;
    let kind = TypeIndex::new(a.kind, post.types())?;
    let r = sample.reintroduction();
    let size = sample.effective_population_size(kind, a.threshold, a.max_size)?;
    for t in &r.per_type {
        println!(
            "type {}: mean extinction probability of one founder {} (std error {})",
            t.kind,
            sig4(t.mean),
            sig4(t.std_error)
        );
    }
    println!(
        "{} founders of type {} give extinction probability {} <= {} (n_prec {}, seed {})",
        size.size,
        size.kind,
        sig4(size.estimate.value),
        sig4(size.threshold),
        r.n_prec,
        r.master_seed
    );
    if let Some(path) = &a.histogram {
        let bins = r.per_type.first().map_or(0, |t| t.histogram.len());
        let mut header = vec!["bin_lower".to_string(), "bin_upper".to_string()];
        header.extend(r.per_type.iter().map(|t| format!("type_{}", t.kind)));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = (0..bins)
            .map(|b| {
                let mut row = vec![(b as f64 / bins as f64).to_string(), ((b + 1) as f64 / bins as f64).to_string()];
                row.extend(r.per_type.iter().map(|t| t.histogram[b].to_string()));
                row
            })
            .collect();
        write(path, &to_csv(&header, &rows))?;
    }
    #[derive(Serialize)]
    struct Body<'a> {
        reintroduction: &'a gwpva::montecarlo::Reintroduction,
        effective_size: &'a gwpva::montecarlo::EffectiveSize,
    }
    let inputs = inputs
        .param("threshold", a.threshold)
        .param("type", a.kind)
        .param("max_size", a.max_size);
    let body = Body {
        reintroduction: &r,
        effective_size: &size,
    };
    emit(&Report::new("reintroduce", inputs, body)?, &a.mc.output)
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let (post, sample, inputs) = sample(&a.mc)?;
    let n = population(&a.pop, &post)?;
    let points = sample.short_time_abundance(&n, a.horizon);
    for p in &points {
        let total: f64 = p.mean.iter().sum();
        let shown: Vec<String> = p
            .mean
            .iter()
            .zip(&p.std_error)
            .map(|(m, s)| format!("{} ± {}", sig4(*m), sig4(*s)))
            .collect();
        println!("t={} total {}: {}", p.time, sig4(total), shown.join(", "));
    }
    if let Some(path) = &a.curve {
        let mut header = vec!["t".to_string()];
        for i in 1..=post.types() {
            header.push(format!("mean_{i}"));
            header.push(format!("std_error_{i}"));
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                let mut row = vec![p.time.to_string()];
                for (m, s) in p.mean.iter().zip(&p.std_error) {
                    row.push(m.to_string());
                    row.push(s.to_string());
                }
                row
            })
            .collect();
        write(path, &to_csv(&header, &rows))?;
    }
    let inputs = inputs.param("population", &n.counts).param("horizon", a.horizon);
    emit(&Report::new("predict", inputs, &points)?, &a.mc.output)
}

#[derive(Serialize)]
struct SimulatedPath {
    replicate: u64,
    abundances: Vec<Vec<u64>>,
    extinct_at: Option<u32>,
    exploded: bool,
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut inputs = InputsDigest {
        seed: Some(a.seed),
        ..InputsDigest::default()
    };
    let (fixed, post): (Option<ParameterDraw>, Option<PosteriorParams>) = match (&a.draw, &a.posterior) {
        (Some(path), _) => {
            let bytes = read(path)?;
            inputs = inputs.file("draw", &bytes);
            let doc = DrawDocument::from_json(std::str::from_utf8(&bytes).context("draw is not UTF-8")?)?;
            (Some(doc.draw()?), None)
        }
        (None, Some(path)) => {
            let (post, bytes) = load_posterior(path)?;
            inputs = inputs.file("posterior", &bytes);
            (None, Some(post))
        }
        (None, None) => bail!("one of --draw or --posterior is required"),
    };
    let types = fixed.as_ref().map_or_else(|| post.as_ref().map_or(0, |p| p.types()), |d| d.types());
    let n0 = parse_population(&a.pop)?;
    if n0.types() != types {
        bail!(gwpva::Error::DimensionMismatch {
            expected: types,
            actual: n0.types()
        });
    }
    if let Some(dir) = &a.tables {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut paths = Vec::new();
    for r in 0..a.reps {
        let mut rng = SeedSpec::new(a.seed, r).rng();
        let draw = match (&fixed, &post) {
            (Some(d), _) => d.clone(),
            (None, Some(p)) => sample_parameter_draw(p, &mut rng),
            (None, None) => unreachable!(),
        };
        let traj = simulate_with_rng(&draw, &n0, a.horizon, DEFAULT_OVERFLOW_CAP, &mut rng)?;
        if let Some(dir) = &a.tables {
            write(&dir.join(format!("replicate_{r}.csv")), &write_life_table(&traj.transitions))?;
        }
        let totals: Vec<String> = traj.states.iter().map(|s| s.total().to_string()).collect();
        let fate = match (traj.extinct_at, traj.exploded) {
            (Some(t), _) => format!("extinct at t={t}"),
            (None, true) => "stopped at the overflow cap".to_string(),
            (None, false) => "alive at the horizon".to_string(),
        };
        println!("replicate {r}: {} ({fate})", totals.join(" "));
        paths.push(SimulatedPath {
            replicate: r,
            abundances: traj.states.iter().map(|s| s.counts.clone()).collect(),
            extinct_at: traj.extinct_at,
            exploded: traj.exploded,
        });
    }
    let inputs = inputs
        .param("population", &n0.counts)
        .param("horizon", a.horizon)
        .param("reps", a.reps);
    emit(&Report::new("simulate", inputs, &paths)?, &a.output)
}

fn baseline(a: BaselineArgs) -> anyhow::Result<()> {
    let mut inputs = InputsDigest::default().param("level", a.level);
    let totals: Vec<f64> = match (&a.table, &a.abundances) {
        (Some(path), _) => {
            let bytes = read(path)?;
            inputs = inputs.file("table", &bytes);
            let table = parse_life_table(std::str::from_utf8(&bytes).context("table is not UTF-8")?, None)?;
            abundances_from_table(&table)?.iter().map(|s| s.total() as f64).collect()
        }
        (None, Some(text)) => parse_population(text)?.counts.iter().map(|x| *x as f64).collect(),
        (None, None) => bail!("one of --table or --abundances is required"),
    };
    let moments = log_growth_moments(&totals)?;
    let interval = regression_extinction_interval(&totals, a.level)?;
    println!("abundances: {}", totals.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "));
    println!("r_d = {}, v_r = {}", sig4(moments.r_d), sig4(moments.v_r));
    println!(
        "regression {} band: extinction between {} and {} generations after the last count",
        sig4(a.level),
        interval.lower,
        interval.upper
    );
    #[derive(Serialize)]
    struct Body {
        abundances: Vec<f64>,
        moments: gwpva::baseline::GrowthMoments,
        interval: gwpva::baseline::RegressionInterval,
    }
    let body = Body {
        abundances: totals,
        moments,
        interval,
    };
    emit(&Report::new("baseline", inputs, body)?, &a.output)
}

fn scenarios(a: ScenarioArgs) -> anyhow::Result<()> {
    let (post, bytes) = load_posterior(&a.posterior)?;
    let quantiles = a
        .quantiles
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad quantile `{}`", s.trim())))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let list = scenario_draws(&post, &quantiles)?;
    #[derive(Serialize)]
    struct Row {
        label: String,
        quantile: f64,
        lambda: f64,
        draw: DrawDocument,
    }
    let mut rows = Vec::new();
    for s in list {
        let m = mean_matrix(&s.draw);
        let lambda = if m.is_zero() { 0.0 } else { perron_triple(&m)?.lambda };
        println!("{} (quantile {}): lambda = {}", s.label, sig4(s.quantile), sig4(lambda));
        rows.push(Row {
            label: s.label,
            quantile: s.quantile,
            lambda,
            draw: DrawDocument::new(&s.draw),
        });
    }
    let inputs = InputsDigest::default()
        .file("posterior", &bytes)
        .param("quantiles", &quantiles);
    emit(&Report::new("scenarios", inputs, &rows)?, &a.output)
}
