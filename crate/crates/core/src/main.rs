//! Command-line front end: simulation, ingestion checks, the consistency
//! pipeline, model fitting, stage comparisons, and stringency analysis.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use moverhythm::config::RunConfig;
use moverhythm::error::{Error, Result};
use moverhythm::ingest::{
    parse_demographics, parse_step_records, parse_stringency, parse_survey, ParticipantProfile,
    Stage, StepRecord, StringencyPoint, SurveyResponse,
};
use moverhythm::lmm::{
    build_design, fit_reml, gvif, parametric_bootstrap, DesignMatrix, ModelSpec,
};
use moverhythm::pipeline::{
    attendance_model_table, compute_consistency, consistency_model_table,
    default_reference_levels, write_audit_json, write_daily_csv, write_monthly_csv,
    ConsistencyOutput, PipelineOptions,
};
use moverhythm::report::{stars, FitReport};
use moverhythm::rhythm::{ConsistencyKind, Segmentation};
use moverhythm::simulator::{simulate_cohort, CohortConfig};
use moverhythm::stats::{mann_whitney_u, pearson_r, rolling_mean, wilcoxon_signed_rank};
use moverhythm::types::YearMonth;

#[derive(Parser)]
#[command(
    name = "moverhythm",
    about = "Movement-rhythm consistency from hourly step counts",
    version
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 means one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (steps, demographics, surveys,
    /// stringency, ground truth).
    Simulate {
        /// TOML cohort configuration; defaults apply when omitted.
        #[arg(long)]
        sim_config: Option<PathBuf>,
        #[arg(long)]
        participants: Option<usize>,
    },
    /// Parse all configured inputs and report accepted/rejected rows.
    IngestCheck,
    /// Compute per-day and per-month consistency with an exclusion audit.
    Consistency,
    /// Fit a mixed model and write JSON + Markdown reports.
    Fit {
        /// One of: short-workday, long-workday, long-weekend, attendance,
        /// custom.
        #[arg(long, default_value = "long-workday")]
        model: ModelName,
        /// Formula for --model custom, e.g. "y ~ a + b, group = participant".
        #[arg(long)]
        formula: Option<String>,
    },
    /// Stage comparisons of survey activity answers (paired and
    /// between-group rank tests).
    Compare,
    /// Run a single rank test or correlation on two CSV columns.
    Test {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, value_enum)]
        kind: TestKind,
    },
    /// Stringency correlation report and plot-ready series.
    Stringency,
    /// Download a policy-stringency CSV to a local file.
    FetchOxcgrt {
        #[arg(
            long,
            default_value = "https://raw.githubusercontent.com/OxCGRT/covid-policy-tracker/master/data/OxCGRT_latest.csv"
        )]
        url: String,
        #[arg(long, default_value = "oxcgrt.csv")]
        dest: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelName {
    ShortWorkday,
    LongWorkday,
    LongWeekend,
    Attendance,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestKind {
    /// Paired Wilcoxon signed-rank on x - y.
    Wilcoxon,
    /// Mann-Whitney U between independent samples x and y.
    MannWhitney,
    /// Pearson correlation between x and y.
    Pearson,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    });
}

struct Inputs {
    steps: Vec<StepRecord>,
    demographics: Vec<ParticipantProfile>,
    surveys: Vec<SurveyResponse>,
    stringency: Option<Vec<StringencyPoint>>,
}

fn load_inputs(config: &RunConfig, strict: bool) -> Result<Inputs> {
    let open = |p: &Path| -> Result<BufReader<File>> {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| Error::invalid(format!("cannot read {}: {e}", p.display())))
    };
    let steps = parse_step_records(open(&config.inputs.steps)?, &config.step_columns)?;
    let demographics = parse_demographics(open(&config.inputs.demographics)?)?;
    let surveys = parse_survey(open(&config.inputs.survey)?)?;
    let stringency = match &config.inputs.stringency {
        Some(p) => Some(
            parse_stringency(open(p)?, &config.stringency_columns, &config.stringency_region)?
                .into_strict()?,
        ),
        None => None,
    };
    if strict {
        Ok(Inputs {
            steps: steps.into_strict()?,
            demographics: demographics.into_strict()?,
            surveys: surveys.into_strict()?,
            stringency,
        })
    } else {
        Ok(Inputs {
            steps: steps.accepted,
            demographics: demographics.accepted,
            surveys: surveys.accepted,
            stringency,
        })
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.bootstrap.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Simulate {
            sim_config,
            participants,
        } => cmd_simulate(&config, sim_config.as_deref(), participants, cli.seed),
        Command::IngestCheck => cmd_ingest_check(&config),
        Command::Consistency => cmd_consistency(&config),
        Command::Fit { model, formula } => cmd_fit(&config, model, formula.as_deref()),
        Command::Compare => cmd_compare(&config),
        Command::Test { input, x, y, kind } => cmd_test(&input, &x, &y, kind),
        Command::Stringency => cmd_stringency(&config),
        Command::FetchOxcgrt { url, dest } => cmd_fetch(&url, &dest),
    }
}

fn out_file(config: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(&config.out_dir)?;
    Ok(BufWriter::new(File::create(config.out_dir.join(name))?))
}

fn cmd_simulate(
    config: &RunConfig,
    sim_config: Option<&Path>,
    participants: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut sim = match sim_config {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("simulation config: {e}")))?,
        None => CohortConfig::default(),
    };
    if let Some(n) = participants {
        sim.n_participants = n;
    }
    if let Some(s) = seed {
        sim.seed = s;
    }
    let cohort = simulate_cohort(&sim)?;
    std::fs::create_dir_all(&config.out_dir)?;
    cohort.write_to_dir(&config.out_dir)?;
    println!(
        "wrote {} step rows, {} participants, {} surveys to {}",
        cohort.steps.len(),
        cohort.demographics.len(),
        cohort.surveys.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn cmd_ingest_check(config: &RunConfig) -> Result<()> {
    let open = |p: &Path| -> Result<BufReader<File>> {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| Error::invalid(format!("cannot read {}: {e}", p.display())))
    };
    let steps = parse_step_records(open(&config.inputs.steps)?, &config.step_columns)?;
    println!(
        "steps: {} accepted, {} rejected",
        steps.accepted.len(),
        steps.rejected.len()
    );
    let demographics = parse_demographics(open(&config.inputs.demographics)?)?;
    println!(
        "demographics: {} accepted, {} rejected",
        demographics.accepted.len(),
        demographics.rejected.len()
    );
    let surveys = parse_survey(open(&config.inputs.survey)?)?;
    println!(
        "surveys: {} accepted, {} rejected",
        surveys.accepted.len(),
        surveys.rejected.len()
    );
    let mut rejects = Vec::new();
    rejects.extend(steps.rejected);
    rejects.extend(demographics.rejected);
    rejects.extend(surveys.rejected);
    if let Some(p) = &config.inputs.stringency {
        let stringency =
            parse_stringency(open(p)?, &config.stringency_columns, &config.stringency_region)?;
        println!(
            "stringency: {} accepted, {} rejected",
            stringency.accepted.len(),
            stringency.rejected.len()
        );
        for w in &stringency.warnings {
            println!("warning: {w}");
        }
        rejects.extend(stringency.rejected);
    }
    for r in rejects.iter().take(20) {
        println!("rejected line {}: {}", r.line, r.message);
    }
    if rejects.len() > 20 {
        println!("... and {} more", rejects.len() - 20);
    }
    Ok(())
}

fn run_pipeline(config: &RunConfig, inputs: &Inputs) -> Result<ConsistencyOutput> {
    let options = config.pipeline_options()?;
    let output = compute_consistency(&inputs.steps, &inputs.surveys, &options)?;
    if output.monthly.is_empty() {
        return Err(Error::invalid(
            "empty dataset: no participant-month passed the exclusion rules",
        ));
    }
    Ok(output)
}

fn cmd_consistency(config: &RunConfig) -> Result<()> {
    let inputs = load_inputs(config, false)?;
    let output = run_pipeline(config, &inputs)?;
    write_daily_csv(out_file(config, "daily.csv")?, &output.daily)?;
    write_monthly_csv(out_file(config, "monthly.csv")?, &output.monthly)?;
    write_audit_json(out_file(config, "audit.json")?, &output)?;
    // record the effective configuration next to the outputs
    write!(out_file(config, "run_config.toml")?, "{}", config.to_toml()?)?;
    let kept = output.participant_audit.iter().filter(|a| a.kept).count();
    println!(
        "{} of {} participants kept, {} participant-months in monthly.csv",
        kept,
        output.participant_audit.len(),
        output.monthly.len()
    );
    Ok(())
}

fn resolve_model(
    config: &RunConfig,
    model: ModelName,
    formula: Option<&str>,
) -> Result<(ModelSpec, &'static str)> {
    let from_config = |response: &str, fallback: usize| -> Result<ModelSpec> {
        for f in &config.models.formulas {
            let spec: ModelSpec = f.parse()?;
            if spec.response == response {
                return Ok(spec);
            }
        }
        config
            .models
            .formulas
            .get(fallback)
            .ok_or_else(|| Error::Config(format!("no formula for response {response:?}")))?
            .parse()
    };
    match model {
        ModelName::ShortWorkday => Ok((from_config("short_workday", 0)?, "short_workday")),
        ModelName::LongWorkday => Ok((from_config("long_workday", 1)?, "long_workday")),
        ModelName::LongWeekend => Ok((from_config("long_weekend", 2)?, "long_weekend")),
        ModelName::Attendance => Ok((from_config("onsite_pct", 3)?, "attendance")),
        ModelName::Custom => {
            let f = formula.ok_or_else(|| {
                Error::Config("--model custom requires --formula".into())
            })?;
            Ok((f.parse()?, "custom"))
        }
    }
}

fn fit_and_report(
    config: &RunConfig,
    spec: &ModelSpec,
    design: &DesignMatrix,
    name: &str,
) -> Result<()> {
    let fit = fit_reml(design)?;
    let bootstrap = parametric_bootstrap(
        &fit,
        design,
        config.bootstrap.replicates,
        config.bootstrap.seed,
    )?;
    let collinearity = if spec.terms.len() >= 2 {
        gvif(design, moverhythm::lmm::gvif::DEFAULT_GVIF_THRESHOLD)?
    } else {
        Vec::new()
    };
    let report = FitReport::new(spec, &fit, Some(&bootstrap), collinearity)?;
    write!(
        out_file(config, &format!("fit_{name}.json"))?,
        "{}",
        report.to_json()?
    )?;
    report.write_markdown(out_file(config, &format!("fit_{name}.md"))?)?;
    let mut stdout = std::io::stdout().lock();
    report.write_markdown(&mut stdout)?;
    Ok(())
}

fn cmd_fit(config: &RunConfig, model: ModelName, formula: Option<&str>) -> Result<()> {
    let inputs = load_inputs(config, false)?;
    let output = run_pipeline(config, &inputs)?;
    let (spec, name) = resolve_model(config, model, formula)?;

    let table = if spec.grouping == "month" || spec.response == "onsite_pct" {
        attendance_model_table(
            &output.monthly,
            &inputs.surveys,
            inputs.stringency.as_deref().unwrap_or(&[]),
        )?
    } else {
        consistency_model_table(&output.monthly, &inputs.demographics)?
    };
    let design = build_design(&spec, &table, &default_reference_levels())?;
    fit_and_report(config, &spec, &design, name)
}

struct StageAnswers {
    walking: BTreeMap<String, f64>,
    nonwalking: BTreeMap<String, f64>,
}

fn stage_answers(surveys: &[SurveyResponse], stage: Stage) -> StageAnswers {
    let mut walking = BTreeMap::new();
    let mut nonwalking = BTreeMap::new();
    for s in surveys {
        if s.stage != Some(stage) {
            continue;
        }
        if let Some(v) = s.walking_hours {
            walking.insert(s.participant_id.clone(), v);
        }
        if let Some(v) = s.nonwalking_hours {
            nonwalking.insert(s.participant_id.clone(), v);
        }
    }
    StageAnswers { walking, nonwalking }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn cmd_compare(config: &RunConfig) -> Result<()> {
    let inputs = load_inputs(config, false)?;
    if inputs.surveys.iter().all(|s| s.stage.is_none()) {
        return Err(Error::invalid(
            "no survey rows carry a stage tag; stage comparisons need pre/early/late answers",
        ));
    }
    let by_stage: BTreeMap<&str, StageAnswers> = [
        ("pre", stage_answers(&inputs.surveys, Stage::Pre)),
        ("early", stage_answers(&inputs.surveys, Stage::Early)),
        ("late", stage_answers(&inputs.surveys, Stage::Late)),
    ]
    .into_iter()
    .collect();

    let subgroups: Vec<(String, Option<Vec<String>>)> = {
        let mut groups = vec![("all".to_string(), None)];
        let mut by_alone: BTreeMap<bool, Vec<String>> = BTreeMap::new();
        for p in &inputs.demographics {
            by_alone
                .entry(p.live_alone)
                .or_default()
                .push(p.participant_id.clone());
        }
        for (alone, ids) in by_alone {
            let label = if alone { "live_alone" } else { "not_alone" };
            groups.push((label.to_string(), Some(ids)));
        }
        groups
    };

    let mut w = out_file(config, "compare.csv")?;
    writeln!(
        w,
        "comparison,subgroup,activity,n,mean_before,mean_after,statistic,p,method"
    )?;
    let mut printed = Vec::new();
    for (activity, pick) in [
        ("walking", 0usize),
        ("nonwalking", 1usize),
    ] {
        for after in ["early", "late"] {
            for (label, ids) in &subgroups {
                let before_map = if pick == 0 {
                    &by_stage["pre"].walking
                } else {
                    &by_stage["pre"].nonwalking
                };
                let after_map = if pick == 0 {
                    &by_stage[after].walking
                } else {
                    &by_stage[after].nonwalking
                };
                let mut pairs = Vec::new();
                for (pid, b) in before_map {
                    if let Some(filter) = ids {
                        if !filter.contains(pid) {
                            continue;
                        }
                    }
                    if let Some(a) = after_map.get(pid) {
                        pairs.push((*b, *a));
                    }
                }
                if pairs.is_empty() {
                    println!("note: pre->{after} {activity} in {label}: no paired answers, row omitted");
                    continue;
                }
                let before: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let after_vals: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                let t = wilcoxon_signed_rank(&pairs)?;
                writeln!(
                    w,
                    "pre_vs_{after},{label},{activity},{},{:.3},{:.3},{:.3},{:.5},{:?}",
                    pairs.len(),
                    mean(&before),
                    mean(&after_vals),
                    t.statistic,
                    t.p_value,
                    t.method
                )?;
                printed.push(format!(
                    "pre->{after} {activity} [{label}] n={} {:.2} -> {:.2} p={:.4}{}",
                    pairs.len(),
                    mean(&before),
                    mean(&after_vals),
                    t.p_value,
                    stars(t.p_value)
                ));
            }
        }
        // between-group contrast at each stage: living alone vs not
        for stage in ["pre", "early", "late"] {
            let map = if pick == 0 {
                &by_stage[stage].walking
            } else {
                &by_stage[stage].nonwalking
            };
            let mut alone = Vec::new();
            let mut not_alone = Vec::new();
            for p in &inputs.demographics {
                if let Some(v) = map.get(&p.participant_id) {
                    if p.live_alone {
                        alone.push(*v);
                    } else {
                        not_alone.push(*v);
                    }
                }
            }
            if alone.is_empty() || not_alone.is_empty() {
                continue;
            }
            let t = mann_whitney_u(&alone, &not_alone)?;
            writeln!(
                w,
                "{stage}_alone_vs_not,between,{activity},{},{:.3},{:.3},{:.3},{:.5},{:?}",
                alone.len() + not_alone.len(),
                mean(&alone),
                mean(&not_alone),
                t.statistic,
                t.p_value,
                t.method
            )?;
        }
    }
    w.flush()?;
    for line in printed {
        println!("{line}");
    }
    Ok(())
}

fn numeric_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let idx = reader
        .headers()?
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::invalid(format!("no column {name:?} in {}", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = record.get(idx).unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        out.push(
            field
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("non-numeric value {field:?} in {name}")))?,
        );
    }
    Ok(out)
}

fn cmd_test(input: &Path, x: &str, y: &str, kind: TestKind) -> Result<()> {
    let xs = numeric_column(input, x)?;
    let ys = numeric_column(input, y)?;
    println!("test,x,y,n,statistic,p,method");
    match kind {
        TestKind::Wilcoxon => {
            if xs.len() != ys.len() {
                return Err(Error::invalid(
                    "wilcoxon needs paired columns of equal length",
                ));
            }
            let pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
            let t = wilcoxon_signed_rank(&pairs)?;
            println!(
                "wilcoxon,{x},{y},{},{:.4},{:.6},{:?}",
                xs.len(),
                t.statistic,
                t.p_value,
                t.method
            );
        }
        TestKind::MannWhitney => {
            let t = mann_whitney_u(&xs, &ys)?;
            println!(
                "mann_whitney,{x},{y},{}+{},{:.4},{:.6},{:?}",
                xs.len(),
                ys.len(),
                t.statistic,
                t.p_value,
                t.method
            );
        }
        TestKind::Pearson => {
            if xs.len() != ys.len() {
                return Err(Error::invalid(
                    "pearson needs paired columns of equal length",
                ));
            }
            let t = pearson_r(&xs, &ys)?;
            println!(
                "pearson,{x},{y},{},{:.4},{:.6},{:?}",
                xs.len(),
                t.statistic,
                t.p_value,
                t.method
            );
        }
    }
    Ok(())
}

fn cmd_stringency(config: &RunConfig) -> Result<()> {
    let inputs = load_inputs(config, false)?;
    let Some(stringency) = &inputs.stringency else {
        return Err(Error::invalid(
            "stringency analysis needs inputs.stringency in the configuration",
        ));
    };
    let output = run_pipeline(config, &inputs)?;

    // monthly mean stringency
    let mut sums: BTreeMap<YearMonth, (f64, usize)> = BTreeMap::new();
    for p in stringency {
        let e = sums.entry(YearMonth::of(p.date)).or_insert((0.0, 0));
        e.0 += p.index;
        e.1 += 1;
    }
    let monthly_stringency: BTreeMap<YearMonth, f64> = sums
        .iter()
        .map(|(ym, (s, n))| (*ym, s / *n as f64))
        .collect();

    // month random intercepts of the intercept-only consistency and
    // attendance models
    let month_intercepts = |spec: &ModelSpec, table: &moverhythm::lmm::Table| -> Result<BTreeMap<YearMonth, f64>> {
        let design = build_design(spec, table, &default_reference_levels())?;
        let fit = fit_reml(&design)?;
        let mut out = BTreeMap::new();
        for (level, u) in &fit.intercepts {
            out.insert(level.parse::<YearMonth>()?, *u);
        }
        Ok(out)
    };
    let consistency_table = consistency_model_table(&output.monthly, &inputs.demographics)?;
    let long_spec: ModelSpec = "long_workday ~ 1, group = month".parse()?;
    let long_by_month = month_intercepts(&long_spec, &consistency_table)?;
    let attendance_table =
        attendance_model_table(&output.monthly, &inputs.surveys, stringency)?;
    let onsite_by_month = if attendance_table.n_rows() > 0 {
        let spec: ModelSpec = "onsite_pct ~ 1, group = month".parse()?;
        month_intercepts(&spec, &attendance_table).ok()
    } else {
        None
    };

    let mut series = out_file(config, "stringency_series.csv")?;
    writeln!(series, "month,stringency,long_workday_intercept,onsite_intercept")?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut onsite_pairs: Vec<(f64, f64)> = Vec::new();
    for (ym, u) in &long_by_month {
        let Some(s) = monthly_stringency.get(ym) else {
            continue;
        };
        xs.push(*s);
        ys.push(*u);
        let onsite = onsite_by_month
            .as_ref()
            .and_then(|m| m.get(ym))
            .copied();
        if let Some(o) = onsite {
            onsite_pairs.push((*s, o));
        }
        writeln!(
            series,
            "{ym},{s:.4},{u:.6},{}",
            onsite.map(|o| format!("{o:.6}")).unwrap_or_default()
        )?;
    }
    series.flush()?;
    if xs.len() < 3 {
        return Err(Error::invalid(format!(
            "only {} months overlap between stringency and consistency series; need at least 3",
            xs.len()
        )));
    }
    // intercepts can all be zero when the month variance sits on the
    // boundary; the correlation is undefined there, not an input error
    let correlate = |label: &str, xs: &[f64], ys: &[f64]| -> Result<()> {
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        if ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() < 1e-12 {
            println!("{label}: month intercepts have no variance; correlation undefined");
            return Ok(());
        }
        let t = pearson_r(xs, ys)?;
        println!(
            "{label}: r = {:.4}, p = {:.5}{} (n = {})",
            t.statistic,
            t.p_value,
            stars(t.p_value),
            xs.len()
        );
        Ok(())
    };
    correlate(
        "stringency vs long-term workday consistency intercepts",
        &xs,
        &ys,
    )?;
    if onsite_pairs.len() >= 3 {
        let sx: Vec<f64> = onsite_pairs.iter().map(|p| p.0).collect();
        let sy: Vec<f64> = onsite_pairs.iter().map(|p| p.1).collect();
        correlate("stringency vs on-site attendance intercepts", &sx, &sy)?;
    }

    // 7-day rolling mean of the cohort's short-term consistency under
    // alternative segmentations, side by side
    let ks = [4usize, 6, 8, 12];
    let mut per_k: Vec<BTreeMap<chrono::NaiveDate, f64>> = Vec::new();
    for k in ks {
        let options = PipelineOptions {
            segmentation: Segmentation::even(k)?,
            ..config.pipeline_options()?
        };
        let out = compute_consistency(&inputs.steps, &inputs.surveys, &options)?;
        let mut daily: BTreeMap<chrono::NaiveDate, (f64, usize)> = BTreeMap::new();
        for r in out
            .daily
            .iter()
            .filter(|r| r.kind == ConsistencyKind::Short)
        {
            let e = daily.entry(r.date).or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        let dates: Vec<chrono::NaiveDate> = daily.keys().copied().collect();
        let values: Vec<f64> = daily.values().map(|(s, n)| s / *n as f64).collect();
        let rolled = rolling_mean(&values, 7)?;
        per_k.push(
            dates
                .into_iter()
                .zip(rolled)
                .filter_map(|(d, v)| v.map(|v| (d, v)))
                .collect(),
        );
    }
    let mut w = out_file(config, "rolling_consistency.csv")?;
    writeln!(w, "date,k4,k6,k8,k12")?;
    let all_dates: std::collections::BTreeSet<chrono::NaiveDate> =
        per_k.iter().flat_map(|m| m.keys().copied()).collect();
    for date in all_dates {
        let cells: Vec<String> = per_k
            .iter()
            .map(|m| m.get(&date).map(|v| format!("{v:.6}")).unwrap_or_default())
            .collect();
        writeln!(w, "{date},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_fetch(url: &str, dest: &Path) -> Result<()> {
    let response = reqwest::blocking::get(url)
        .map_err(|e| Error::model(format!("download failed: {e}")))?;
    if !response.status().is_success() {
        return Err(Error::model(format!(
            "download failed: HTTP {}",
            response.status()
        )));
    }
    let body = response
        .bytes()
        .map_err(|e| Error::model(format!("download failed: {e}")))?;
    std::fs::write(dest, &body)?;
    println!("wrote {} bytes to {}", body.len(), dest.display());
    Ok(())
}
