//! Subcommand implementations: load data, run the library, save artifacts,
//! print one summary row per outcome.

use std::fs;
use std::path::{Path, PathBuf};

use fairgrad::data::{self, synth, Dataset, DatasetSchema};
use fairgrad::error::{Error, Result};
use fairgrad::eval::{self, ReportRow};
use fairgrad::init::{self, InitConfig, InitScheme};
use fairgrad::net::{load_checkpoint, save_checkpoint_binary, NetworkSpec, Parameters};
use fairgrad::train::{self, EpochStats, TrainConfig, TrainMode, TrainOutcome};
use fairgrad::verify::{self, Counterexample, Verdict, VerdictTag, VerifyBudget};
use serde_json::{json, Value};

use crate::manifest::Manifest;
use crate::{
    BudgetArgs, Command, DataArgs, InitArgs, InitSchemeArg, ModeArg, ScheduleArg, TrainArgs,
    HIDDEN_LAYERS,
};

pub fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Init { data, out, seed, init, budget, workers } => {
            cmd_init(&data, &out, seed, &init, &budget, workers)
        }
        Command::Verify { ckpt, data, budget, no_certificate, out, workers } => {
            cmd_verify(&ckpt, &data, &budget, no_certificate, out.as_deref(), workers)
        }
        Command::Train { data, out, train, init, budget, workers } => {
            cmd_train(&data, &out, &train, &init, &budget, workers)
        }
        Command::Erm { data, out, train, init, workers } => {
            cmd_erm(&data, &out, &train, &init, workers)
        }
        Command::Eval { ckpt, data, out, workers } => {
            cmd_eval(&ckpt, &data, out.as_deref(), workers)
        }
        Command::Compare { data, out, train, init, budget, workers } => {
            cmd_compare(&data, &out, &train, &init, &budget, workers)
        }
        Command::Report { logs, out } => cmd_report(&logs, &out),
        Command::Gen { benchmark, out, rows, seed } => cmd_gen(&benchmark, &out, rows, seed),
    }
}

fn check_workers(workers: usize) -> Result<()> {
    if workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    // Values above 1 are accepted for interface stability; execution is
    // single-threaded and deterministic either way.
    Ok(())
}

fn load(args: &DataArgs) -> Result<(Dataset, DatasetSchema)> {
    let schema = DatasetSchema::from_file(&args.schema)?;
    let raw = data::load_csv(&args.data, &schema)?;
    let dataset = data::preprocess(&raw, &schema)?;
    Ok((dataset, schema))
}

fn dataset_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned())
}

fn attribute_label(schema: &DatasetSchema) -> String {
    schema
        .sensitive_fields()
        .iter()
        .map(|f| f.name.clone())
        .collect::<Vec<_>>()
        .join("*")
}

fn init_config(args: &InitArgs, seed: u64) -> InitConfig {
    match args.init {
        InitSchemeArg::Zero => InitConfig { scheme: InitScheme::ZeroConstant { c: 0.0 }, seed },
        InitSchemeArg::Bernoulli => InitConfig {
            scheme: InitScheme::Bernoulli { p_init: args.p_init, phi: args.phi },
            seed,
        },
    }
}

fn draw_params(spec: &NetworkSpec, config: &InitConfig) -> Result<Parameters> {
    match config.scheme {
        InitScheme::ZeroConstant { c } => Ok(init::zero_init(spec, c)),
        InitScheme::Bernoulli { .. } => init::bernoulli_init(spec, config),
    }
}

fn verify_budget(args: &BudgetArgs) -> VerifyBudget {
    VerifyBudget { max_partitions: args.budget_partitions, max_seconds: args.budget_seconds }
}

fn train_config(args: &TrainArgs) -> TrainConfig {
    TrainConfig {
        eta: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        mode: match args.mode {
            ModeArg::Stochastic => TrainMode::Stochastic,
            ModeArg::Expectation => TrainMode::Expectation,
        },
        delta: args.delta,
        gamma_schedule: match args.gamma_schedule {
            ScheduleArg::Epoch => train::GammaSchedule::PerEpoch,
            ScheduleArg::Step => train::GammaSchedule::PerStep,
        },
        projection_fallback: !args.no_projection,
        tol_fair: train::DEFAULT_TOL_FAIR,
    }
}

fn tag_name(tag: VerdictTag) -> &'static str {
    match tag {
        VerdictTag::Verified => "Verified",
        VerdictTag::Falsified => "Falsified",
        VerdictTag::Undecided => "Undecided",
    }
}

fn verdict_exit(tag: VerdictTag) -> u8 {
    match tag {
        VerdictTag::Verified => 0,
        VerdictTag::Falsified => 2,
        VerdictTag::Undecided => 3,
    }
}

fn print_verdict_header() {
    println!(
        "{:<12} {:<14} {:<10} {:>10} {:>6} {:>9}",
        "dataset", "attribute", "verdict", "partitions", "depth", "seconds"
    );
}

fn print_verdict_row(dataset: &str, attribute: &str, verdict: &Verdict) {
    println!(
        "{:<12} {:<14} {:<10} {:>10} {:>6} {:>9.3}",
        dataset,
        attribute,
        tag_name(verdict.tag),
        verdict.partitions_examined,
        verdict.max_depth,
        verdict.elapsed_seconds
    );
}

fn print_counterexample(dataset: &Dataset, ce: &Counterexample) {
    let name = |s: usize| dataset.sensitive.name(s).unwrap_or("?").to_string();
    let label = |l: usize| {
        dataset.label_names.get(l - 1).cloned().unwrap_or_else(|| l.to_string())
    };
    let x = ce.x.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ");
    println!(
        "counterexample: {} -> {} but {} -> {} at x = [{}]",
        name(ce.s1),
        label(ce.label1),
        name(ce.s2),
        label(ce.label2),
        x
    );
}

fn init_json(args: &InitArgs) -> Value {
    match args.init {
        InitSchemeArg::Zero => json!({"scheme": "zero", "c": 0.0}),
        InitSchemeArg::Bernoulli => {
            json!({"scheme": "bernoulli", "p_init": args.p_init, "phi": args.phi})
        }
    }
}

fn train_json(config: &TrainConfig, test_fraction: f64) -> Value {
    json!({
        "eta": config.eta,
        "batch_size": config.batch_size,
        "epochs": config.epochs,
        "seed": config.seed,
        "mode": match config.mode {
            TrainMode::Stochastic => "stochastic",
            TrainMode::Expectation => "expectation",
        },
        "delta": config.delta,
        "gamma_schedule": match config.gamma_schedule {
            train::GammaSchedule::PerEpoch => "epoch",
            train::GammaSchedule::PerStep => "step",
        },
        "projection_fallback": config.projection_fallback,
        "tol_fair": config.tol_fair,
        "test_fraction": test_fraction,
        "hidden_layers": HIDDEN_LAYERS,
    })
}

fn budget_json(args: &BudgetArgs) -> Value {
    json!({"partitions": args.budget_partitions, "seconds": args.budget_seconds})
}

fn write_gamma_log(path: &Path, ticks: &[train::GammaTick]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for tick in ticks {
        writer.serialize(tick)?;
    }
    writer.flush()?;
    Ok(())
}

fn result_row(
    spec: &NetworkSpec,
    outcome: &TrainOutcome,
    probe: &Dataset,
    dataset: &str,
    attribute: &str,
    method: &str,
) -> Result<ReportRow> {
    let fairness = eval::empirical_fairness(spec, &outcome.params, probe)?;
    let accuracy = eval::accuracy(spec, &outcome.params, probe)?;
    Ok(ReportRow {
        dataset: dataset.to_string(),
        attribute: attribute.to_string(),
        method: method.to_string(),
        fairness_pct: fairness.fairness_pct,
        discriminatory_count: fairness.discriminatory,
        accuracy_pct: accuracy,
        total_seconds: outcome.train_seconds(),
        steps_per_sec: outcome.steps_per_sec(),
    })
}

fn print_result_row(row: &ReportRow) {
    println!(
        "{}: fairness={:.2}% discriminatory={} accuracy={:.2}% seconds={:.2} steps_per_sec={:.0}",
        row.method,
        row.fairness_pct,
        row.discriminatory_count,
        row.accuracy_pct,
        row.total_seconds,
        row.steps_per_sec
    );
}

fn cmd_init(
    data: &DataArgs,
    out: &Path,
    seed: u64,
    init_args: &InitArgs,
    budget: &BudgetArgs,
    workers: usize,
) -> Result<u8> {
    check_workers(workers)?;
    let (dataset, schema) = load(data)?;
    let spec = dataset.net_spec(&HIDDEN_LAYERS)?;
    let domain = data::extract_domain(&dataset)?;
    let config = init_config(init_args, seed);
    let verified = init::init_until_verified(
        &spec,
        &config,
        &domain,
        verify_budget(budget),
        init::DEFAULT_MAX_ATTEMPTS,
    )?;

    fs::create_dir_all(out)?;
    let ckpt = out.join("init.ckpt");
    save_checkpoint_binary(&ckpt, &spec, &verified.params)?;

    let name = dataset_label(&data.data);
    let attribute = attribute_label(&schema);
    print_verdict_header();
    print_verdict_row(&name, &attribute, &verified.verdict);
    println!("attempts={} wrote {}", verified.attempts, ckpt.display());

    let mut manifest = Manifest::new(
        "init",
        json!({
            "seed": seed,
            "init": init_json(init_args),
            "budget": budget_json(budget),
            "workers": workers,
            "hidden_layers": HIDDEN_LAYERS,
        }),
    );
    manifest.input(&data.data)?;
    manifest.input(&data.schema)?;
    manifest.output(&ckpt)?;
    manifest.write(out)?;
    Ok(0)
}

fn cmd_verify(
    ckpt: &Path,
    data: &DataArgs,
    budget: &BudgetArgs,
    no_certificate: bool,
    out: Option<&Path>,
    workers: usize,
) -> Result<u8> {
    check_workers(workers)?;
    let (spec, params) = load_checkpoint(ckpt)?;
    let (dataset, schema) = load(data)?;
    let domain = data::extract_domain(&dataset)?;
    let verdict = if no_certificate {
        verify::verify_by_refinement(&spec, &params, &domain, verify_budget(budget))?
    } else {
        verify::verify(&spec, &params, &domain, verify_budget(budget))?
    };

    let name = dataset_label(&data.data);
    let attribute = attribute_label(&schema);
    print_verdict_header();
    print_verdict_row(&name, &attribute, &verdict);
    if let Some(ce) = &verdict.counterexample {
        print_counterexample(&dataset, ce);
    }

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let path = dir.join("verdict.json");
        let text = serde_json::to_string_pretty(&verdict)
            .map_err(|e| Error::Data(format!("verdict serialization: {e}")))?;
        fs::write(&path, text)?;
        let mut manifest = Manifest::new(
            "verify",
            json!({
                "checkpoint": ckpt.display().to_string(),
                "budget": budget_json(budget),
                "certificate": !no_certificate,
                "workers": workers,
            }),
        );
        manifest.input(ckpt)?;
        manifest.input(&data.data)?;
        manifest.input(&data.schema)?;
        manifest.output(&path)?;
        manifest.write(dir)?;
    }
    Ok(verdict_exit(verdict.tag))
}

#[allow(clippy::too_many_arguments)]
fn run_training(
    data: &DataArgs,
    out: &Path,
    train_args: &TrainArgs,
    init_args: &InitArgs,
    budget: Option<&BudgetArgs>,
    method: &str,
) -> Result<u8> {
    let (dataset, schema) = load(data)?;
    let spec = dataset.net_spec(&HIDDEN_LAYERS)?;
    let (train_set, test_set) = data::split(&dataset, train_args.test_fraction, train_args.seed)?;
    let config = train_config(train_args);
    let name = dataset_label(&data.data);
    let attribute = attribute_label(&schema);

    let init_cfg = init_config(init_args, train_args.seed);
    let (start, fair) = match budget {
        Some(budget) => {
            let domain = data::extract_domain(&dataset)?;
            let verified = init::init_until_verified(
                &spec,
                &init_cfg,
                &domain,
                verify_budget(budget),
                init::DEFAULT_MAX_ATTEMPTS,
            )?;
            print_verdict_header();
            print_verdict_row(&name, &attribute, &verified.verdict);
            println!("attempts={}", verified.attempts);
            (verified.params, true)
        }
        None => (draw_params(&spec, &init_cfg)?, false),
    };

    let outcome = if fair {
        train::train_fair(&spec, &start, &train_set, Some(&test_set), &config)?
    } else {
        train::train_erm(&spec, &start, &train_set, Some(&test_set), &config)?
    };

    fs::create_dir_all(out)?;
    let model = out.join("model.ckpt");
    save_checkpoint_binary(&model, &spec, &outcome.params)?;
    let log = out.join("run_log.csv");
    eval::write_curves(&log, &outcome.stats)?;
    let row = result_row(&spec, &outcome, &test_set, &name, &attribute, method)?;
    let results = out.join("results.csv");
    eval::write_report(&results, &[row.clone()])?;

    let mut artifacts = vec![model, log, results];
    if fair {
        let gammas = out.join("gamma_log.csv");
        write_gamma_log(&gammas, &outcome.gamma_ticks)?;
        artifacts.push(gammas);
        println!(
            "train: epochs={} steps={} final_loss={:.4} rollbacks={}",
            config.epochs,
            outcome.steps,
            outcome.stats.last().map_or(f64::NAN, |s| s.loss),
            outcome.total_rollbacks
        );
    } else {
        println!(
            "train: epochs={} steps={} final_loss={:.4}",
            config.epochs,
            outcome.steps,
            outcome.stats.last().map_or(f64::NAN, |s| s.loss)
        );
    }
    print_result_row(&row);

    let mut manifest = Manifest::new(
        method,
        json!({
            "train": train_json(&config, train_args.test_fraction),
            "init": init_json(init_args),
            "budget": budget.map(budget_json),
        }),
    );
    manifest.input(&data.data)?;
    manifest.input(&data.schema)?;
    for artifact in &artifacts {
        manifest.output(artifact)?;
    }
    manifest.write(out)?;
    for artifact in &artifacts {
        println!("wrote {}", artifact.display());
    }
    Ok(0)
}

fn cmd_train(
    data: &DataArgs,
    out: &Path,
    train_args: &TrainArgs,
    init_args: &InitArgs,
    budget: &BudgetArgs,
    workers: usize,
) -> Result<u8> {
    check_workers(workers)?;
    run_training(data, out, train_args, init_args, Some(budget), "fair")
}

fn cmd_erm(
    data: &DataArgs,
    out: &Path,
    train_args: &TrainArgs,
    init_args: &InitArgs,
    workers: usize,
) -> Result<u8> {
    check_workers(workers)?;
    run_training(data, out, train_args, init_args, None, "erm")
}

fn cmd_eval(ckpt: &Path, data: &DataArgs, out: Option<&Path>, workers: usize) -> Result<u8> {
    check_workers(workers)?;
    let (spec, params) = load_checkpoint(ckpt)?;
    let (dataset, schema) = load(data)?;
    let fairness = eval::empirical_fairness(&spec, &params, &dataset)?;
    let accuracy = eval::accuracy(&spec, &params, &dataset)?;
    let row = ReportRow {
        dataset: dataset_label(&data.data),
        attribute: attribute_label(&schema),
        method: "eval".to_string(),
        fairness_pct: fairness.fairness_pct,
        discriminatory_count: fairness.discriminatory,
        accuracy_pct: accuracy,
        total_seconds: 0.0,
        steps_per_sec: 0.0,
    };
    println!(
        "{} {}: fairness={:.2}% discriminatory={} accuracy={:.2}% samples={}",
        row.dataset, row.attribute, row.fairness_pct, row.discriminatory_count, row.accuracy_pct,
        fairness.total
    );

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let results = dir.join("results.csv");
        eval::write_report(&results, &[row])?;
        let mut manifest = Manifest::new(
            "eval",
            json!({"checkpoint": ckpt.display().to_string(), "workers": workers}),
        );
        manifest.input(ckpt)?;
        manifest.input(&data.data)?;
        manifest.input(&data.schema)?;
        manifest.output(&results)?;
        manifest.write(dir)?;
        println!("wrote {}", results.display());
    }
    Ok(0)
}

fn cmd_compare(
    data: &DataArgs,
    out: &Path,
    train_args: &TrainArgs,
    init_args: &InitArgs,
    budget: &BudgetArgs,
    workers: usize,
) -> Result<u8> {
    check_workers(workers)?;
    let (dataset, schema) = load(data)?;
    let spec = dataset.net_spec(&HIDDEN_LAYERS)?;
    let (train_set, test_set) = data::split(&dataset, train_args.test_fraction, train_args.seed)?;
    let domain = data::extract_domain(&dataset)?;
    let config = train_config(train_args);
    let name = dataset_label(&data.data);
    let attribute = attribute_label(&schema);

    let init_cfg = init_config(init_args, train_args.seed);
    let verified = init::init_until_verified(
        &spec,
        &init_cfg,
        &domain,
        verify_budget(budget),
        init::DEFAULT_MAX_ATTEMPTS,
    )?;
    print_verdict_header();
    print_verdict_row(&name, &attribute, &verified.verdict);

    // Both runs share the verified starting point, seed and epoch count.
    let fair = train::train_fair(&spec, &verified.params, &train_set, Some(&test_set), &config)?;
    let erm = train::train_erm(&spec, &verified.params, &train_set, Some(&test_set), &config)?;

    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    for (method, outcome) in [("fair", &fair), ("erm", &erm)] {
        let dir = out.join(method);
        fs::create_dir_all(&dir)?;
        let model = dir.join("model.ckpt");
        save_checkpoint_binary(&model, &spec, &outcome.params)?;
        let log = dir.join("run_log.csv");
        eval::write_curves(&log, &outcome.stats)?;
        artifacts.push(model);
        artifacts.push(log);
        if method == "fair" {
            let gammas = dir.join("gamma_log.csv");
            write_gamma_log(&gammas, &outcome.gamma_ticks)?;
            artifacts.push(gammas);
        }
        let row = result_row(&spec, outcome, &test_set, &name, &attribute, method)?;
        print_result_row(&row);
        rows.push(row);
    }
    let results = out.join("results.csv");
    eval::write_report(&results, &rows)?;
    artifacts.push(results);

    let ratio = eval::timing_ratio(&fair.stats, &erm.stats)?;
    let dispersion = eval::epoch_time_dispersion(&fair.stats)?;
    println!(
        "timing: fair={:.2}s erm={:.2}s ratio={:.4} max_epoch_over_median={:.2}",
        fair.train_seconds(),
        erm.train_seconds(),
        ratio,
        dispersion
    );

    let mut manifest = Manifest::new(
        "compare",
        json!({
            "train": train_json(&config, train_args.test_fraction),
            "init": init_json(init_args),
            "budget": budget_json(budget),
            "workers": workers,
        }),
    );
    manifest.input(&data.data)?;
    manifest.input(&data.schema)?;
    for artifact in &artifacts {
        manifest.output(artifact)?;
    }
    manifest.write(out)?;
    Ok(0)
}

/// Column layout of the merged curve file: a run name ahead of the
/// [`EpochStats`] fields.
const CURVE_COLUMNS: [&str; 11] = [
    "run",
    "epoch",
    "loss",
    "gamma",
    "gamma_residual",
    "gamma_feasible",
    "certificate_spread",
    "rollbacks",
    "cumulative_seconds",
    "fairness_pct",
    "accuracy_pct",
];

fn run_name(path: &Path, index: usize) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    match stem.as_deref() {
        Some("run_log") | None => path
            .parent()
            .and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("run{index}")),
        Some(other) => other.to_string(),
    }
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn cmd_report(logs: &[PathBuf], out: &Path) -> Result<u8> {
    fs::create_dir_all(out)?;
    let path = out.join("curves.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(CURVE_COLUMNS)?;

    let mut manifest = Manifest::new("report", json!({"logs": logs.len()}));
    for (index, log) in logs.iter().enumerate() {
        let stats: Vec<EpochStats> = eval::read_curves(log)?;
        let name = run_name(log, index);
        for row in &stats {
            writer.write_record([
                name.clone(),
                row.epoch.to_string(),
                row.loss.to_string(),
                opt_field(row.gamma),
                opt_field(row.gamma_residual),
                row.gamma_feasible.map(|b| b.to_string()).unwrap_or_default(),
                row.certificate_spread.to_string(),
                row.rollbacks.to_string(),
                row.cumulative_seconds.to_string(),
                opt_field(row.fairness_pct),
                opt_field(row.accuracy_pct),
            ])?;
        }
        let last = stats.last().ok_or_else(|| {
            Error::Data(format!("{}: empty run log", log.display()))
        })?;
        println!(
            "run={} epochs={} final_loss={:.4} seconds={:.2}",
            name,
            stats.len().saturating_sub(1),
            last.loss,
            last.cumulative_seconds
        );
        manifest.input(log)?;
    }
    writer.flush()?;
    manifest.output(&path)?;
    manifest.write(out)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_gen(benchmark: &str, out: &Path, rows: Option<usize>, seed: Option<u64>) -> Result<u8> {
    let chosen: Vec<synth::Benchmark> = if benchmark == "all" {
        synth::Benchmark::ALL.to_vec()
    } else {
        vec![synth::Benchmark::from_name(benchmark).ok_or_else(|| {
            Error::Config(format!(
                "unknown benchmark `{benchmark}`; expected adult, bank, credit, compas, or all"
            ))
        })?]
    };

    let mut manifest = Manifest::new(
        "gen",
        json!({"benchmark": benchmark, "rows": rows, "seed": seed}),
    );
    for b in chosen {
        let rows = rows.unwrap_or_else(|| b.default_rows());
        let seed = seed.unwrap_or_else(|| b.default_seed());
        let (csv_path, schema_path) = synth::write_benchmark(out, b, rows, seed)?;
        println!("wrote {} ({} rows, seed {})", csv_path.display(), rows, seed);
        println!("wrote {}", schema_path.display());
        manifest.output(&csv_path)?;
        manifest.output(&schema_path)?;
    }
    manifest.write(out)?;
    Ok(0)
}
