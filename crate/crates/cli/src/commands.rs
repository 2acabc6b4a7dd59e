//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use immunet::scenario::{
    gen_ping_scan, gen_sessions, Labels, PingScanScenario, ScenarioError, SessionScenario,
};
use immunet::tlr::train;

use crate::args::{
    Cli, Command, EvaluateArgs, GenerateArgs, PingScanArgs, RunArgs, ScenarioArgs, ServeArgs,
    SessionsArgs, SweepArgs, TrainArgs,
};
use crate::config::{Engine, RunConfig};
use crate::eval::{evaluate, parse_report};
use crate::run::{self, runtime, usage};
use crate::serve::serve_live;
use crate::sweep::{parse_range, parse_values, render_sweep, sweep, SweepData};
use crate::CliError;

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_model(a),
        Command::Run(a) => run_detector(a),
        Command::Evaluate(a) => evaluate_report(a),
        Command::Sweep(a) => sweep_axis(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

/// Reads `path` if given, otherwise the defaults, then applies overrides.
pub fn load_config(path: Option<&Path>, engine: Option<Engine>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(e) = engine {
        cfg.engine = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn scenario_err(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::Config(_) | ScenarioError::Inseparable(_) => usage(e),
        _ => runtime(e),
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    match args.scenario {
        ScenarioArgs::PingScan(a) => generate_ping_scan(a),
        ScenarioArgs::Sessions(a) => generate_sessions(a),
    }
}

fn generate_ping_scan(a: PingScanArgs) -> Result<(), CliError> {
    let mut scenario = if a.no_scanner {
        PingScanScenario::without_scanner()
    } else {
        PingScanScenario::default()
    };
    if let Some(d) = a.duration {
        scenario.duration = d;
    }
    if let Some(s) = a.scan_start {
        scenario.scan_window.0 = s;
    }
    if let Some(e) = a.scan_end {
        scenario.scan_window.1 = e;
    }
    let traces = gen_ping_scan(&scenario, a.seed).map_err(scenario_err)?;
    let paths = traces.write_to(&a.out).map_err(runtime)?;
    print_paths(&paths);
    Ok(())
}

fn generate_sessions(a: SessionsArgs) -> Result<(), CliError> {
    let mut scenario = SessionScenario::default();
    if let Some(n) = a.n_training {
        scenario.n_training = n;
    }
    if let Some(n) = a.n_normal {
        scenario.n_normal = n;
    }
    if let Some(n) = a.n_anomalous {
        scenario.n_anomalous = n;
    }
    if let Some(n) = a.session_length {
        scenario.session_length = n;
    }
    let set = gen_sessions(&scenario, a.seed).map_err(scenario_err)?;
    let paths = set.write_to(&a.out).map_err(runtime)?;
    println!("wrote {} files under {}", paths.len(), a.out.display());
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn train_model(a: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref(), Some(Engine::Tlr), None)?;
    let (antigen, signals) = run::load_training(&cfg, &a.antigen, &a.signals)?;
    let model = train(&antigen, &signals, cfg.tlr_domains()?).map_err(usage)?;
    write_file(&a.out, &model.to_text())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn mismatch(engine: Engine, flag: &str) -> CliError {
    CliError::Usage(format!("--{flag} does not apply to the {engine} engine"))
}

fn required<'a>(value: &'a Option<PathBuf>, engine: Engine, flag: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("the {engine} engine needs --{flag}")))
}

fn run_detector(a: RunArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref(), a.engine.map(Into::into), a.seed)?;
    let report = match cfg.engine {
        Engine::Dca => {
            if a.model.is_some() {
                return Err(mismatch(cfg.engine, "model"));
            }
            if a.sessions.is_some() {
                return Err(mismatch(cfg.engine, "sessions"));
            }
            let antigen = required(&a.antigen, cfg.engine, "antigen")?;
            let signals = required(&a.signals, cfg.engine, "signals")?;
            let (antigen, signals) = run::load_traces(&cfg, antigen, signals)?;
            let result = run::run_dca(&cfg, &antigen, &signals)?;
            run::dca_report(&cfg, &result)
        }
        Engine::Tlr => {
            if a.antigen.is_some() {
                return Err(mismatch(cfg.engine, "antigen"));
            }
            if a.signals.is_some() {
                return Err(mismatch(cfg.engine, "signals"));
            }
            let model = run::load_model(&cfg, required(&a.model, cfg.engine, "model")?)?;
            let sessions = run::load_sessions(&cfg, required(&a.sessions, cfg.engine, "sessions")?)?;
            let verdicts = run::run_tlr(&cfg, &model, &sessions)?;
            run::tlr_report(&cfg, run::total_ticks(&sessions), &verdicts)
        }
    };
    let name = run::report_file(cfg.engine);
    run::write_output(&a.out, name, &report)?;
    println!("wrote {}", a.out.join(name).display());
    Ok(())
}

fn evaluate_report(a: EvaluateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.report)
        .map_err(|e| usage(format!("cannot read report {}: {e}", a.report.display())))?;
    let labels = Labels::read(&a.labels).map_err(usage)?;
    let report = evaluate(&parse_report(&text)?, &labels, a.unscored_as_negative)?;
    match &a.out {
        Some(path) => {
            write_file(path, &report.to_csv())?;
            println!("{}", report.summary());
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn sweep_axis(a: SweepArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref(), a.engine.map(Into::into), None)?;
    let values = match (&a.values, &a.range) {
        (Some(v), _) => parse_values(v)?,
        (None, Some(r)) => parse_range(r)?,
        (None, None) => return Err(CliError::Usage("give --values or --range".into())),
    };
    // reject bad points before loading data
    for &v in &values {
        a.axis.apply(&cfg, v)?;
    }
    let data = SweepData::load(&cfg, &a.data)?;
    let rows = sweep(&cfg, a.axis, &values, &data, a.unscored_as_negative)?;
    write_file(&a.out, &render_sweep(&cfg, a.axis, &rows))?;
    println!("wrote {} ({} points)", a.out.display(), rows.len());
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref(), a.engine.map(Into::into), a.seed)?;
    let model = match (cfg.engine, &a.model) {
        (Engine::Tlr, Some(p)) => Some(run::load_model(&cfg, p)?),
        (Engine::Tlr, None) => return Err(CliError::Usage("the tlr engine needs --model".into())),
        (Engine::Dca, Some(_)) => return Err(mismatch(cfg.engine, "model")),
        (Engine::Dca, None) => None,
    };
    let (report, stats) = serve_live(&cfg, model.as_ref(), &a.addr, a.clients, |addr| {
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();
    })?;
    let name = run::report_file(cfg.engine);
    run::write_output(&a.out, name, &report)?;
    println!(
        "wrote {} ({} items, {} late, {} rejected)",
        a.out.join(name).display(),
        stats.accepted,
        stats.late,
        stats.rejected
    );
    Ok(())
}
