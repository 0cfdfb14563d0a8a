use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use covbreak::cptest::{CritvalSettings, Projection, TestSpec};
use covbreak::harness::{self, Case, ExperimentConfig, ProjectionDraw, Scenario};
use covbreak::ingest::{self, BundleOptions};
use covbreak::limits::{self, CritValRequest, PathCache, StatisticKind, DEFAULT_N_GRID, DEFAULT_N_REP};
use covbreak::simgen::{self, PanelConfig};
use covbreak::sumproc::{ProjectionPair, TargetBilinear};
use covbreak::{Error, LrvMode, Result};

mod args;
mod render;

use args::{Cli, Command, CritvalArgs, ExperimentArgs, FileConfig, Format, SimulateArgs, TestArgs};

fn config_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        module: "cli",
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn required<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| config_error(field, "required (flag or config file)"))
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| config_error("config", format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_error("config", format!("{}: {e}", path.display())))
}

fn parse_all<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>> {
    items.iter().map(|s| s.parse()).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = load_config(cli.config.as_deref())?;
    if let Some(n) = cli.workers.or(file.workers) {
        if n == 0 {
            return Err(config_error("workers", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error("workers", e.to_string()))?;
    }
    let seed = match cli.seed.or(file.seed) {
        Some(s) => s,
        None => {
            let s = rand::random::<u64>();
            eprintln!("seed: {s} (pass --seed {s} to replay)");
            s
        }
    };
    match cli.command {
        Command::Simulate(a) => simulate(a.merge(file.simulate), seed),
        Command::Test(a) => test(a.merge(file.test), seed),
        Command::Critval(a) => critval(a.merge(file.critval), seed),
        Command::Experiment(a) => experiment(a.merge(file.experiment), seed),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    let out = required(a.out, "out")?;
    let d = required(a.d, "d")?;
    let n = match (a.n, a.case) {
        (Some(n), None) => n,
        (None, Some(case)) => case.parse::<Case>()?.sizes().to_vec(),
        (Some(_), Some(_)) => return Err(config_error("case", "give either --n or --case, not both")),
        (None, None) => return Err(config_error("n", "sample sizes are required (--n or --case)")),
    };
    let k = n.len();
    let tau = match (a.tau, a.change_time) {
        (Some(_), Some(_)) => return Err(config_error("tau", "give either --tau or --change-time, not both")),
        (Some(t), None) => Some(t),
        (None, Some(t)) => {
            let horizon = a.horizon.unwrap_or(harness::HORIZON);
            if t == 0 || t > horizon {
                return Err(config_error("change_time", format!("{t} is outside (0, {horizon}]")));
            }
            Some(harness::change_time_mapping(t, &n, horizon))
        }
        (None, None) => None,
    };
    let config = PanelConfig {
        d,
        n,
        rho0: a.rho0.unwrap_or_else(|| harness::rho_pre(d)),
        rho1: a.rho1,
        sigma0: a.sigma0.unwrap_or_else(|| vec![1.0; k]),
        sigma1: a.sigma1,
        tau,
        burn_in: a.burn_in.unwrap_or(simgen::DEFAULT_BURN_IN),
        seed,
    };
    let panel = simgen::gen_ar1_panel(&config)?;
    fs::create_dir_all(&out).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    for (j, sample) in panel.samples.iter().enumerate() {
        let path = out.join(format!("sample_{}.csv", j + 1));
        ingest::write_matrix_csv(&path, sample)?;
        println!("{}: {} x {}", path.display(), sample.nrows(), sample.ncols());
    }
    let meta = serde_json::to_string_pretty(&config).expect("panel configs serialize");
    write_text(&out.join("panel.json"), &(meta + "\n"))?;
    if a.projection.unwrap_or(false) {
        let w = simgen::gen_dirichlet_projection(d, seed)?;
        let path = out.join("w.txt");
        ingest::write_vector(&path, &w)?;
        println!("{}: {} values", path.display(), w.len());
    }
    Ok(())
}

fn test(a: TestArgs, seed: u64) -> Result<()> {
    let kind: StatisticKind = required(a.kind, "kind")?.parse()?;
    let bundle = ingest::load_bundle(
        &a.files,
        &BundleOptions {
            v: a.v,
            w: a.w,
            learning_length: a.learning,
        },
    )?;
    let pair = match (bundle.v.clone(), bundle.w.clone()) {
        (Some(v), Some(w)) => ProjectionPair::new(v, w)?,
        (Some(x), None) | (None, Some(x)) => ProjectionPair::quadratic(x)?,
        (None, None) => {
            log::info!("no projection given; drawing a Dirichlet vector from the seed");
            ProjectionPair::quadratic(simgen::gen_dirichlet_projection(bundle.d(), seed)?)?
        }
    };
    let targets = a
        .target
        .map(|t| match t.len() {
            1 => Ok(vec![TargetBilinear::Constant(t[0]); bundle.k()]),
            n if n == bundle.k() => Ok(t.into_iter().map(TargetBilinear::Constant).collect()),
            n => Err(config_error("target", format!("expected 1 or {} values, got {n}", bundle.k()))),
        })
        .transpose()?;
    let spec = TestSpec {
        kind,
        level: a.level.unwrap_or(0.95),
        projection: Projection::Shared(pair),
        targets,
        lrv_mode: match bundle.learning_length {
            Some(length) => LrvMode::LearningSample { length },
            None => LrvMode::InSample,
        },
        bandwidth: a.bandwidth,
        critval: CritvalSettings {
            n_grid: a.n_grid.unwrap_or(DEFAULT_N_GRID),
            n_rep: a.n_rep.unwrap_or(DEFAULT_N_REP),
            seed,
        },
    };
    let report = covbreak::run_test(&bundle.samples, &spec, &PathCache::new())?;
    let json = report.to_json() + "\n";
    if let Some(path) = &a.out {
        write_text(path, &json)?;
    }
    match a.format.unwrap_or(Format::Table) {
        Format::Json => print!("{json}"),
        Format::Table => print!("{}", render::test_table(&report, &bundle.files)),
        Format::Csv => return Err(config_error("format", "test reports are table or json")),
    }
    Ok(())
}

fn critval(a: CritvalArgs, seed: u64) -> Result<()> {
    let kind: StatisticKind = required(a.kind, "kind")?.parse()?;
    let levels = a.level.unwrap_or_else(|| vec![0.95]);
    let mut req = CritValRequest::new(kind, required(a.k, "K")?, levels[0], seed);
    req.alpha_weights = a.alpha;
    req.kappa = a.kappa;
    req.n_grid = a.n_grid.unwrap_or(DEFAULT_N_GRID);
    req.n_rep = a.n_rep.unwrap_or(DEFAULT_N_REP);
    let rows = limits::critical_values(&req, &levels)?;
    let mut csv = Vec::new();
    limits::write_critval_csv(&rows, &mut csv)?;
    let csv = String::from_utf8(csv).expect("csv output is utf-8");
    if let Some(path) = &a.out {
        write_text(path, &csv)?;
    }
    match a.format.unwrap_or(Format::Table) {
        Format::Csv => print!("{csv}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize")),
        Format::Table => print!("{}", render::critval_table(&rows)),
    }
    Ok(())
}

fn experiment_config(a: &ExperimentArgs, seed: u64) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::preset(a.preset.as_deref().unwrap_or("size-in-sample"))?;
    c.seed = seed;
    if let Some(r) = a.replications {
        c.replications = r;
    }
    if let Some(cases) = &a.cases {
        c.cases = parse_all(cases)?;
    }
    if let Some(dims) = &a.dims {
        c.dims = dims.clone();
    }
    if let Some(s) = &a.scenario {
        c.scenario = s.parse::<Scenario>()?;
        if c.scenario == Scenario::None {
            c.change_times.clear();
        } else if c.change_times.is_empty() {
            c.change_times = harness::CHANGE_TIMES.to_vec();
        }
    }
    if let Some(t) = &a.change_times {
        c.change_times = t.clone();
    }
    if let Some(kinds) = &a.kinds {
        c.kinds = parse_all(kinds)?;
    }
    if let Some(lrv) = &a.lrv {
        c.lrv_modes = parse_all(lrv)?;
    }
    if let Some(l) = a.level {
        c.level = l;
    }
    if let Some(s) = &a.sigma0 {
        c.sigma0 = s.clone();
    }
    if let Some(s) = &a.sigma1 {
        c.sigma1 = s.clone();
    }
    if let Some(b) = a.burn_in {
        c.burn_in = b;
    }
    if let Some(n) = a.n_grid {
        c.n_grid = n;
    }
    if let Some(n) = a.n_rep {
        c.n_rep = n;
    }
    if let Some(p) = &a.projection_draw {
        c.projection_draw = p.parse::<ProjectionDraw>()?;
    }
    c.validate()?;
    Ok(c)
}

fn experiment(a: ExperimentArgs, seed: u64) -> Result<()> {
    let config = experiment_config(&a, seed)?;
    let result = covbreak::run_experiment(&config, &PathCache::new())?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv).expect("csv output is utf-8");
    let json = result.to_json() + "\n";
    if let Some(path) = &a.out {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        write_text(path, if is_csv { &csv } else { &json })?;
    }
    match a.format.unwrap_or(Format::Table) {
        Format::Csv => print!("{csv}"),
        Format::Json => print!("{json}"),
        Format::Table => {
            print!("{}", render::experiment_table(&result));
            for w in result.ordering_warnings() {
                eprintln!("note: {w}");
            }
        }
    }
    Ok(())
}
