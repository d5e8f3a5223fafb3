use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ldp_numeric::bench::{self, BenchError, ExperimentConfig, ExperimentReport, Task};
use ldp_numeric::data::{load_csv, DataError, Schema};
use ldp_numeric::fedsgd::LossKind;
use ldp_numeric::params::summarize;
use ldp_numeric::{LdpError, Mechanism, MechanismKind, PrivacyBudget, RandomStream};

const THREADS_VAR: &str = "LDP_NUMERIC_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "ldp-numeric",
    version,
    about = "Locally private numeric perturbation and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Worst-case variance per mechanism and budget.
    VarianceTable(CommonArgs),
    /// Multi-dimensional mean estimation on synthetic Gaussian data.
    MeanEstimation(MeanArgs),
    /// Continuous vs discretized mean estimation across grid resolutions.
    DiscretizeSweep(SweepArgs),
    /// Federated training with locally perturbed gradients.
    Erm(ErmArgs),
    /// Print one perturbed sample.
    Perturb(PerturbArgs),
    /// Print the derived constants for one budget.
    Params(ParamsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Comma-separated privacy budgets.
    #[arg(long = "epsilons", visible_alias = "epsilon", value_delimiter = ',', num_args = 1..)]
    epsilons: Option<Vec<f64>>,
    /// Comma-separated mechanism names; all mechanisms when omitted.
    #[arg(long = "mechanisms", visible_alias = "mechanism", value_delimiter = ',', num_args = 1..)]
    mechanisms: Option<Vec<MechanismKind>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file; the summary goes to stdout either way.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Flat `key = value` file of flag defaults; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
}

#[derive(Debug, Args)]
struct MeanArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Round each output onto a grid with this half-resolution.
    #[arg(long)]
    grid_m: Option<u32>,
    /// Every user holds this value in every coordinate.
    #[arg(long)]
    fixed_input: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated grid half-resolutions.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    grid_m: Vec<u32>,
    #[arg(long)]
    fixed_input: Option<f64>,
}

#[derive(Debug, Args)]
struct ErmArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    grid_m: Option<u32>,
    #[arg(long, default_value = "squared")]
    loss: LossKind,
    /// CSV dataset; a synthetic task is generated when omitted.
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    /// Column roles for `--data`.
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Per-iteration test-split trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long)]
    mechanism: MechanismKind,
    #[arg(long, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    grid_m: Option<u32>,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    #[arg(long, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(_) | BenchError::Ldp(_) => Self::Usage(e.to_string()),
            BenchError::Data(_) | BenchError::Io(_) | BenchError::Csv(_) | BenchError::Json(_) => {
                Self::Data(e.to_string())
            }
        }
    }
}

impl From<LdpError> for CliError {
    fn from(e: LdpError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string();
            eprintln!("error: {}", line.lines().next().unwrap_or_default());
            ExitCode::from(e.code())
        }
    }
}

fn run(argv: Vec<String>) -> Result<(), CliError> {
    let argv = merge_config(argv)?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("usage error");
            return Err(CliError::Usage(
                first.trim_start_matches("error: ").to_string(),
            ));
        }
    };
    init_threads()?;
    match cli.command {
        Command::VarianceTable(args) => {
            let mut config = ExperimentConfig::new(Task::VarianceTable);
            config.repetitions = 1;
            apply_common(&mut config, &args);
            let report = bench::run(&config, None)?;
            finish(&report, &args, true)
        }
        Command::MeanEstimation(args) => {
            let mut config = ExperimentConfig::new(Task::MeanEstimation);
            apply_run(&mut config, &args.run);
            config.grid_m = args.grid_m;
            config.fixed_input = args.fixed_input;
            let report = bench::run(&config, None)?;
            finish(&report, &args.run.common, false)
        }
        Command::DiscretizeSweep(args) => {
            let mut config = ExperimentConfig::new(Task::DiscretizeSweep);
            config.mechanisms.retain(|k| k.is_discretizable());
            apply_run(&mut config, &args.run);
            config.grid_sweep = args.grid_m;
            config.fixed_input = args.fixed_input;
            let report = bench::run(&config, None)?;
            finish(&report, &args.run.common, false)
        }
        Command::Erm(args) => run_erm(args),
        Command::Perturb(args) => {
            let budget = PrivacyBudget::new(args.epsilon)?;
            let mechanism = Mechanism::new(args.mechanism, budget)?;
            let mut stream = RandomStream::new(args.seed);
            let y = match args.grid_m {
                Some(m) => mechanism.perturb_discrete(args.x, m, &mut stream)?,
                None => mechanism.perturb(args.x, &mut stream)?,
            };
            println!("{y}");
            Ok(())
        }
        Command::Params(args) => print_params(&args),
    }
}

fn run_erm(args: ErmArgs) -> Result<(), CliError> {
    let mut config = ExperimentConfig::new(Task::Erm);
    config.epsilons = vec![1.0, 2.0, 4.0, 8.0];
    config.repetitions = 10;
    apply_run(&mut config, &args.run);
    config.grid_m = args.grid_m;
    config.erm.loss = args.loss;
    if let Some(eta) = args.eta {
        config.erm.eta = eta;
    }
    if let Some(g) = args.group_size {
        config.erm.group_size = g;
    }
    if let Some(t) = args.max_iterations {
        config.erm.max_iterations = t;
    }
    config.erm.record_trace = args.trace.is_some();
    let data = match (&args.data, &args.schema) {
        (Some(path), Some(schema)) => {
            let schema = Schema::from_file(schema)?;
            Some(load_csv(path, &schema)?)
        }
        _ => None,
    };
    let report = bench::run(&config, data.as_ref())?;
    if let Some(path) = &args.trace {
        report.write_traces_csv(create(path)?)?;
    }
    finish(&report, &args.run.common, false)
}

fn apply_common(config: &mut ExperimentConfig, args: &CommonArgs) {
    if let Some(e) = &args.epsilons {
        config.epsilons = e.clone();
    }
    if let Some(m) = &args.mechanisms {
        config.mechanisms = m.clone();
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
}

fn apply_run(config: &mut ExperimentConfig, args: &RunArgs) {
    apply_common(config, &args.common);
    if let Some(n) = args.n_users {
        config.n_users = n;
    }
    if let Some(d) = args.dims {
        config.d = d;
    }
    if let Some(r) = args.repetitions {
        config.repetitions = r;
    }
}

fn finish(report: &ExperimentReport, args: &CommonArgs, wide: bool) -> Result<(), CliError> {
    if let Some(path) = &args.out {
        let out = create(path)?;
        match (args.format, wide) {
            (Format::Json, _) => report.write_json(out)?,
            (Format::Csv, true) => report.write_wide_csv(out)?,
            (Format::Csv, false) => report.write_csv(out)?,
        }
    }
    print!("{}", report.summary_table());
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn print_params(args: &ParamsArgs) -> Result<(), CliError> {
    let summary = summarize(PrivacyBudget::new(args.epsilon)?)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e: std::io::Error| CliError::Data(e.to_string());
    match args.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &summary)
                .map_err(|e| CliError::Data(e.to_string()))?;
            writeln!(out).map_err(io)?;
        }
        Format::Csv => {
            let t = &summary.three_outputs;
            let mut lines = vec![
                ("epsilon".to_string(), summary.epsilon),
                ("three_outputs.a".into(), t.a),
                ("three_outputs.b".into(), t.b),
                ("three_outputs.c".into(), t.c_mag),
                ("pm_opt.t".into(), summary.t_opt),
                ("pm_sub.t".into(), summary.t_pm_sub),
                ("hm_tp.beta".into(), summary.hm_tp.beta),
                ("hm.q".into(), summary.hm_q),
            ];
            for (kind, v) in &summary.worst_case {
                lines.push((format!("worst_case.{}", kind.name()), *v));
            }
            writeln!(out, "name,value").map_err(io)?;
            for (name, v) in lines {
                writeln!(out, "{name},{v}").map_err(io)?;
            }
        }
    }
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "{THREADS_VAR} must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// Flag spellings that set the same option.
const ALIASES: &[(&str, &str)] = &[("epsilon", "epsilons"), ("mechanism", "mechanisms")];

/// Appends `--key value` for every config-file entry whose flag is absent from `argv`.
fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = flag_value(&argv, "config") else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read config {path}: {e}")))?;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim().trim_start_matches("--"), v.trim()))
            .ok_or_else(|| CliError::Usage(format!("{path}:{}: expected key = value", n + 1)))?;
        let key = key.replace('_', "-");
        if key == "config" {
            return Err(CliError::Usage(format!(
                "{path}:{}: nested config files are not supported",
                n + 1
            )));
        }
        let mut names = vec![key.as_str()];
        for &(a, b) in ALIASES {
            if key == a {
                names.push(b);
            } else if key == b {
                names.push(a);
            }
        }
        if names.iter().all(|k| !has_flag(&argv, k)) {
            argv.push(format!("--{key}"));
            argv.push(value.to_string());
        }
    }
    Ok(argv)
}

fn has_flag(argv: &[String], name: &str) -> bool {
    let long = format!("--{name}");
    argv.iter()
        .any(|a| *a == long || a.starts_with(&format!("{long}=")))
}

fn flag_value(argv: &[String], name: &str) -> Option<String> {
    let long = format!("--{name}");
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if *a == long {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix(&format!("{long}=")) {
            return Some(v.to_string());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_fills_missing_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.conf");
        std::fs::write(&path, "# sweep\nepsilons = 1,2\nseed=9\nn_users = 50\n").unwrap();
        let argv = args(&format!(
            "ldp mean-estimation --epsilon 4 --config {}",
            path.display()
        ));
        let merged = merge_config(argv).unwrap();
        assert!(!merged.contains(&"1,2".to_string()));
        assert!(merged.windows(2).any(|w| w[0] == "--seed" && w[1] == "9"));
        assert!(merged
            .windows(2)
            .any(|w| w[0] == "--n-users" && w[1] == "50"));
    }

    #[test]
    fn malformed_config_line_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "seed 9\n").unwrap();
        let err =
            merge_config(args(&format!("ldp params --config {}", path.display()))).unwrap_err();
        assert_eq!(err.code(), 1);
    }

    #[test]
    fn mechanism_lists_parse() {
        let cli = Cli::try_parse_from(args(
            "ldp variance-table --mechanisms pm-sub,hm-tp --epsilons 1,2",
        ))
        .unwrap();
        let Command::VarianceTable(a) = cli.command else {
            panic!()
        };
        assert_eq!(
            a.mechanisms.unwrap(),
            vec![MechanismKind::PmSub, MechanismKind::HmTp]
        );
        assert_eq!(a.epsilons.unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn negative_input_is_accepted() {
        let cli = Cli::try_parse_from(args("ldp perturb --mechanism duchi --epsilon 1 --x -0.25"))
            .unwrap();
        let Command::Perturb(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.x, -0.25);
    }
}
