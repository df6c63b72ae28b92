//! `semiboost` command line: runs one study and writes its CSV.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semiboost::config::{StudyConfig, StudyKind};
use semiboost::study::run_study;
use semiboost::Error;

/// Output directory used when neither `--out` nor an `out` key is given.
const OUT_DIR_ENV: &str = "SEMIBOOST_OUT_DIR";

#[derive(Parser)]
#[command(name = "semiboost", version, about = "Boosted semigroup approximations: studies and checks")]
struct Cli {
    /// Config file (`key = value` lines); its values override flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Table of m, q_i and kappa for each (level, order) of the recursion.
    Params(Flags),
    /// Word tree of the expansion.
    Expand(Flags),
    /// Exact total-variation error of the finite-state boosted operator.
    MatrixConvergence(Flags),
    /// Weak error of the plain scheme.
    SdeBaseError(Flags),
    /// Weak error of the boosted Monte Carlo estimator.
    SdeWeakError(Flags),
    /// Weak error for an indicator, with the order comparison.
    TvStudy(Flags),
    /// Convolved density against the closed-form density.
    DensityCompare(Flags),
    /// The five splitting invariant checks.
    SplittingCheck(Flags),
    /// Step-size thresholds with measured constants.
    HypothesisReport(Flags),
}

/// Every flag maps to the config key of the same name.
#[derive(Args, Default)]
struct Flags {
    /// Target orders (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    nu: Vec<String>,
    /// Step counts (repeat or comma-separate).
    #[arg(long = "n-list", alias = "n", value_delimiter = ',')]
    n: Vec<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    level: Option<String>,
    /// Horizon T.
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<String>,
    /// Generator row, comma-separated (repeat per row).
    #[arg(long)]
    row: Vec<String>,
    /// ou | brownian
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    x0: Option<String>,
    /// Time at which localization and thresholds are evaluated.
    #[arg(long)]
    t: Option<String>,
    /// poly | cos | linear | one | indicator:K
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// independent | common
    #[arg(long)]
    coupling: Option<String>,
    /// gaussian | uniform | rademacher
    #[arg(long)]
    noise: Option<String>,
    #[arg(long = "z-star")]
    z_star: Option<String>,
    #[arg(long = "r-star")]
    r_star: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    /// lo:hi:points
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long = "cloud-radius")]
    cloud_radius: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: &str| s.push_str(&format!("{k} = {v}\n"));
        for v in &self.nu {
            put("nu", v);
        }
        for v in &self.n {
            put("n", v);
        }
        for v in &self.row {
            put("row", v);
        }
        let singles = [
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("level", &self.level),
            ("horizon", &self.horizon),
            ("scheme", &self.scheme),
            ("a", &self.a),
            ("sigma", &self.sigma),
            ("x0", &self.x0),
            ("t", &self.t),
            ("f", &self.f),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("coupling", &self.coupling),
            ("noise", &self.noise),
            ("z_star", &self.z_star),
            ("r_star", &self.r_star),
            ("theta", &self.theta),
            ("grid", &self.grid),
            ("cloud_radius", &self.cloud_radius),
        ];
        for (k, v) in singles {
            if let Some(v) = v {
                put(k, v);
            }
        }
        if let Some(out) = &self.out {
            put("out", &out.display().to_string());
        }
        s
    }
}

fn resolve(kind: StudyKind, flags: &Flags, config: Option<&Path>) -> Result<StudyConfig, Error> {
    let mut cfg = StudyConfig::for_kind(kind);
    cfg.apply(&flags.to_text())?;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply(&text)?;
    }
    Ok(cfg)
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Error> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn run(cli: Cli) -> Result<i32, Error> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let (kind, flags) = match &cli.command {
        Command::Params(f) => (StudyKind::Params, f),
        Command::Expand(f) => (StudyKind::Expand, f),
        Command::MatrixConvergence(f) => (StudyKind::MatrixConvergence, f),
        Command::SdeBaseError(f) => (StudyKind::SdeBaseError, f),
        Command::SdeWeakError(f) => (StudyKind::SdeWeakError, f),
        Command::TvStudy(f) => (StudyKind::TvStudy, f),
        Command::DensityCompare(f) => (StudyKind::DensityCompare, f),
        Command::SplittingCheck(f) => (StudyKind::SplittingCheck, f),
        Command::HypothesisReport(f) => (StudyKind::HypothesisReport, f),
    };
    let cfg = resolve(kind, flags, cli.config.as_deref())?;
    let out = run_study(&cfg)?;
    let target = cfg
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{kind}.csv"))));
    match target {
        Some(path) => {
            write_atomic(&path, &out.csv)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{}", out.csv),
    }
    if out.failures.is_empty() {
        Ok(0)
    } else {
        eprintln!("invariant checks failed: {}", out.failures.join(", "));
        Ok(3)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
