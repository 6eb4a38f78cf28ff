use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use vimp_core::cart::{grow_cart, rpart_importance};
use vimp_core::dataset::{load_csv, Dataset, DEFAULT_NA_TOKENS};
use vimp_core::importance::{self, DEFAULT_ALPHA, DEFAULT_PERMUTATIONS};
use vimp_core::predvalue::{mpv_cpv, score_consistency, CvScheme, ForestConfig};
use vimp_core::report::{self, Consistency};
use vimp_core::simbench::{self, BiasConfig, Mcar, Method, SimModel};
use vimp_core::{Error, Result, TreeConfig};

/// Unbiased variable importance for regression data.
#[derive(Parser)]
#[command(name = "vimp", version, about)]
struct Cli {
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "VIMP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bias-adjusted importance scores with a significance threshold.
    Score(ScoreArgs),
    /// Score response permutations of the data and test for selection bias.
    Permtest(PermtestArgs),
    /// Repeated-trial bias experiment on a simulated model.
    Simbench(SimbenchArgs),
    /// Marginal and conditional predictive values.
    Predvalue(PredvalueArgs),
}

#[derive(Args, Serialize)]
struct Input {
    /// Data file (CSV with header).
    data: PathBuf,
    /// Roles file: one `<column> <d|n|c|x>` per line.
    roles: PathBuf,
    /// Token read as a missing value; repeatable. Default: NA and the empty cell.
    #[arg(long = "na")]
    na: Vec<String>,
}

impl Input {
    fn load(&self) -> Result<Dataset> {
        let tokens: Vec<&str> = if self.na.is_empty() {
            DEFAULT_NA_TOKENS.to_vec()
        } else {
            self.na.iter().map(String::as_str).collect()
        };
        load_csv(&self.data, &self.roles, &tokens)
    }
}

#[derive(Args, Serialize)]
struct ScoreArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: Input,
    /// Response permutations for the bias adjustment.
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    b: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "guide")]
    method: Method,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct PermtestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: Input,
    /// Number of response permutations to score.
    #[arg(long, default_value_t = 1000)]
    j: usize,
    #[arg(long, default_value = "guide")]
    method: Method,
    /// Inner permutations per GUIDE score.
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct SimbenchArgs {
    #[arg(long, default_value = "E0")]
    model: SimModel,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = simbench::DEFAULT_N)]
    n: usize,
    #[arg(long, default_value = "guide")]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Predictors to blank completely at random, comma separated.
    #[arg(long, value_delimiter = ',')]
    missing: Vec<String>,
    /// Probability that each value of a `--missing` predictor is blanked.
    #[arg(long, default_value_t = 0.2)]
    missing_fraction: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct PredvalueArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: Input,
    /// `kfold:K` or `loo`.
    #[arg(long, default_value = "kfold:10")]
    cv: String,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Fit every tree on all training rows instead of a bootstrap sample.
    #[arg(long)]
    no_bootstrap: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// A vi.csv whose scores are correlated with MPV and CPV.
    #[arg(long)]
    vi: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct InputDigest {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    args: Vec<String>,
    flags: serde_json::Value,
    seed: u64,
    version: &'a str,
    threads: usize,
    inputs: Vec<InputDigest>,
    wall_time_secs: f64,
}

fn digest(path: &Path) -> Result<InputDigest> {
    let hash = Sha256::digest(fs::read(path)?);
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn finish<W: Write>(mut w: W) -> Result<()> {
    w.flush()?;
    Ok(())
}

struct Run<'a> {
    name: &'a str,
    flags: serde_json::Value,
    seed: u64,
    inputs: Vec<&'a Path>,
    out_dir: &'a Path,
    started: Instant,
}

impl Run<'_> {
    fn write_manifest(self) -> Result<()> {
        let manifest = Manifest {
            command: self.name,
            args: std::env::args().skip(1).collect(),
            flags: self.flags,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
            inputs: self.inputs.into_iter().map(digest).collect::<Result<_>>()?,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let mut w = create(self.out_dir, "manifest.json")?;
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        finish(w)
    }
}

fn score(a: &ScoreArgs, started: Instant) -> Result<()> {
    let ds = a.input.load()?;
    let dir = &a.out_dir;
    match a.method {
        Method::Guide => {
            let rep = importance::score(&ds, &TreeConfig::default(), a.b, a.alpha, a.seed)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            report::write_vi_csv(&rep, create(dir, "vi.csv")?)?;
            let mut j = create(dir, "vi.json")?;
            report::write_vi_json(&rep, &mut j)?;
            writeln!(j)?;
            finish(j)?;
            println!(
                "{:<20} {:>10} {:>10}  important",
                "variable", "VI", "normalized"
            );
            for s in &rep.variables {
                println!(
                    "{:<20} {:>10.4} {:>10.4}  {}",
                    s.name,
                    s.vi,
                    s.normalized,
                    if s.important { "yes" } else { "" }
                );
            }
        }
        Method::Cart => {
            let scores = rpart_importance(&grow_cart(&ds, &TreeConfig::default()));
            let names = ds.predictor_names();
            report::write_cart_vi_csv(&names, &scores, create(dir, "vi.csv")?)?;
            let mut j = create(dir, "vi.json")?;
            report::write_cart_vi_json(&names, &scores, &mut j)?;
            writeln!(j)?;
            finish(j)?;
            for (n, s) in names.iter().zip(&scores) {
                println!("{n:<20} {s:>12.4}");
            }
        }
    }
    Run {
        name: "score",
        flags: serde_json::to_value(a)?,
        seed: a.seed,
        inputs: vec![&a.input.data, &a.input.roles],
        out_dir: dir,
        started,
    }
    .write_manifest()
}

fn permtest(a: &PermtestArgs, started: Instant) -> Result<()> {
    let ds = a.input.load()?;
    let rep = simbench::permutation_bias(&ds, a.method, a.j, a.b, &TreeConfig::default(), a.seed)?;
    report::write_bias_summary_csv(&rep, create(&a.out_dir, "permbias.csv")?)?;
    println!("{}", report::verdict_line(&rep));
    Run {
        name: "permtest",
        flags: serde_json::to_value(a)?,
        seed: a.seed,
        inputs: vec![&a.input.data, &a.input.roles],
        out_dir: &a.out_dir,
        started,
    }
    .write_manifest()
}

fn simbench_cmd(a: &SimbenchArgs, started: Instant) -> Result<()> {
    let mut cfg = BiasConfig::new(a.method, a.model, a.trials, a.b, a.seed);
    cfg.n = a.n;
    if !a.missing.is_empty() {
        cfg.mcar = Some(Mcar {
            variables: a.missing.clone(),
            fraction: a.missing_fraction,
        });
    }
    let rep = simbench::run_bias_experiment(&cfg)?;
    report::write_trials_csv(&rep, create(&a.out_dir, "simbench_trials.csv")?)?;
    report::write_bias_summary_csv(&rep, create(&a.out_dir, "simbench_summary.csv")?)?;
    println!("{}", report::verdict_line(&rep));
    Run {
        name: "simbench",
        flags: serde_json::to_value(a)?,
        seed: a.seed,
        inputs: Vec::new(),
        out_dir: &a.out_dir,
        started,
    }
    .write_manifest()
}

fn predvalue(a: &PredvalueArgs, started: Instant) -> Result<()> {
    let ds = a.input.load()?;
    let cv: CvScheme = a.cv.parse()?;
    let cfg = ForestConfig {
        n_trees: a.trees,
        bootstrap: !a.no_bootstrap,
        seed: a.seed,
        ..ForestConfig::default()
    };
    let rep = mpv_cpv(&ds, &cfg, cv)?;
    let consistency = match &a.vi {
        Some(path) => {
            let scores = report::read_vi_csv(File::open(path)?)?;
            let vi = rep
                .names
                .iter()
                .map(|n| {
                    scores
                        .iter()
                        .find(|(m, _)| m == n)
                        .map(|s| s.1)
                        .ok_or_else(|| {
                            Error::Validation(format!("{} has no score for '{n}'", path.display()))
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            let (cor_mpv, cor_cpv) = score_consistency(&vi, &rep)?;
            println!("cor(VI, MPV) = {cor_mpv}");
            println!("cor(VI, CPV) = {cor_cpv}");
            Some(Consistency { cor_mpv, cor_cpv })
        }
        None => None,
    };
    report::write_predvalue_csv(&rep, create(&a.out_dir, "predvalue.csv")?)?;
    let mut j = create(&a.out_dir, "predvalue.json")?;
    report::write_predvalue_json(&rep, consistency.as_ref(), &mut j)?;
    writeln!(j)?;
    finish(j)?;
    let mut inputs = vec![a.input.data.as_path(), a.input.roles.as_path()];
    inputs.extend(a.vi.as_deref());
    Run {
        name: "predvalue",
        flags: serde_json::to_value(a)?,
        seed: a.seed,
        inputs,
        out_dir: &a.out_dir,
        started,
    }
    .write_manifest()
}

fn run(command: &Command) -> Result<()> {
    let started = Instant::now();
    match command {
        Command::Score(a) => score(a, started),
        Command::Permtest(a) => permtest(a, started),
        Command::Simbench(a) => simbench_cmd(a, started),
        Command::Predvalue(a) => predvalue(a, started),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    match cli.threads {
        Some(0) => {
            eprintln!("vimp: --threads must be at least 1");
            return ExitCode::from(2);
        }
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    let result = match builder.build() {
        Ok(pool) => pool.install(|| run(&cli.command)),
        Err(e) => Err(Error::Io(std::io::Error::other(e))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vimp: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}
