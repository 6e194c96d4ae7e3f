//! `bilateral`: demonstrations, training, autonomous runs, evaluation and export.
//!
//! Exit codes: 0 success, 2 usage/config/I-O error, 3 numerical failure.

mod export;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bilateral_core::autoop::{evaluate_episode, run_autonomous, MopSchedule};
use bilateral_core::config::{ExperimentConfig, Profile};
use bilateral_core::dataset::Dataset;
use bilateral_core::demo::{build_dataset, run_demonstrations};
use bilateral_core::learn::train::history_csv;
use bilateral_core::learn::{load_model, save_model, train_with, LstmPredictor};
use bilateral_core::log::EpisodeLog;
use bilateral_core::parallel::Exec;
use bilateral_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

use export::Quantity;

#[derive(Parser, Debug)]
#[command(name = "bilateral", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run demonstrations and write episode logs plus the learner dataset.
    Demo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the network to a dataset; writes the model and its loss history.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        profile: Option<ProfileArg>,
        #[arg(long)]
        out: PathBuf,
        /// Loss history CSV; defaults to the model path with `.history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Autonomous run with a trained model; writes the episode and its report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "schedule", required_unless_present = "schedule")]
        mop_length: Option<f64>,
        /// CSV with `t,mop_length` rows.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of an episode log over a time window.
    Eval {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        /// Defaults to the end of the log.
        #[arg(long)]
        end: Option<f64>,
        /// Writes the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tidy `t,joint,value,run-id` CSV of slave angles or torques.
    Export {
        #[arg(long, value_enum)]
        what: Quantity,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        episodes: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Tiny,
    Paper,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 2, message }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Config plus the text that goes into every output header.
struct Loaded {
    cfg: ExperimentConfig,
    provenance: String,
}

fn load_config(common: &Common, command: &str, extra: &[(&str, String)]) -> CliResult<Loaded> {
    let (mut cfg, text) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            // anything rejected while loading is a config error, even a NaN
            let cfg = ExperimentConfig::from_toml(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            (cfg, text)
        }
        None => {
            let cfg = ExperimentConfig::default();
            let text = cfg.to_toml();
            (cfg, text)
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let mut provenance = format!("command = {command}\nseed = {}\n", cfg.seed);
    for (k, v) in extra {
        provenance.push_str(&format!("{k} = {v}\n"));
    }
    provenance.push_str("config:\n");
    provenance.push_str(&text);
    Ok(Loaded { cfg, provenance })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} not found: {}", path.display())))
    }
}

fn cmd_demo(common: &Common, episodes: Option<usize>, out: &Path) -> CliResult<()> {
    let extra: Vec<(&str, String)> = episodes
        .map(|k| vec![("episodes", k.to_string())])
        .unwrap_or_default();
    let Loaded { cfg, provenance } = load_config(common, "demo", &extra)?;
    let k = episodes.unwrap_or(cfg.demo.episodes);
    if k == 0 {
        return Err(usage("--episodes must be >= 1".into()));
    }
    let setups = cfg.episode_setups(k)?;
    let logs = run_demonstrations(&setups, Exec::default())?;
    create_dir(out)?;
    for (i, (log, setup)) in logs.iter().zip(&setups).enumerate() {
        let path = out.join(format!("episode_{i:03}.csv"));
        let header = format!("{provenance}episode = {i}\nmop_length = {}\n", setup.env.mop_length);
        log.write_csv(&path, &header)?;
    }
    let ds = build_dataset(&logs, cfg.demo.stride, cfg.demo.horizon)?;
    ds.write_csv(&out.join("dataset.csv"), &provenance)?;
    eprintln!("wrote {k} episodes and dataset.csv to {}", out.display());
    Ok(())
}

fn cmd_train(
    common: &Common,
    dataset: &Path,
    profile: Option<ProfileArg>,
    out: &Path,
    history: Option<&Path>,
) -> CliResult<()> {
    let extra: Vec<(&str, String)> = profile
        .map(|p| vec![("profile", format!("{p:?}").to_lowercase())])
        .unwrap_or_default();
    let Loaded { mut cfg, provenance } = load_config(common, "train", &extra)?;
    if let Some(p) = profile {
        cfg.profile = match p {
            ProfileArg::Tiny => Profile::Tiny,
            ProfileArg::Paper => Profile::Paper,
        };
    }
    require_file(dataset, "dataset")?;
    let ds = Dataset::read_csv(dataset)?;
    let tc = cfg.train_config();
    tc.validate()?;
    let report = train_with(&ds, &tc, Exec::default(), |e| match e.val_loss {
        Some(v) => eprintln!("epoch {} train {:.6} val {:.6}", e.epoch, e.train_loss, v),
        None => eprintln!("epoch {} train {:.6}", e.epoch, e.train_loss),
    })?;
    save_model(out, &report.trained, &provenance)?;
    let history_path = history
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("history.csv"));
    std::fs::write(&history_path, history_csv(&report.history, &provenance))
        .map_err(|e| usage(format!("cannot write {}: {e}", history_path.display())))?;
    eprintln!(
        "best epoch {} of {}; model written to {}",
        report.best_epoch,
        report.history.len(),
        out.display()
    );
    Ok(())
}

fn cmd_run(
    common: &Common,
    model: &Path,
    mop_length: Option<f64>,
    schedule: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let mut extra = vec![("model", model.display().to_string())];
    if let Some(l) = mop_length {
        extra.push(("mop_length", l.to_string()));
    }
    if let Some(s) = schedule {
        extra.push(("schedule", s.display().to_string()));
    }
    let Loaded { cfg, provenance } = load_config(common, "run", &extra)?;
    require_file(model, "model file")?;
    let trained = load_model(model)?;
    let schedule = match (mop_length, schedule) {
        (Some(l), _) => MopSchedule::constant(l)?,
        (None, Some(path)) => {
            require_file(path, "schedule")?;
            MopSchedule::read_csv(path)?
        }
        (None, None) => return Err(usage("one of --mop-length or --schedule is required".into())),
    };
    let setup = cfg.demo_setup()?;
    let acfg = cfg.autoop_config();
    let run = run_autonomous(
        &setup.robot,
        &setup.gains,
        &setup.env,
        &acfg,
        &schedule,
        LstmPredictor::new(trained),
    )?;
    create_dir(out)?;
    run.log.write_csv(&out.join("episode.csv"), &provenance)?;
    let report = evaluate_episode(&run.log, cfg.autoop.eval_start, acfg.duration)?;
    let header = format!("{provenance}nonfinite_predictions = {}\n", run.nonfinite_predictions);
    report.write(&out.join("report.txt"), &header)?;
    print!("{}", report.to_text(""));
    Ok(())
}

fn cmd_eval(episode: &Path, start: f64, end: Option<f64>, out: Option<&Path>) -> CliResult<()> {
    require_file(episode, "episode")?;
    let log = EpisodeLog::read_csv(episode)?;
    let end = end.unwrap_or(f64::INFINITY);
    let report = evaluate_episode(&log, start, end)?;
    let provenance = format!("command = eval\nepisode = {}\n", episode.display());
    match out {
        Some(path) => report.write(path, &provenance)?,
        None => print!("{}", report.to_text(&provenance)),
    }
    Ok(())
}

fn cmd_export(what: Quantity, out: &Path, episodes: &[PathBuf]) -> CliResult<()> {
    let mut runs = Vec::with_capacity(episodes.len());
    for path in episodes {
        require_file(path, "episode")?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        runs.push((id, EpisodeLog::read_csv(path)?));
    }
    let text = export::tidy_csv(what, &runs);
    std::fs::write(out, text).map_err(|e| usage(format!("cannot write {}: {e}", out.display())))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Demo {
            common,
            episodes,
            out,
        } => cmd_demo(&common, episodes, &out),
        Command::Train {
            common,
            dataset,
            profile,
            out,
            history,
        } => cmd_train(&common, &dataset, profile, &out, history.as_deref()),
        Command::Run {
            common,
            model,
            mop_length,
            schedule,
            out,
        } => cmd_run(&common, &model, mop_length, schedule.as_deref(), &out),
        Command::Eval {
            episode,
            start,
            end,
            out,
        } => cmd_eval(&episode, start, end, out.as_deref()),
        Command::Export { what, out, episodes } => cmd_export(what, &out, &episodes),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors on its own
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
