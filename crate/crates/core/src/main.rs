use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rhpi::dynamics::HybridModel;
use rhpi::flightlog::write_log_file;
use rhpi::harness::bench::{render_throughput, write_throughput};
use rhpi::harness::experiment::{fly_setting, render_report};
use rhpi::harness::training::{holdout_propagation, load_model};
use rhpi::harness::{benchmark, plotdata, run_experiment, train, ExperimentConfig, ModelKind, Setting};
use rhpi::simworld::{metrics_from_log, CLOSEST_PASSES};
use rhpi::Error;

#[derive(Parser)]
#[command(name = "rhpi", version, about = "Receding-horizon path integral control experiments")]
struct Cli {
    /// TOML file layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key by dotted path, e.g. `controller.temperature=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the learned model from flight logs and compare one-horizon
    /// propagation error against the analytic model.
    Train,
    /// Fly a single trial and write its log.
    Fly {
        /// `analytic` or `learned:<M>`.
        #[arg(long, default_value = "analytic")]
        setting: String,
    },
    /// Run every configured setting for the configured number of trials.
    Sweep,
    /// Time the optimizer.
    Bench,
    /// Write the obstacle-cost contour and example trajectories.
    Plotdata,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidHyperparameter(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", toml_string(&out.to_string_lossy())));
    }
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    ExperimentConfig::load(cli.config.as_deref(), &overrides)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn set_workers(n: usize) -> Result<(), Error> {
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = load_config(&cli)?;
    set_workers(config.workers)?;
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(config.out_dir.join("config.toml"), config.to_toml())?;

    match cli.command {
        Command::Train => {
            let summary = train(&config)?;
            println!("trained on {} samples from {} logs", summary.samples, summary.logs.len());
            if !summary.rejected.is_empty() {
                println!("rejected {} rows:", summary.rejected.len());
                for (path, r) in summary.rejected.iter().take(20) {
                    println!("  {}:{}: {}", path.display(), r.line, r.reason);
                }
            }
            let [x, y, z] = summary.field_counts;
            println!("receptive fields: ax {x}, ay {y}, az {z}");
            println!("model written to {}", summary.model_dir.display());
            let p = holdout_propagation(&config, &summary.model)?;
            println!("\n{}-step propagation error over {} held-out segments (m)", p.steps, p.segments);
            for (name, e) in [("analytic", p.analytic_error), ("learned", p.learned_error)] {
                println!("{name:<10} x {:.4}  y {:.4}  z {:.4}", e[0], e[1], e[2]);
            }
        }
        Command::Fly { setting } => {
            let setting = Setting::parse(&setting)?;
            let learned = maybe_model(&config, std::slice::from_ref(&setting))?;
            let record = fly_setting(&config, &setting, learned.as_ref(), config.seed)?;
            let path = config.out_dir.join(format!("fly_{}_seed{}.csv", setting.label(), config.seed));
            write_log_file(&path, &record.rows)?;
            let m = metrics_from_log(&record.rows, &config.task, config.quad.dt, config.horizon_seconds());
            println!("outcome: {}", record.outcome.as_str());
            println!("steps: {}", record.rows.len());
            println!("time: {:.2} s", m.completion_time);
            println!("total cost: {:.3}", m.total_cost);
            println!("avg horizon cost per second: {:.3}", m.avg_cost_per_sec_horizon);
            match m.avg_8_closest {
                Some(d) => {
                    println!("avg of {CLOSEST_PASSES} closest passes: {d:.3} m ({} passes)", m.closest_passes.len())
                }
                None => println!("no obstacle passes"),
            }
            if let Some(v) = m.mean_prediction_variance {
                println!("mean prediction variance: ax {:.4}  ay {:.4}  az {:.4}", v[0], v[1], v[2]);
            }
            println!("log written to {}", path.display());
        }
        Command::Sweep => {
            let learned = maybe_model(&config, &config.sweep.settings)?;
            let propagation = match &learned {
                Some(h) => Some(holdout_propagation(&config, h)?),
                None => None,
            };
            let report = run_experiment(&config, learned.as_ref(), propagation, |r| {
                println!("{:<12} seed {:<4} {}", r.setting.label(), r.seed, r.outcome.as_str());
            })?;
            println!("\n{}", render_report(&report));
            println!("report written to {}", config.out_dir.display());
        }
        Command::Bench => {
            let model = match load_model(&config.model_dir()) {
                Ok(m) => m,
                Err(_) => {
                    println!(
                        "no trained model in {}; using a model fitted to the analytic dynamics",
                        config.model_dir().display()
                    );
                    HybridModel::fit_analytic_grid(&config.quad, config.lwpr.to_config(), 0.4, 1)?
                }
            };
            let report = benchmark(&config, &model)?;
            print!("{}", render_throughput(&report));
            write_throughput(&report, &config.out_dir.join("throughput.csv"))?;
            if !report.identical_across_workers {
                return Err(Error::Experiment("optimized plans differ across worker counts".into()));
            }
        }
        Command::Plotdata => {
            let learned = load_model(&config.model_dir()).ok();
            let dir = config.out_dir.join("plot");
            let files = plotdata::write_plotdata(&config, learned.as_ref(), &dir)?;
            println!("contour: {}", files.contour.display());
            for (path, record) in &files.trajectories {
                println!("{}: {}", path.display(), record.outcome.as_str());
            }
        }
    }
    Ok(())
}

/// Loads the trained model when any setting needs it.
fn maybe_model(config: &ExperimentConfig, settings: &[Setting]) -> Result<Option<HybridModel>, Error> {
    if settings.iter().any(|s| s.model == ModelKind::Learned) {
        let dir = config.model_dir();
        load_model(&dir).map(Some).map_err(|e| Error::Config(format!("{e}; run `rhpi train` first")))
    } else {
        Ok(None)
    }
}
