use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use superlab::lab::{self, accept::Suite, ExperimentManifest, ModelRef, ResultStore};
use superlab::{LabError, Result};

#[derive(Parser)]
#[command(name = "lab", version, about = "Subcritical superprocess laboratory")]
struct Cli {
    /// JSON file with the operation's parameters; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Result store root (ensemble file for `simulate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArg {
    model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Standing conditions and Grey's condition.
    Validate(ModelArg),
    /// Eigen-triplet, gap, L log L functional and remainder profile (CSV).
    Spectral {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "t-grid")]
        t_grid: Option<String>,
    },
    /// `V_t f` on a uniform grid (CSV).
    Cumulant {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        f: Option<String>,
        #[arg(long = "t")]
        horizon: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// `v_t` and survival on a uniform grid (CSV).
    Extinction {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "t")]
        horizon: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Path ensemble; binary to `--out`, optional CSV mirror.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        mu0: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Yaglom estimate and restart checks.
    Yaglom {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        mu: Option<String>,
        #[arg(long = "t-large")]
        t_large: Option<f64>,
        #[arg(long = "r")]
        r_grid: Option<String>,
    },
    /// h-transform against conditioning on survival as r grows.
    Qprocess {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        mu: Option<String>,
        #[arg(long = "t")]
        t: Option<f64>,
        #[arg(long = "r")]
        r_grid: Option<String>,
    },
    /// Conditional Laplace functionals over a (t, r) grid.
    Panel {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        mu: Option<String>,
        /// `phi`, `one`, or comma-separated values.
        #[arg(long)]
        f: Option<String>,
        #[arg(long = "t-grid")]
        t_grid: Option<String>,
        #[arg(long = "r-grid")]
        r_grid: Option<String>,
    },
    /// K by spine immigration and the spine/h-transform panel.
    Spine {
        #[command(flatten)]
        model: ModelArg,
        /// Largest truncation window.
        #[arg(long = "T")]
        window: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long = "deltaI")]
        delta_i: Option<f64>,
        /// Time of the panel comparison.
        #[arg(long = "t")]
        t: Option<f64>,
    },
    /// Acceptance criteria.
    Accept {
        #[arg(long, default_value = "FULL")]
        suite: String,
        /// Multiplier on Monte-Carlo sample sizes.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Replays a manifest file.
    Run { manifest: PathBuf },
}

fn parse_vec(s: &str) -> Result<Vec<f64>> {
    s.trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| LabError::InvalidArgument(format!("`{p}`: {e}")))
        })
        .collect()
}

struct Params(Map<String, Value>);

impl Params {
    fn set(&mut self, key: &str, v: Option<Value>) {
        if let Some(v) = v {
            self.0.insert(key.to_string(), v);
        }
    }

    fn vec(&mut self, key: &str, s: &Option<String>) -> Result<()> {
        if let Some(s) = s {
            self.0.insert(key.to_string(), json!(parse_vec(s)?));
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| LabError::InvalidArgument(e.to_string()))?;
    }
    let mut params = Params(match &cli.config {
        Some(path) => match serde_json::from_str(&std::fs::read_to_string(path)?)? {
            Value::Object(m) => m,
            _ => {
                return Err(LabError::InvalidArgument(format!(
                    "{} is not a JSON object",
                    path.display()
                )))
            }
        },
        None => Map::new(),
    });
    let config_seed = params.0.remove("seed").and_then(|v| v.as_u64());
    let seed = cli.seed.or(config_seed).unwrap_or(0);
    let is_simulate = matches!(cli.command, Command::Simulate { .. });
    let store = match (&cli.out, is_simulate) {
        (Some(dir), false) => ResultStore::new(dir),
        _ => ResultStore::from_env(),
    };

    let (op, model) = match &cli.command {
        Command::Validate(m) => ("validate", Some(&m.model)),
        Command::Spectral { model, t_grid } => {
            params.vec("t_grid", t_grid)?;
            ("spectral", Some(&model.model))
        }
        Command::Cumulant {
            model,
            f,
            horizon,
            points,
            tol,
        } => {
            params.vec("f", f)?;
            params.set("horizon", horizon.map(|v| json!(v)));
            params.set("points", points.map(|v| json!(v)));
            params.set("tol", tol.map(|v| json!(v)));
            ("cumulant", Some(&model.model))
        }
        Command::Extinction {
            model,
            horizon,
            points,
            tol,
        } => {
            params.set("horizon", horizon.map(|v| json!(v)));
            params.set("points", points.map(|v| json!(v)));
            params.set("tol", tol.map(|v| json!(v)));
            ("extinction", Some(&model.model))
        }
        Command::Simulate { model, mu0, csv } => {
            params.vec("mu0", mu0)?;
            params.set("csv", csv.as_ref().map(|_| json!(true)));
            ("simulate", Some(&model.model))
        }
        Command::Yaglom {
            model,
            mu,
            t_large,
            r_grid,
        } => {
            params.vec("mu", mu)?;
            params.set("t_large", t_large.map(|v| json!(v)));
            params.vec("r_grid", r_grid)?;
            ("yaglom", Some(&model.model))
        }
        Command::Qprocess {
            model,
            mu,
            t,
            r_grid,
        } => {
            params.vec("mu", mu)?;
            params.set("t", t.map(|v| json!(v)));
            params.vec("r_grid", r_grid)?;
            ("qprocess", Some(&model.model))
        }
        Command::Panel {
            model,
            mu,
            f,
            t_grid,
            r_grid,
        } => {
            params.vec("mu", mu)?;
            match f.as_deref() {
                Some(name @ ("phi" | "one")) => params.set("f", Some(json!(name))),
                Some(values) => params.vec("f", &Some(values.to_string()))?,
                None => {}
            }
            params.vec("t_grid", t_grid)?;
            params.vec("r_grid", r_grid)?;
            ("panel", Some(&model.model))
        }
        Command::Spine {
            model,
            window,
            eps,
            delta_i,
            t,
        } => {
            if let Some(big_t) = window {
                let windows: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|k| k * big_t).collect();
                params.set("windows", Some(json!(windows)));
            }
            params.set("eps", eps.map(|v| json!(v)));
            params.set("delta_i", delta_i.map(|v| json!(v)));
            params.set("t", t.map(|v| json!(v)));
            ("spine", Some(&model.model))
        }
        Command::Accept { suite, scale } => {
            let suite: Suite = suite.parse()?;
            params.set("suite", Some(serde_json::to_value(suite)?));
            params.set("scale", Some(json!(scale)));
            ("accept", None)
        }
        Command::Run { manifest } => {
            let manifest = ExperimentManifest::from_file(manifest)?;
            return finish(&manifest, &store, &cli, None);
        }
    };
    let model = model.map(ModelRef::new).transpose()?;
    let manifest = ExperimentManifest::new(op, model, Value::Object(params.0), seed);
    let csv = match &cli.command {
        Command::Simulate { csv, .. } => csv.clone(),
        _ => None,
    };
    finish(&manifest, &store, &cli, csv)
}

/// Writes to stdout; a closed pipe (`lab ... | head`) is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn finish(
    manifest: &ExperimentManifest,
    store: &ResultStore,
    cli: &Cli,
    csv: Option<PathBuf>,
) -> Result<ExitCode> {
    let (out, dir) = lab::run_and_store(manifest, store)?;
    let rec = &out.record;
    eprintln!("stored {}", dir.display());
    match manifest.op.as_str() {
        "validate" => {
            emit(&format!(
                "{}\n",
                serde_json::to_string_pretty(&rec.summary)?
            ));
            return Ok(if rec.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            });
        }
        "spectral" => {
            let t = &rec.summary["triplet"];
            for key in ["lambda", "gap", "phi", "nu"] {
                emit(&format!("# {key} = {}\n", t[key]));
            }
            emit(&format!(
                "# l_log_l = {}\n",
                rec.summary["l_log_l"]["value"]
            ));
            emit(&rec.tables["remainder"]);
        }
        "cumulant" => emit(&rec.tables["cumulant"]),
        "extinction" => emit(&rec.tables["extinction"]),
        "simulate" => {
            if let Some(path) = &cli.out {
                let (_, bytes) = out
                    .attachments
                    .iter()
                    .find(|(n, _)| n == "ensemble.bin")
                    .expect("ensemble attached");
                std::fs::write(path, bytes)?;
            }
            if let Some(path) = csv {
                std::fs::write(path, &rec.tables["ensemble"])?;
            }
            emit(&format!(
                "{}\n",
                serde_json::to_string_pretty(&rec.summary)?
            ));
        }
        "accept" => {
            if let Some((_, table)) = out.attachments.iter().find(|(n, _)| n == "acceptance.txt") {
                emit(&String::from_utf8_lossy(table));
            }
            return Ok(if rec.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            });
        }
        _ => {
            let view = json!({
                "manifest_hash": rec.manifest_hash,
                "scalars": rec.scalars,
                "checks": rec.checks,
                "summary": rec.summary,
            });
            emit(&format!("{}\n", serde_json::to_string_pretty(&view)?));
        }
    }
    Ok(ExitCode::SUCCESS)
}
