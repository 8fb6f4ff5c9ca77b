//! `regal` subcommands.
//!
//! Exit codes: 0 success, 1 invariant failure, 2 usage or input error,
//! 3 I/O or runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use regal_core::diameters::{analyze, DiameterReport};
use regal_core::envs::{make_lower_bound, LowerBoundParams};
use regal_core::mdp::{solve_gain_bias, DEFAULT_THETA};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::experiment::{read_summary, run_experiment, ExperimentError};
use crate::format::{emit_mdp, parse_mdp};
use crate::plot;
use crate::validate::Suite;

pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "regal", version, about = "Span-regularized optimistic learning for average-reward MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gain, bias span and diameters of an MDP document.
    Analyze {
        mdp: PathBuf,
        /// Print JSON instead of aligned text.
        #[arg(long)]
        json: bool,
    },
    /// Run an experiment config; exits 1 if a diagnostic fails.
    Run { config: PathBuf },
    /// Benchmark generators.
    Bench {
        #[command(subcommand)]
        which: Bench,
    },
    /// Run the full acceptance suite.
    Validate,
    /// Write a gnuplot data file and an SVG chart from a summary.json.
    Plot {
        summary: PathBuf,
        /// Output directory; defaults to the summary's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum Bench {
    /// Emit a lower-bound family instance as an MDP document.
    MakeLb {
        #[arg(long = "S")]
        num_states: usize,
        #[arg(long = "A")]
        num_actions: usize,
        #[arg(long)]
        dow: f64,
        #[arg(long = "T")]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self { code: EXIT_USAGE, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Self { code: EXIT_RUNTIME, message: message.to_string() }
    }

    fn invariant(message: impl ToString) -> Self {
        Self { code: EXIT_INVARIANT, message: message.to_string() }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::Workers(_) => Failure::usage(e),
            ExperimentError::Reaggregation(_) => Failure::invariant(e),
            _ => Failure::runtime(e),
        }
    }
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Analyze { mdp, json } => analyze_cmd(&mdp, json, out),
        Command::Run { config } => run_cmd(&config, out),
        Command::Bench { which: Bench::MakeLb { num_states, num_actions, dow, horizon, seed, out: path } } => {
            let p = LowerBoundParams::new(num_states, num_actions, dow, horizon, seed).map_err(Failure::usage)?;
            let text = emit_mdp(&make_lower_bound(&p).map_err(Failure::usage)?);
            match path {
                Some(path) => std::fs::write(&path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display()))),
                None => out.write_all(text.as_bytes()).map_err(Failure::runtime),
            }
        }
        Command::Validate => {
            let outcomes = Suite::new().run_all();
            for o in &outcomes {
                writeln!(out, "{o}").map_err(Failure::runtime)?;
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                return Err(Failure::invariant(format!("{failed} of {} criteria failed", outcomes.len())));
            }
            Ok(())
        }
        Command::Plot { summary, out_dir } => plot_cmd(&summary, out_dir, out),
    }
}

/// Finite numbers as JSON numbers, infinities as `"inf"` / `"-inf"`.
fn number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn text_number(x: f64) -> String {
    if !x.is_finite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn analyze_cmd(path: &Path, as_json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let m = parse_mdp(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let gain = solve_gain_bias(&m, 1e-10, DEFAULT_THETA).map_err(Failure::invariant)?.gain;
    let r: DiameterReport = analyze(&m).map_err(Failure::invariant)?;
    let opt = |x: Option<f64>| x.map_or(Value::Null, number);
    if as_json {
        let doc = json!({
            "num_states": m.num_states(),
            "num_actions": m.num_actions(),
            "gain": number(gain),
            "span": number(r.span),
            "d_ow": number(r.d_ow),
            "d": number(r.d),
            "d_worst": opt(r.d_worst),
            "d_opt": opt(r.d_opt),
            "s_bar": r.s_bar,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("plain values")).map_err(Failure::runtime)?;
    } else {
        let opt_text = |x: Option<f64>| x.map_or("n/a".to_string(), text_number);
        let rows = [
            ("states", m.num_states().to_string()),
            ("actions", m.num_actions().to_string()),
            ("gain", text_number(gain)),
            ("span", text_number(r.span)),
            ("d_ow", text_number(r.d_ow)),
            ("d", text_number(r.d)),
            ("d_worst", opt_text(r.d_worst)),
            ("d_opt", opt_text(r.d_opt)),
            ("s_bar", r.s_bar.to_string()),
        ];
        for (k, v) in rows {
            writeln!(out, "{k:<8} {v}").map_err(Failure::runtime)?;
        }
    }
    Ok(())
}

fn run_cmd(path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(path).map_err(Failure::usage)?;
    let summary = run_experiment(&cfg)?;
    let d = &summary.diagnostics;
    let last = summary.checkpoints.len() - 1;
    writeln!(
        out,
        "{} / {}: {} seeds, T = {}, mean regret {:.3} (sd {:.3}), episodes max {}, membership {:.2}%",
        summary.environment,
        summary.agent.kind.name(),
        summary.seeds.len(),
        summary.agent.horizon,
        summary.mean_regret[last],
        summary.std_regret[last],
        d.max_episodes,
        100.0 * d.membership_rate
    )
    .map_err(Failure::runtime)?;
    writeln!(out, "wrote {}", cfg.output_path().display()).map_err(Failure::runtime)?;
    if !summary.passed() {
        return Err(Failure::invariant(format!(
            "diagnostics failed: {} aborted, {} episode-bound, {} optimism, {} visit-ratio violations",
            d.aborted_runs, d.episode_bound_violations, d.optimism_violations, d.visit_ratio_violations
        )));
    }
    Ok(())
}

fn plot_cmd(summary_path: &Path, out_dir: Option<PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    let summary = read_summary(summary_path).map_err(Failure::usage)?;
    let dir = out_dir.unwrap_or_else(|| summary_path.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    for (name, body) in [("regret.dat", plot::data_file(&summary)), ("regret.svg", plot::svg(&summary))] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        writeln!(out, "wrote {}", path.display()).map_err(Failure::runtime)?;
    }
    Ok(())
}
