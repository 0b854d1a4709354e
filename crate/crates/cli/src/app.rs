//! Command-line front end. `main` only forwards to [`execute`].

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Format, RunConfig, Scenario};
use crate::run::run;

#[derive(Parser)]
#[command(name = "qruler", version, about = "Quantum ruler experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normal-mode table of the free ruler.
    Modes(Common),
    /// Long-time ion coherence versus dipole count and separation.
    CoherenceSweep(Common),
    /// Mean dipole displacement and spread profiles.
    Response(Common),
    /// Joint measurement coherence versus separation.
    CstarSweep(Common),
    /// Regime checks for the configured ruler and ion.
    Validate(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Built-in parameter set.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads for grid points.
    #[arg(long)]
    threads: Option<usize>,
}

/// Runs one command line and returns the process exit code.
pub fn execute<I, A>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            1
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> anyhow::Result<()> {
    let (scenario, args) = match cli.command {
        Command::Modes(a) => (Scenario::Modes, a),
        Command::CoherenceSweep(a) => (Scenario::CoherenceSweep, a),
        Command::Response(a) => (Scenario::Response, a),
        Command::CstarSweep(a) => (Scenario::CstarSweep, a),
        Command::Validate(a) => (Scenario::Validate, a),
    };
    let cfg = match (&args.preset, &args.config) {
        (Some(p), _) => RunConfig::preset(p)?,
        (None, Some(path)) => RunConfig::from_file(path)?,
        (None, None) => bail!("one of --preset or --config is required"),
    };
    let format = match args.format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None => cfg.format.unwrap_or_default(),
    };
    let out = args.out.clone().or_else(|| cfg.out.clone());

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = args.threads {
        if k == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(k);
    }
    let pool = pool.build().context("starting worker pool")?;
    let table = pool.install(|| run(scenario, &cfg))?;

    if table.is_empty() {
        writeln!(stderr, "warning: `{scenario}` grid is empty, nothing to do")?;
        return Ok(());
    }
    match out {
        Some(path) => {
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            table.write(&mut w, format)?;
            w.flush()?;
        }
        None => table.write(stdout, format)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;

    struct Run {
        code: u8,
        out: String,
        err: String,
    }

    fn qruler(args: &[&str]) -> Run {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = execute(std::iter::once("qruler").chain(args.iter().copied()), &mut out, &mut err);
        Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
    }

    fn write(dir: &Path, name: &str, text: &str) -> String {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    }

    #[test]
    fn dimensionless_validate_succeeds() {
        let r = qruler(&["validate", "--preset", "dimensionless"]);
        assert_eq!(r.code, 0);
        assert_eq!(r.out.lines().count(), 7);
        assert!(r.out.lines().skip(1).all(|l| l.ends_with(",not applicable")), "{}", r.out);
    }

    #[test]
    fn kappa5_validate_warns_on_hopping() {
        let r = qruler(&["validate", "--preset", "kappa5", "--format", "json"]);
        assert_eq!(r.code, 0);
        let rows: serde_json::Value = serde_json::from_str(&r.out).unwrap();
        let hop = rows.as_array().unwrap().iter().find(|r| r["check"] == "hopping").unwrap();
        assert_eq!(hop["status"], "warn");
        assert!(hop["value"].as_f64().unwrap() > 0.05);
    }

    #[test]
    fn oversized_dipole_is_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(
            dir.path(),
            "big.toml",
            "scenario = \"validate\"\nn = [41]\nm_i = 1.0\nq_i = 1.0\nq = 1.0\nl = 0.5\nw = 0.5\neps0 = 1.0\n",
        );
        let r = qruler(&["validate", "--config", &cfg]);
        assert_eq!(r.code, 1);
        assert!(r.err.contains("must be smaller than the ion distance"), "{}", r.err);
    }

    #[test]
    fn separation_zero_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(dir.path(), "sep.toml", "n = [41]\ns = 1.0\nlambda = [2.0]\nseparations = [0]\nc = [0.1]\n");
        let r = qruler(&["cstar-sweep", "--config", &cfg]);
        assert_eq!(r.code, 1);
        assert!(r.err.contains("separation=0"));
    }

    #[test]
    fn empty_grid_warns_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(dir.path(), "empty.toml", "n = [21]\nlambda = [0.3]\n");
        let target = dir.path().join("out.csv");
        let r = qruler(&["coherence-sweep", "--config", &cfg, "--out", target.to_str().unwrap()]);
        assert_eq!(r.code, 0);
        assert!(r.err.contains("warning"));
        assert!(r.out.is_empty());
        assert!(!target.exists());
    }

    #[test]
    fn coherence_csv_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(dir.path(), "c.toml", "n = [11, 21]\nlambda = [0.3]\nseparations = [1, 2]\n");
        let target = dir.path().join("c.csv");
        let r = qruler(&["coherence-sweep", "--config", &cfg, "--out", target.to_str().unwrap(), "--threads", "2"]);
        assert_eq!(r.code, 0, "{}", r.err);
        let text = std::fs::read_to_string(target).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "N,lambda,i1,i2,s,C_I");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("11,3.00000000000e-1,0,1,0.00000000000e0,"));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let one = qruler(&["coherence-sweep", "--preset", "fig3b", "--threads", "1"]);
        let four = qruler(&["coherence-sweep", "--preset", "fig3b", "--threads", "4"]);
        assert_eq!(one.code, 0);
        assert_eq!(one.out, four.out);
        assert_eq!(qruler(&["modes", "--preset", "fig4a", "--threads", "0"]).code, 1);
    }

    #[test]
    fn bad_invocations() {
        assert_eq!(qruler(&["response", "--preset", "fig6"]).code, 1);
        assert_eq!(qruler(&["response", "--preset", "nope"]).code, 1);
        assert_eq!(qruler(&["response"]).code, 1);
        assert_eq!(qruler(&["response", "--preset", "fig4a", "--config", "x.toml"]).code, 2);
        assert_eq!(qruler(&["frobnicate"]).code, 2);
        let help = qruler(&["--help"]);
        assert_eq!(help.code, 0);
        assert!(help.err.contains("cstar-sweep"));
    }

    #[test]
    fn modes_json() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(dir.path(), "m.toml", "n = [5]\nformat = \"json\"\n");
        let r = qruler(&["modes", "--config", &cfg]);
        assert_eq!(r.code, 0);
        let rows: serde_json::Value = serde_json::from_str(&r.out).unwrap();
        assert_eq!(rows.as_array().unwrap().len(), 20);
        assert_eq!(rows[0]["alpha"], 1);
    }
}
