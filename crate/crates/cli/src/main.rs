mod experiments;
mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aqec::Error;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use experiments::{Kind, Outcome};
use output::Delta;

#[derive(Parser)]
#[command(name = "aqec", version, about = "Autonomous bosonic error-correction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the catalog of experiment kinds as JSON.
    List,
    /// Print an experiment spec with default parameters.
    Template { kind: String },
    /// Run an experiment spec and write CSVs plus a manifest.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the output directory given in the experiment file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed given in the experiment file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSpec {
    kind: Kind,
    #[serde(default = "empty_object")]
    parameters: Value,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: Option<PathBuf>,
}

fn empty_object() -> Value {
    json!({})
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: Kind,
    spec: &'a ExperimentSpec,
    seed: u64,
    library_version: &'static str,
    wall_time_s: f64,
    outputs: Vec<String>,
    deltas: &'a [Delta],
    warnings: &'a [String],
}

enum Failure {
    Spec(String),
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Stiffness { .. }
            | Error::NotTracePreserving { .. }
            | Error::InvalidDensity(_)
            | Error::NotNormalized { .. }
            | Error::NotPure { .. }
            | Error::Io(_)
            | Error::EmptyEnsemble => Failure::Numerical(e),
            other => Failure::Spec(other.to_string()),
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Stiffness { .. } => "stiffness",
        Error::NotTracePreserving { .. } => "not_trace_preserving",
        Error::InvalidDensity(_) => "invalid_density",
        Error::NotNormalized { .. } => "not_normalized",
        Error::NotPure { .. } => "not_pure",
        Error::Io(_) => "io",
        _ => "numerical",
    }
}

fn report(f: Failure) -> ExitCode {
    let (code, body) = match f {
        Failure::Spec(msg) => (2, json!({"error": "spec", "message": msg})),
        Failure::Numerical(e) => (3, json!({"error": error_kind(&e), "message": e.to_string()})),
    };
    eprintln!("{body}");
    ExitCode::from(code)
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Spec(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Spec(format!("{}: {e}", path.display())))
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<Vec<String>, Failure> {
    fs::create_dir_all(dir).map_err(Error::from)?;
    let mut names = Vec::new();
    for t in &outcome.tables {
        t.write(dir).map_err(Error::from)?;
        names.push(format!("{}.csv", t.name));
    }
    for (name, contents) in &outcome.files {
        fs::write(dir.join(name), contents).map_err(Error::from)?;
        names.push(name.clone());
    }
    Ok(names)
}

fn run(spec_path: &Path, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> Result<(), Failure> {
    let mut spec = load_spec(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dir = out
        .or_else(|| spec.output.clone())
        .ok_or_else(|| Failure::Spec("no output directory: pass --out or set \"output\"".into()))?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Spec("--threads must be positive".into()));
        }
        // Fails only if the pool was already built, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let start = Instant::now();
    let outcome = experiments::run(spec.kind, &spec.parameters, spec.seed)?;
    let wall = start.elapsed().as_secs_f64();
    let mut outputs = write_outputs(&dir, &outcome)?;
    outputs.push("manifest.json".into());
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let manifest = Manifest {
        kind: spec.kind,
        spec: &spec,
        seed: spec.seed,
        library_version: aqec::VERSION,
        wall_time_s: wall,
        outputs,
        deltas: &outcome.deltas,
        warnings: &outcome.warnings,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    fs::write(dir.join("manifest.json"), text).map_err(Error::from)?;
    for d in &outcome.deltas {
        emit(&format!(
            "{} {}: value {} reference {} delta {:+.3e}",
            if d.within { "ok  " } else { "MISS" },
            d.quantity,
            d.value,
            d.reference,
            d.delta
        ));
    }
    Ok(())
}

/// Prints a line, ignoring a closed stdout.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            let catalog: Vec<_> = Kind::ALL.iter().map(|k| k.entry()).collect();
            emit(&serde_json::to_string_pretty(&catalog).expect("catalog serializes"));
            Ok(())
        }
        Command::Template { kind } => serde_json::from_value::<Kind>(Value::String(kind.clone()))
            .map_err(|_| Failure::Spec(format!("unknown kind {kind:?}")))
            .map(|k| {
                let spec = json!({"kind": k, "parameters": k.default_parameters(), "seed": 0, "output": "out"});
                emit(&serde_json::to_string_pretty(&spec).expect("template serializes"));
            }),
        Command::Run { spec, out, seed, threads } => run(&spec, out, seed, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}
