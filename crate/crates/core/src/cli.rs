//! Command-line front end: `run`, `sweep` and `validate`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finger::TendonInput;
use crate::fpe::moments;
use crate::monte_carlo::{confidence_report, run_ensemble, ConfidenceReport, SampledEnsemble};
use crate::mpc::{run_episode, sweep_cell, EpisodeResult, SweepCell};
use crate::scenario::{parse_scenario, Scenario};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "FPE_MPC_OUTPUT_ROOT";

const PARTIAL_SWEEP: &str = "sweep.partial.csv";

#[derive(Debug, Parser)]
#[command(name = "fpe-mpc", version, about = "Density-shaping MPC for a stochastic tendon-driven finger")]
pub struct Cli {
    /// Worker threads for parallel episodes and samples (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one controller episode and write its traces.
    Run {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Final objective for every pair of reference means.
    Sweep {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte-Carlo check of a recorded input sequence.
    Validate {
        scenario: PathBuf,
        /// Directory written by `run`.
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to the episode directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 1,
        Error::Parse(_) => 2,
        Error::SchemeViolation { .. }
        | Error::SingularSystem { .. }
        | Error::MassDrift { .. }
        | Error::Numeric(_)
        | Error::Controller(_) => 3,
        Error::InvalidArgument(_) | Error::GridMismatch(_) | Error::EmptyEnsemble => 4,
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let run = || match &cli.command {
        Command::Run { scenario, output } => cmd_run(scenario, output.as_deref()).map(|_| ()),
        Command::Sweep { scenario, output } => cmd_sweep(scenario, output.as_deref()).map(|_| ()),
        Command::Validate {
            scenario,
            episode,
            samples,
            seed,
            output,
        } => cmd_validate(scenario, episode, *samples, *seed, output.as_deref()).map(|_| ()),
    };
    match cli.workers {
        Some(0) => Err(Error::invalid("--workers must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// `-o` wins, then the scenario's `output_dir`, then the environment root
/// joined with the scenario file stem, then `./fpe-mpc-out/<stem>`.
pub fn resolve_output(explicit: Option<&Path>, scenario: &Scenario, scenario_path: &Path) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &scenario.output_dir {
        return p.clone();
    }
    let stem = scenario_path
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_else(|| "scenario".into());
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(stem),
        _ => PathBuf::from("fpe-mpc-out").join(stem),
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    scenario_path: String,
    wall_time_s: f64,
    files: Vec<String>,
    summary: BTreeMap<&'a str, f64>,
    scenario: &'a Scenario,
}

fn manifest_text(
    command: &str,
    scenario_path: &Path,
    scenario: &Scenario,
    wall_time_s: f64,
    files: Vec<String>,
    summary: BTreeMap<&str, f64>,
) -> Result<String> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        scenario_path: scenario_path.display().to_string(),
        wall_time_s,
        files,
        summary,
        scenario,
    };
    toml::to_string(&m).map_err(|e| Error::Parse(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file so readers never see half a file.
fn write_file_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_file(&tmp, contents)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Text of every episode artifact, keyed by file name.
pub fn episode_artifacts(scenario: &Scenario, result: &EpisodeResult) -> Result<Vec<(String, String)>> {
    let dt = scenario.mpc.dt;
    let mut files = Vec::new();

    let mut inputs = String::from("step,t,u1,u2,u3\n");
    for (k, u) in result.inputs.iter().enumerate() {
        let [a, b, c] = u.as_array();
        writeln!(inputs, "{k},{},{a},{b},{c}", k as f64 * dt).unwrap();
    }
    files.push(("inputs.csv".to_string(), inputs));

    let mut objective = String::from("step,t,objective,mean1,mean2,var1,var2\n");
    let objectives = std::iter::once(result.initial_objective).chain(result.objective_trace.iter().copied());
    for (k, (j, pdf)) in objectives.zip(&result.pdf_snapshots).enumerate() {
        let (mean, cov) = moments(pdf);
        writeln!(
            objective,
            "{k},{},{j},{},{},{},{}",
            k as f64 * dt,
            mean[0],
            mean[1],
            cov[(0, 0)],
            cov[(1, 1)]
        )
        .unwrap();
    }
    files.push(("objective.csv".to_string(), objective));

    let mut nominal = String::from("step,t,q1,q2,q1_dot,q2_dot,tau1,tau2,eta1,eta2\n");
    for (k, (x, eta)) in result.nominal_state_trace.iter().zip(&result.eta_trace).enumerate() {
        writeln!(
            nominal,
            "{k},{},{},{},{},{},{},{},{},{}",
            k as f64 * dt,
            x.q[0],
            x.q[1],
            x.q_dot[0],
            x.q_dot[1],
            x.tau[0],
            x.tau[1],
            eta[0],
            eta[1]
        )
        .unwrap();
    }
    files.push(("nominal_state.csv".to_string(), nominal));

    let width = result.pdf_snapshots.len().saturating_sub(1).to_string().len().max(3);
    for (k, pdf) in result.pdf_snapshots.iter().enumerate() {
        let mut text = String::from("q1,q2,p\n");
        for (q, p) in pdf.grid().nodes().zip(pdf.values()) {
            writeln!(text, "{},{},{p}", q[0], q[1]).unwrap();
        }
        files.push((format!("pdf_{k:0width$}.csv"), text));
    }

    files.push(("meta.toml".to_string(), scenario.to_toml_string()?));
    Ok(files)
}

/// Moves a fully written staging directory into place. An existing target
/// is replaced only when it holds a previous run (it has a manifest).
fn publish(staging: &Path, target: &Path) -> Result<()> {
    if target.exists() {
        if !target.join("manifest.toml").is_file() {
            return Err(Error::invalid(format!(
                "output directory {} exists and is not a previous run",
                target.display()
            )));
        }
        fs::remove_dir_all(target).map_err(|e| Error::io(target, e))?;
    }
    fs::rename(staging, target).map_err(|e| Error::io(target, e))
}

fn staging_dir(target: &Path) -> Result<PathBuf> {
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let name = target
        .file_name()
        .ok_or_else(|| Error::invalid(format!("bad output path {}", target.display())))?;
    let mut staged = name.to_os_string();
    staged.push(format!(".staging-{}", std::process::id()));
    let dir = parent.join(staged);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Runs one episode and writes its artifacts to the output directory.
pub fn cmd_run(scenario_path: &Path, output: Option<&Path>) -> Result<PathBuf> {
    let start = Instant::now();
    let scenario = parse_scenario(scenario_path)?;
    let target = resolve_output(output, &scenario, scenario_path);
    let result = run_episode(&scenario.episode_spec())?;
    log::info!(
        "episode done: J0 = {:.6e}, J_final = {:.6e}",
        result.initial_objective,
        result.final_objective
    );

    let files = episode_artifacts(&scenario, &result)?;
    let staging = staging_dir(&target)?;
    let written = (|| {
        for (name, text) in &files {
            write_file(&staging.join(name), text)?;
        }
        let summary = BTreeMap::from([
            ("initial_objective", result.initial_objective),
            ("final_objective", result.final_objective),
            ("steps", result.steps() as f64),
        ]);
        let names = files.iter().map(|(n, _)| n.clone()).collect();
        let manifest = manifest_text(
            "run",
            scenario_path,
            &scenario,
            start.elapsed().as_secs_f64(),
            names,
            summary,
        )?;
        write_file(&staging.join("manifest.toml"), &manifest)?;
        publish(&staging, &target)
    })();
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    Ok(target)
}

fn sweep_line(cell: &SweepCell) -> String {
    format!("{},{},{}\n", cell.mu[0], cell.mu[1], cell.final_objective)
}

fn parse_sweep_line(line: &str) -> Option<SweepCell> {
    let fields: Vec<f64> = line.split(',').map(|f| f.trim().parse().ok()).collect::<Option<_>>()?;
    match fields[..] {
        [m1, m2, j] => Some(SweepCell {
            mu: [m1, m2],
            initial_objective: f64::NAN,
            final_objective: j,
        }),
        _ => None,
    }
}

/// Reads `sweep.csv`-style rows.
pub fn read_sweep(path: &Path) -> Result<Vec<SweepCell>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_sweep_line(l).ok_or_else(|| Error::Parse(format!("{}: bad row `{l}`", path.display()))))
        .collect()
}

/// Runs the reachability sweep. Completed cells are appended to
/// `sweep.partial.csv` as they finish, and a rerun skips them.
pub fn cmd_sweep(scenario_path: &Path, output: Option<&Path>) -> Result<PathBuf> {
    let start = Instant::now();
    let scenario = parse_scenario(scenario_path)?;
    let target = resolve_output(output, &scenario, scenario_path);
    fs::create_dir_all(&target).map_err(|e| Error::io(&target, e))?;
    let base = scenario.episode_spec();
    let mus = &scenario.sweep.mu_values;
    let cells: Vec<[f64; 2]> = mus
        .iter()
        .flat_map(|&a| mus.iter().map(move |&b| [a, b]))
        .collect();

    let partial_path = target.join(PARTIAL_SWEEP);
    let mut done: Vec<SweepCell> = if partial_path.is_file() {
        let text = fs::read_to_string(&partial_path).map_err(|e| Error::io(&partial_path, e))?;
        // a torn last line from an interrupted write is dropped
        text.lines().filter_map(parse_sweep_line).collect()
    } else {
        Vec::new()
    };
    done.retain(|c| cells.contains(&c.mu));
    let todo: Vec<[f64; 2]> = cells
        .iter()
        .filter(|mu| !done.iter().any(|c| c.mu == **mu))
        .copied()
        .collect();
    log::info!("sweep: {} cells done, {} to run", done.len(), todo.len());

    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&partial_path)
        .map_err(|e| Error::io(&partial_path, e))?;
    // start appended rows on a fresh line
    let ends_clean = fs::read(&partial_path)
        .map(|b| b.last().is_none_or(|c| *c == b'\n'))
        .unwrap_or(true);
    if !ends_clean {
        file.write_all(b"\n").map_err(|e| Error::io(&partial_path, e))?;
    }
    let sink = Mutex::new(file);
    let fresh: Vec<SweepCell> = todo
        .par_iter()
        .map(|mu| {
            let cell = sweep_cell(&base, *mu)?;
            let mut f = sink.lock().expect("sweep writer poisoned");
            f.write_all(sweep_line(&cell).as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(&partial_path, e))?;
            Ok(cell)
        })
        .collect::<Result<_>>()?;
    done.extend(fresh);

    let mut text = String::from("mu1,mu2,final_objective\n");
    for mu in &cells {
        let cell = done.iter().find(|c| c.mu == *mu).expect("every cell computed");
        text.push_str(&sweep_line(cell));
    }
    write_file_atomic(&target.join("sweep.csv"), &text)?;
    let manifest = manifest_text(
        "sweep",
        scenario_path,
        &scenario,
        start.elapsed().as_secs_f64(),
        vec!["sweep.csv".into()],
        BTreeMap::from([("cells", cells.len() as f64)]),
    )?;
    write_file_atomic(&target.join("manifest.toml"), &manifest)?;
    fs::remove_file(&partial_path).map_err(|e| Error::io(&partial_path, e))?;
    Ok(target)
}

/// Reads the input trace written by `run`.
pub fn read_inputs(path: &Path) -> Result<Vec<TendonInput>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut inputs = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("{}:{}: bad input row `{line}`", path.display(), n + 1));
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        if fields.len() != 5 || fields[0] as usize != inputs.len() {
            return Err(bad());
        }
        inputs.push(TendonInput::new([fields[2], fields[3], fields[4]]));
    }
    Ok(inputs)
}

pub fn ensemble_finals_csv(ensemble: &SampledEnsemble, report: &ConfidenceReport) -> String {
    let mut text =
        String::from("sample,k_v1,k_v2,c_v1,c_v2,c_p1,c_p2,diverged,q1,q2,inside1,inside2\n");
    for (i, (params, q)) in ensemble.samples.iter().zip(&report.finals).enumerate() {
        let p = params.to_array();
        write!(text, "{i},{},{},{},{},{},{}", p[0], p[1], p[2], p[3], p[4], p[5]).unwrap();
        match q {
            Some(q) => {
                let inside = report.inside(q);
                writeln!(text, ",0,{},{},{},{}", q[0], q[1], inside[0] as u8, inside[1] as u8).unwrap();
            }
            None => text.push_str(",1,,,,\n"),
        }
    }
    text
}

pub fn confidence_text(report: &ConfidenceReport, seed: u64) -> String {
    let mut text = String::new();
    writeln!(text, "samples = {}", report.total()).unwrap();
    writeln!(text, "seed = {seed}").unwrap();
    writeln!(text, "diverged = {}", report.diverged).unwrap();
    for d in 0..2 {
        writeln!(text, "band{} = [{}, {}]", d + 1, report.band[d].0, report.band[d].1).unwrap();
        writeln!(text, "fraction_inside{} = {}", d + 1, report.fraction_inside[d]).unwrap();
    }
    text
}

/// Monte-Carlo validation of the inputs recorded in `episode`.
pub fn cmd_validate(
    scenario_path: &Path,
    episode: &Path,
    samples: Option<usize>,
    seed: Option<u64>,
    output: Option<&Path>,
) -> Result<ConfidenceReport> {
    let start = Instant::now();
    let mut scenario = parse_scenario(scenario_path)?;
    if let Some(n) = samples {
        if n == 0 {
            return Err(Error::invalid("--samples must be at least 1"));
        }
        scenario.ensemble.samples = n;
    }
    if let Some(s) = seed {
        scenario.ensemble.seed = s;
    }
    let inputs = read_inputs(&episode.join("inputs.csv"))?;
    let target = output.unwrap_or(episode);
    fs::create_dir_all(target).map_err(|e| Error::io(target, e))?;

    let ens = scenario.ensemble;
    let ensemble = run_ensemble(
        &scenario.geometry,
        &scenario.shapes,
        &inputs,
        scenario.mpc.dt,
        ens.dt_fine,
        ens.samples,
        ens.seed,
    )?;
    let report = confidence_report(&ensemble, &scenario.reference)?;
    write_file_atomic(&target.join("ensemble_finals.csv"), &ensemble_finals_csv(&ensemble, &report))?;
    write_file_atomic(&target.join("confidence.txt"), &confidence_text(&report, ens.seed))?;
    let manifest = manifest_text(
        "validate",
        scenario_path,
        &scenario,
        start.elapsed().as_secs_f64(),
        vec!["ensemble_finals.csv".into(), "confidence.txt".into()],
        BTreeMap::from([
            ("fraction_inside1", report.fraction_inside[0]),
            ("fraction_inside2", report.fraction_inside[1]),
            ("diverged", report.diverged as f64),
        ]),
    )?;
    write_file_atomic(&target.join("validate_manifest.toml"), &manifest)?;
    report.check_divergence()?;
    Ok(report)
}
