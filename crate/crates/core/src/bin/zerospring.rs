use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zerospring::batch;
use zerospring::error::Error;
use zerospring::fitting::{fit_all, FitConfig};
use zerospring::gradcheck;
use zerospring::io::{
    self, displacement_table, eval_csv, Encoding, FitRecord, FitReport, TrajectoryKind, TrajectorySet,
};
use zerospring::oracle::{synth_truth, SpikeModel};
use zerospring::spring::SpringParams;

#[derive(Parser)]
#[command(name = "zerospring", version, about = "Closed-form spring dynamics: synthesis, fitting and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth with the backward-Euler oracle, optionally with outlier frames.
    Synth(SynthArgs),
    /// Fit per-particle stiffness and damping to ground truth.
    Fit(FitArgs),
    /// Run the closed-form springs with fitted parameters.
    Simulate(SimulateArgs),
    /// Per-frame displacement norms (and errors against truth) as CSV.
    Eval(EvalArgs),
    /// Compare analytic loss gradients with finite differences on a random sweep.
    Gradcheck(GradcheckArgs),
    /// Measure frame-major stepping throughput.
    Bench(BenchArgs),
}

#[derive(Args)]
struct OutputFormat {
    /// Write the trajectory payload as text instead of binary.
    #[arg(long)]
    text: bool,
}

impl OutputFormat {
    fn encoding(&self) -> Encoding {
        if self.text {
            Encoding::Text
        } else {
            Encoding::Binary
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the uncorrupted truth here.
    #[arg(long)]
    clean_out: Option<PathBuf>,
    /// Per-particle parameters from a fit report (overrides --ks/--kd).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    ks: f64,
    #[arg(long, default_value_t = 2.0)]
    kd: f64,
    #[arg(long, default_value_t = 200)]
    substeps: usize,
    #[arg(long, default_value_t = 0.0)]
    spike_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    spike_magnitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    format: OutputFormat,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Flat key = value file of fit settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drop_fraction: Option<f64>,
    /// Particles to fit, e.g. `0..100`, `0..=9`, `3,5,8`. Defaults to all.
    #[arg(long)]
    particles: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    target: PathBuf,
    /// Fit report covering every particle of the target.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    format: OutputFormat,
}

#[derive(Args)]
struct EvalArgs {
    /// Target (quasistatic) trajectory that displacements are measured from.
    #[arg(long)]
    target: PathBuf,
    /// Simulated trajectory.
    #[arg(long)]
    output: PathBuf,
    /// Ground truth; adds per-frame error columns.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Particles to list individually.
    #[arg(long)]
    particles: Option<String>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_CASES)]
    cases: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = batch::REFERENCE_PARTICLES)]
    particles: usize,
    #[arg(long, default_value_t = 300)]
    frames: usize,
    #[arg(long, default_value_t = 1.0 / 30.0)]
    dt: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Input(String),
    Gradcheck(f64),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Format(_) | Error::InvalidTrack(_) => Failure::Input(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn parse_particles(sel: &str, count: usize) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::Usage(format!("bad particle selection {sel:?}"));
    let mut out = Vec::new();
    for part in sel.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(num(a)?..=num(b)?);
        } else if let Some((a, b)) = part.split_once("..") {
            let hi = if b.trim().is_empty() { count } else { num(b)? };
            out.extend(num(a)?..hi);
        } else {
            out.push(num(part)?);
        }
    }
    if let Some(&i) = out.iter().find(|&&i| i >= count) {
        return Err(Failure::Usage(format!("particle {i} out of range for {count} particles")));
    }
    Ok(out)
}

fn params_for_all(report: &FitReport, particles: usize) -> Result<Vec<SpringParams>, Failure> {
    (0..particles)
        .map(|i| {
            report
                .record(i)
                .map(|r| r.params)
                .ok_or_else(|| Failure::Usage(format!("fit report has no record for particle {i}")))
        })
        .collect()
}

fn synth(a: SynthArgs) -> CliResult {
    let target = io::read_trajectory(&a.target)?;
    let params = match &a.params {
        Some(path) => params_for_all(&io::read_fit_report(path)?, target.particles())?,
        None => vec![SpringParams::new(a.ks, a.kd)?; target.particles()],
    };
    let mut clean = Vec::with_capacity(target.particles());
    let mut dirty = Vec::with_capacity(target.particles());
    let mut spiked = 0;
    for (i, p) in params.iter().enumerate() {
        let track = target.track(i)?;
        let spikes = SpikeModel {
            fraction: a.spike_fraction,
            magnitude: a.spike_magnitude,
            seed: a.seed.wrapping_add(i as u64),
        };
        let (truth, frames) = synth_truth(&track, p, None, a.substeps, &spikes)?;
        if a.clean_out.is_some() {
            let (c, _) = synth_truth(&track, p, None, a.substeps, &SpikeModel::none())?;
            clean.push(c.positions().to_vec());
        }
        spiked += frames.len();
        dirty.push(truth.positions().to_vec());
    }
    let out = TrajectorySet::from_particles(&dirty, target.dt(), TrajectoryKind::Truth)?;
    io::write_trajectory(&a.out, &out, a.format.encoding())?;
    if let Some(path) = &a.clean_out {
        let set = TrajectorySet::from_particles(&clean, target.dt(), TrajectoryKind::Truth)?;
        io::write_trajectory(path, &set, a.format.encoding())?;
    }
    println!(
        "synth: {} particles x {} frames, {} spiked frames",
        target.particles(),
        target.frames(),
        spiked
    );
    Ok(())
}

fn fit(a: FitArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => io::read_config(path)?,
        None => FitConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(f) = a.drop_fraction {
        cfg.drop_fraction = f;
    }
    cfg.validate()?;
    let target = io::read_trajectory(&a.target)?;
    let truth = io::read_trajectory(&a.truth)?;
    if target.frames() != truth.frames() || target.particles() != truth.particles() {
        return Err(Error::Misaligned("target and truth differ in shape".into()).into());
    }
    let ids = match &a.particles {
        Some(sel) => parse_particles(sel, target.particles())?,
        None => (0..target.particles()).collect(),
    };
    let tracks = ids.iter().map(|&i| target.track(i)).collect::<Result<Vec<_>, _>>()?;
    let truths = ids.iter().map(|&i| truth.truth(i)).collect::<Result<Vec<_>, _>>()?;
    let results = fit_all(&tracks, &truths, &cfg);
    let mut report = FitReport::default();
    for (&id, r) in ids.iter().zip(results) {
        report.records.push(FitRecord::from_result(id, &r?));
    }
    io::write_fit_report(&a.out, &report)?;
    let total: f64 = report.records.iter().map(|r| r.final_loss).sum();
    let converged = report.records.iter().filter(|r| r.converged).count();
    println!(
        "fit: {} particles, {} converged, total loss {:.6e}",
        report.records.len(),
        converged,
        total
    );
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult {
    let target = io::read_trajectory(&a.target)?;
    let params = params_for_all(&io::read_fit_report(&a.params)?, target.particles())?;
    let out = batch::simulate(&target, &params)?;
    io::write_trajectory(&a.out, &out, a.format.encoding())?;
    println!("simulate: {} particles x {} frames", out.particles(), out.frames());
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let target = io::read_trajectory(&a.target)?;
    let output = io::read_trajectory(&a.output)?;
    let listed = match &a.particles {
        Some(sel) => parse_particles(sel, target.particles())?,
        None => Vec::new(),
    };
    let disp = displacement_table(&target, &output, &listed)?;
    let err = match &a.truth {
        Some(path) => Some(displacement_table(&io::read_trajectory(path)?, &output, &listed)?),
        None => None,
    };
    std::fs::write(&a.out, eval_csv(&disp, err.as_ref())).map_err(|e| Failure::Input(e.to_string()))?;
    println!("eval: rms displacement {:.6e}", disp.rms);
    if let Some(e) = &err {
        println!("eval: rms error {:.6e} (sum of squares {:.6e})", e.rms, e.sum_sq);
    }
    Ok(())
}

fn run_gradcheck(a: GradcheckArgs) -> CliResult {
    let report = gradcheck::sweep(a.seed, a.cases);
    let worst = report.max_rel_error();
    let line = format!(
        "max_rel_error {worst:.3e} over {} cases (tolerance {:.0e})",
        report.cases.len(),
        gradcheck::TOLERANCE
    );
    println!("gradcheck: {line}");
    if let Some(path) = &a.out {
        std::fs::write(path, line + "\n").map_err(|e| Failure::Input(e.to_string()))?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Gradcheck(worst))
    }
}

fn bench(a: BenchArgs) -> CliResult {
    let r = batch::bench(a.particles, a.frames, a.dt)?;
    let text = format!(
        "particles {}\nframes {}\nseconds {:.6}\nparticle_steps_per_second {:.6e}\nfps {:.1}\n",
        r.particles, r.frames, r.seconds, r.particle_steps_per_second, r.fps
    );
    print!("{text}");
    if let Some(path) = &a.out {
        std::fs::write(path, text).map_err(|e| Failure::Input(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Gradcheck(worst)) => {
            eprintln!("gradcheck failed: max relative error {worst:.3e}");
            ExitCode::from(4)
        }
    }
}
