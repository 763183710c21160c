//! Command-line front end for the mushroom billiard toolkit.
//!
//! Four subcommands cover the usual workflow:
//!
//! * `volumes`  — phase-space bookkeeping for a frozen shape (JSON to stdout);
//! * `theory`   — flux-theory prediction for one driving cycle (JSON summary
//!   plus plot-ready CSV curves);
//! * `simulate` — event-driven Monte-Carlo ensemble over one or more cycles
//!   (JSON summary plus CSV histograms);
//! * `compare`  — theory and a fresh one-cycle ensemble side by side, with
//!   z-scored pass/fail verdicts.
//!
//! File-producing commands resolve their output directory from `--out`, then
//! the `MUSHROOM_OUT` environment variable, then the working directory.  Every
//! output document embeds the full configuration — seed included — that
//! produced it, so artifacts are reproducible on their own.  For fixed inputs
//! the outputs are byte-identical across runs.
//!
//! Exit codes: `0` success, `2` configuration or shape error, `3` protocol
//! topology the distribution machinery does not support, `4` simulation
//! quality failure (abort rate above the configured limit).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mushroom_core::ensemble::DEFAULT_ABORT_LIMIT;
use mushroom_core::theory::DEFAULT_SUBINTERVALS;
use mushroom_core::{
    capture_time_gof, geometry, predict, run_ensemble, CaptureWindow, EnsembleConfig, EnsembleRun,
    Error as CoreError, FluxProfile, Histogram, MushroomShape, Protocol, ProtocolSpec,
};

/// Below this many completed trajectories the standard error is itself too
/// noisy to support a verdict, so `compare` reports "inconclusive" instead of
/// pretending to resolve anything.
const MIN_CONCLUSIVE_SAMPLES: usize = 100;

/// A chi-square verdict needs this many pooled categories left over; fewer
/// means the sample could not populate the predicted capture-time shape.
const MIN_CONCLUSIVE_CATEGORIES: usize = 6;

/// Comparisons pass when theory and simulation agree within this many
/// standard errors.
const Z_THRESHOLD: f64 = 3.0;

#[derive(Parser)]
#[command(
    name = "mushroom",
    version,
    about = "Slowly driven mushroom billiards: event-driven simulation and flux theory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print phase-space volumes and derived quantities for a frozen shape.
    Volumes(VolumesArgs),
    /// Evaluate the flux theory for one driving cycle and write curve files.
    Theory(TheoryArgs),
    /// Run a Monte-Carlo ensemble through one or more driving cycles.
    Simulate(SimulateArgs),
    /// Run a one-cycle ensemble and test it against the theory.
    Compare(CompareArgs),
}

#[derive(Args)]
struct VolumesArgs {
    /// Cap radius.
    #[arg(long)]
    r: f64,
    /// Stem half-width at the hinge line.
    #[arg(long)]
    w: f64,
    /// Stem depth.
    #[arg(long)]
    h: f64,
    /// Stem wall tilt, as tan(theta).
    #[arg(long, default_value_t = 0.0)]
    tan_theta: f64,
}

#[derive(Args)]
struct TheoryArgs {
    /// Driving-protocol description (JSON file).
    #[arg(long)]
    protocol: PathBuf,
    /// Output directory; defaults to $MUSHROOM_OUT, then the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quadrature subintervals across one cycle.
    #[arg(long, default_value_t = DEFAULT_SUBINTERVALS)]
    subintervals: usize,
    /// Sample points per curve file.
    #[arg(long, default_value_t = 512)]
    samples: usize,
    /// Bins in the predicted log-gain density.
    #[arg(long, default_value_t = 100)]
    bins: usize,
    /// Reference particle energy; sets the default period of rectangle
    /// protocols so their peak wall speed stays slow against this energy.
    #[arg(long, default_value_t = 1e6)]
    energy: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Driving-protocol description (JSON file); overrides the config file.
    #[arg(long)]
    protocol: Option<PathBuf>,
    /// JSON config carrying the same keys as the flags; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ensemble size.
    #[arg(long)]
    particles: Option<usize>,
    /// Common initial kinetic energy.
    #[arg(long)]
    energy: Option<f64>,
    /// Whole driving cycles to integrate.
    #[arg(long)]
    cycles: Option<u32>,
    /// Ensemble seed; particle i draws from stream i.
    #[arg(long)]
    seed: Option<u64>,
    /// Protocol phase at which the run starts.
    #[arg(long)]
    start_time: Option<f64>,
    /// Maximum tolerated fraction of aborted trajectories.
    #[arg(long)]
    abort_limit: Option<f64>,
    /// Histogram bins.
    #[arg(long)]
    bins: Option<usize>,
    /// Also write per_particle.csv with one row per trajectory.
    #[arg(long)]
    per_particle: bool,
    /// Output directory; defaults to $MUSHROOM_OUT, then the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Driving-protocol description (JSON file).
    #[arg(long)]
    protocol: PathBuf,
    /// Ensemble size.
    #[arg(long, default_value_t = 5000)]
    particles: usize,
    /// Common initial kinetic energy.
    #[arg(long, default_value_t = 1e6)]
    energy: f64,
    /// Ensemble seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Capture-time histogram bins for the goodness-of-fit test.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Significance level of the goodness-of-fit test.
    #[arg(long, default_value_t = 0.01)]
    significance: f64,
    /// Quadrature subintervals across one cycle.
    #[arg(long, default_value_t = DEFAULT_SUBINTERVALS)]
    subintervals: usize,
    /// Output directory for compare.json; the report also goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Volumes(args) => cmd_volumes(&args),
        Command::Theory(args) => cmd_theory(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Compare(args) => cmd_compare(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Maps failures onto the documented exit codes: 3 for protocol topologies
/// the distribution machinery cannot handle, 4 for ensembles that trip the
/// abort-rate gate, 2 for everything else (flags, shapes, schemas, I/O).
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::NoCaptureInterval | CoreError::MultipleCaptureIntervals(_)) => 3,
        Some(CoreError::AbortRateExceeded { .. }) => 4,
        _ => 2,
    }
}

/// Speed of a particle with kinetic energy `e` and unit mass.
fn reference_speed(e: f64) -> f64 {
    (2.0 * e).sqrt()
}

/// Resolves the output directory (`--out`, then `MUSHROOM_OUT`, then `.`)
/// and makes sure it exists.
fn prepare_out(out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out
        .or_else(|| std::env::var_os("MUSHROOM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn load_spec(path: &Path) -> Result<ProtocolSpec> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading protocol file {}", path.display()))?;
    let spec = serde_json::from_str(&text)
        .with_context(|| format!("parsing protocol file {}", path.display()))?;
    Ok(spec)
}

fn write_json(path: &Path, doc: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes a CSV file: a `# config …` echo line, a header line, then rows.
fn write_csv(
    path: &Path,
    config_echo: &str,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "# config {config_echo}")?;
    writeln!(text, "{header}")?;
    for row in rows {
        writeln!(text, "{row}")?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes `bin_center,count,density` rows; an empty sample set produces a
/// header-only file rather than an error.
fn write_histogram_csv(
    path: &Path,
    config_echo: &str,
    samples: &[f64],
    bins: usize,
) -> Result<()> {
    let header = "bin_center,count,density";
    if samples.is_empty() {
        return write_csv(path, config_echo, header, std::iter::empty());
    }
    let hist = Histogram::from_samples(samples, bins)?;
    let rows: Vec<String> = hist
        .bin_centers()
        .iter()
        .zip(hist.counts.iter().zip(hist.densities.iter()))
        .map(|(center, (count, density))| format!("{center},{count},{density}"))
        .collect();
    write_csv(path, config_echo, header, rows)
}

/// `n + 1` evenly spaced edges covering `[lo, hi]`.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

// ---------------------------------------------------------------------------
// volumes
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VolumesDoc {
    r: f64,
    w: f64,
    h: f64,
    tan_theta: f64,
    nu: f64,
    delta: f64,
    area: f64,
    v_cap: f64,
    v_stem: f64,
    v_ell: f64,
    v_cha: f64,
}

fn cmd_volumes(args: &VolumesArgs) -> Result<()> {
    let shape = MushroomShape::new(args.r, args.w, args.h, args.tan_theta)?;
    let volumes = shape.volumes();
    let doc = VolumesDoc {
        r: shape.r,
        w: shape.w,
        h: shape.h,
        tan_theta: shape.tan_theta,
        nu: shape.nu(),
        delta: geometry::delta(shape.nu()),
        area: shape.area(),
        v_cap: volumes.v_cap,
        v_stem: volumes.v_stem,
        v_ell: volumes.v_ell,
        v_cha: volumes.v_cha,
    };
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// theory
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TheoryConfigEcho<'a> {
    protocol: &'a ProtocolSpec,
    energy: f64,
    subintervals: usize,
    samples: usize,
    bins: usize,
}

#[derive(Serialize)]
struct PredictionDoc<'a> {
    config: &'a TheoryConfigEcho<'a>,
    m1: f64,
    p_nc: f64,
    ln_e_nc: f64,
    mean_log_gain: f64,
    loop_area: f64,
    capture_window: Option<CaptureWindow>,
}

fn cmd_theory(args: &TheoryArgs) -> Result<()> {
    if args.samples < 2 {
        return Err(CoreError::InvalidConfig("curve files need at least 2 samples".into()).into());
    }
    if args.bins == 0 {
        return Err(CoreError::InvalidConfig("the density needs at least one bin".into()).into());
    }
    let spec = load_spec(&args.protocol)?;
    let protocol = spec.build(reference_speed(args.energy))?;
    let prediction = predict(protocol.as_ref(), args.subintervals)?;
    let out = prepare_out(args.out.clone())?;

    let config = TheoryConfigEcho {
        protocol: &spec,
        energy: args.energy,
        subintervals: args.subintervals,
        samples: args.samples,
        bins: args.bins,
    };
    let echo = serde_json::to_string(&config)?;
    let doc = PredictionDoc {
        config: &config,
        m1: prediction.m1,
        p_nc: prediction.p_nc,
        ln_e_nc: prediction.ln_energy_noncaptured,
        mean_log_gain: prediction.mean_log_gain,
        loop_area: prediction.loop_area,
        capture_window: prediction.capture_window,
    };
    write_json(&out.join("prediction.json"), &doc)?;

    let period = protocol.period();
    match FluxProfile::compute(protocol.as_ref(), args.subintervals) {
        Ok(profile) => {
            let cycle_times = linspace(0.0, period, args.samples - 1);
            write_csv(
                &out.join("p_cha.csv"),
                &echo,
                "t,p_cha",
                cycle_times
                    .iter()
                    .map(|&t| format!("{t},{}", profile.survival_at(t))),
            )?;

            let window = profile.window();
            let window_times = linspace(window.start, window.end, args.samples - 1);
            let points: Vec<_> = window_times
                .iter()
                .map(|&t| (t, profile.probe(protocol.as_ref(), t)))
                .collect();
            write_csv(
                &out.join("g.csv"),
                &echo,
                "t_in,g",
                points.iter().map(|(t, p)| format!("{t},{}", p.compression)),
            )?;
            write_csv(
                &out.join("e1_of_tin.csv"),
                &echo,
                "t_in,t_release,ln_e1",
                points
                    .iter()
                    .map(|(t, p)| format!("{t},{},{}", p.release, p.log_gain)),
            )?;

            let distribution = profile.distribution();
            let mut lo = distribution.atom_log_gain;
            let mut hi = distribution.atom_log_gain;
            for &v in &distribution.log_gain {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi <= lo {
                lo -= 0.5;
                hi += 0.5;
            }
            let edges = linspace(lo, hi, args.bins);
            let width = (hi - lo) / args.bins as f64;
            let mass = distribution.mass_in_bins(&edges);
            write_csv(
                &out.join("predicted_density.csv"),
                &echo,
                "bin_center,density",
                mass.iter()
                    .enumerate()
                    .map(|(i, m)| format!("{},{}", (edges[i] + edges[i + 1]) / 2.0, m / width)),
            )?;
        }
        Err(CoreError::NoCaptureInterval) => {
            // The hole never narrows, so nothing is ever trapped: survival is
            // identically 1, the capture-time curves are empty, and the
            // predicted density is a unit atom at the non-captured log gain.
            let cycle_times = linspace(0.0, period, args.samples - 1);
            write_csv(
                &out.join("p_cha.csv"),
                &echo,
                "t,p_cha",
                cycle_times.iter().map(|&t| format!("{t},1")),
            )?;
            write_csv(&out.join("g.csv"), &echo, "t_in,g", std::iter::empty())?;
            write_csv(
                &out.join("e1_of_tin.csv"),
                &echo,
                "t_in,t_release,ln_e1",
                std::iter::empty(),
            )?;

            let atom = prediction.ln_energy_noncaptured;
            let edges = linspace(atom - 0.5, atom + 0.5, args.bins);
            let width = 1.0 / args.bins as f64;
            let spike = (args.bins - 1) / 2;
            write_csv(
                &out.join("predicted_density.csv"),
                &echo,
                "bin_center,density",
                (0..args.bins).map(|i| {
                    let density = if i == spike { 1.0 / width } else { 0.0 };
                    format!("{},{density}", (edges[i] + edges[i + 1]) / 2.0)
                }),
            )?;
        }
        Err(err) => return Err(err.into()),
    }

    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Optional config-file counterpart of the `simulate` flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    protocol: Option<ProtocolSpec>,
    particles: Option<usize>,
    energy: Option<f64>,
    cycles: Option<u32>,
    seed: Option<u64>,
    start_time: Option<f64>,
    abort_limit: Option<f64>,
    bins: Option<usize>,
    per_particle: Option<bool>,
}

/// Fully resolved `simulate` configuration, echoed into every output file.
#[derive(Debug, Serialize)]
struct SimulateSettings {
    protocol: ProtocolSpec,
    particles: usize,
    energy: f64,
    cycles: u32,
    seed: u64,
    start_time: f64,
    abort_limit: f64,
    bins: usize,
    per_particle: bool,
}

/// Merges defaults, the optional config file, and explicit flags; flags win.
fn resolve_simulate(args: &SimulateArgs) -> Result<SimulateSettings> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            serde_json::from_str::<SimulateFile>(&text)
                .with_context(|| format!("parsing config file {}", path.display()))?
        }
        None => SimulateFile::default(),
    };
    let protocol = match &args.protocol {
        Some(path) => load_spec(path)?,
        None => file.protocol.ok_or_else(|| {
            CoreError::InvalidConfig(
                "no protocol given: pass --protocol or put one in the config file".into(),
            )
        })?,
    };
    Ok(SimulateSettings {
        protocol,
        particles: args.particles.or(file.particles).unwrap_or(5000),
        energy: args.energy.or(file.energy).unwrap_or(1e6),
        cycles: args.cycles.or(file.cycles).unwrap_or(1),
        seed: args.seed.or(file.seed).unwrap_or(0),
        start_time: args.start_time.or(file.start_time).unwrap_or(0.0),
        abort_limit: args
            .abort_limit
            .or(file.abort_limit)
            .unwrap_or(DEFAULT_ABORT_LIMIT),
        bins: args.bins.or(file.bins).unwrap_or(100),
        per_particle: args.per_particle || file.per_particle.unwrap_or(false),
    })
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    config: &'a SimulateSettings,
    stats: &'a mushroom_core::EnsembleStats,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let settings = resolve_simulate(args)?;
    let protocol = settings.protocol.build(reference_speed(settings.energy))?;
    let config = EnsembleConfig {
        particles: settings.particles,
        initial_energy: settings.energy,
        cycles: settings.cycles,
        seed: settings.seed,
        start_time: settings.start_time,
        abort_limit: settings.abort_limit,
    };
    let run = run_ensemble(protocol.as_ref(), &config)?;
    let out = prepare_out(args.out.clone())?;
    let echo = serde_json::to_string(&settings)?;

    let summary = SummaryDoc {
        config: &settings,
        stats: &run.stats,
    };
    write_json(&out.join("summary.json"), &summary)?;

    let gains = run.log_gains();
    write_histogram_csv(&out.join("log_energy.csv"), &echo, &gains, settings.bins)?;
    if settings.cycles > 1 {
        // Per-cycle-normalized gains tighten with the cycle count; the extra
        // histogram makes multi-cycle runs comparable against one-cycle ones.
        let normalized: Vec<f64> = gains
            .iter()
            .map(|g| g / f64::from(settings.cycles))
            .collect();
        write_histogram_csv(
            &out.join("log_energy_per_cycle.csv"),
            &echo,
            &normalized,
            settings.bins,
        )?;
    }

    let captures: Vec<f64> = run.first_captures().into_iter().flatten().collect();
    write_histogram_csv(&out.join("capture_times.csv"), &echo, &captures, settings.bins)?;

    if settings.per_particle {
        write_per_particle(&out.join("per_particle.csv"), &echo, &run)?;
    }

    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn write_per_particle(path: &Path, echo: &str, run: &EnsembleRun) -> Result<()> {
    let rows = run.records.iter().map(|record| {
        let first = record
            .first_capture()
            .map_or(String::new(), |t| t.to_string());
        let aborted = record
            .aborted
            .map_or(String::new(), |reason| format!("{reason:?}"));
        format!(
            "{},{},{first},{},{},{},{aborted}",
            record.index,
            record.log_gain,
            record.capture_times.len(),
            record.collisions,
            record.hole_crossings,
        )
    });
    write_csv(
        path,
        echo,
        "index,log_gain,first_capture,captures,collisions,hole_crossings,aborted",
        rows,
    )
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CompareConfigEcho<'a> {
    protocol: &'a ProtocolSpec,
    particles: usize,
    energy: f64,
    seed: u64,
    bins: usize,
    significance: f64,
    subintervals: usize,
}

#[derive(Serialize)]
struct TheorySide {
    m1: f64,
    p_nc: f64,
    ln_e_nc: f64,
}

#[derive(Serialize)]
struct SimulationSide {
    m1_star: f64,
    stderr: f64,
    p_nc_star: f64,
    completed: usize,
    aborted: usize,
}

#[derive(Serialize)]
struct ZComparison {
    theory: f64,
    simulated: f64,
    sigma: f64,
    /// Null when sigma is zero and the values agree exactly.
    z: Option<f64>,
    status: &'static str,
}

#[derive(Serialize)]
struct GofComparison {
    status: &'static str,
    statistic: Option<f64>,
    dof: Option<usize>,
    threshold: Option<f64>,
    significance: f64,
    detail: Option<String>,
}

#[derive(Serialize)]
struct CompareDoc<'a> {
    config: CompareConfigEcho<'a>,
    theory: TheorySide,
    simulation: SimulationSide,
    growth_rate: ZComparison,
    non_capture: ZComparison,
    capture_times: GofComparison,
    verdict: &'static str,
}

/// z-tests `simulated` against `theory` at [`Z_THRESHOLD`]; `conclusive`
/// false (sample too small) downgrades the verdict to "inconclusive".
fn z_comparison(theory: f64, simulated: f64, sigma: f64, conclusive: bool) -> ZComparison {
    let diff = simulated - theory;
    let z = if sigma > 0.0 { Some(diff / sigma) } else { None };
    let agrees = match z {
        Some(z) => z.abs() <= Z_THRESHOLD,
        None => diff == 0.0,
    };
    let status = match (conclusive, agrees) {
        (false, _) => "inconclusive",
        (true, true) => "pass",
        (true, false) => "fail",
    };
    ZComparison {
        theory,
        simulated,
        sigma,
        z,
        status,
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let spec = load_spec(&args.protocol)?;
    let protocol = spec.build(reference_speed(args.energy))?;
    let prediction = predict(protocol.as_ref(), args.subintervals)?;

    let config = EnsembleConfig::new(args.particles, args.energy, 1, args.seed);
    let run = run_ensemble(protocol.as_ref(), &config)?;
    let stats = &run.stats;
    let conclusive = stats.completed >= MIN_CONCLUSIVE_SAMPLES;

    let growth_rate = z_comparison(
        prediction.m1,
        stats.mean_log_gain,
        stats.stderr_log_gain,
        conclusive,
    );

    let p_nc_star = 1.0 - stats.captured_fraction;
    let binomial_sigma =
        (prediction.p_nc * (1.0 - prediction.p_nc) / stats.completed.max(1) as f64).sqrt();
    let non_capture = z_comparison(prediction.p_nc, p_nc_star, binomial_sigma, conclusive);

    let capture_times = capture_time_comparison(&run, protocol.as_ref(), args);

    let statuses = [growth_rate.status, non_capture.status, capture_times.status];
    let verdict = if statuses.contains(&"fail") {
        "FAIL"
    } else if statuses.contains(&"inconclusive") {
        "INCONCLUSIVE"
    } else {
        "PASS"
    };

    let doc = CompareDoc {
        config: CompareConfigEcho {
            protocol: &spec,
            particles: args.particles,
            energy: args.energy,
            seed: args.seed,
            bins: args.bins,
            significance: args.significance,
            subintervals: args.subintervals,
        },
        theory: TheorySide {
            m1: prediction.m1,
            p_nc: prediction.p_nc,
            ln_e_nc: prediction.ln_energy_noncaptured,
        },
        simulation: SimulationSide {
            m1_star: stats.mean_log_gain,
            stderr: stats.stderr_log_gain,
            p_nc_star,
            completed: stats.completed,
            aborted: stats.aborted,
        },
        growth_rate,
        non_capture,
        capture_times,
        verdict,
    };

    let out = prepare_out(args.out.clone())?;
    write_json(&out.join("compare.json"), &doc)?;
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

/// Chi-square test of the observed first-capture times against the predicted
/// capture flux.  Degrades to "inconclusive" — never an error — when the
/// protocol has no capture window or the sample is too sparse to populate the
/// histogram.
fn capture_time_comparison(
    run: &EnsembleRun,
    protocol: &dyn Protocol,
    args: &CompareArgs,
) -> GofComparison {
    let inconclusive = |detail: String| GofComparison {
        status: "inconclusive",
        statistic: None,
        dof: None,
        threshold: None,
        significance: args.significance,
        detail: Some(detail),
    };
    let profile = match FluxProfile::compute(protocol, args.subintervals) {
        Ok(profile) => profile,
        Err(CoreError::NoCaptureInterval) => {
            return inconclusive("protocol has no capture window".into())
        }
        Err(err) => return inconclusive(err.to_string()),
    };
    match capture_time_gof(&run.first_captures(), &profile, args.bins, args.significance) {
        Ok(report) if report.categories >= MIN_CONCLUSIVE_CATEGORIES => GofComparison {
            status: if report.pass { "pass" } else { "fail" },
            statistic: Some(report.statistic),
            dof: Some(report.dof),
            threshold: Some(report.threshold),
            significance: args.significance,
            detail: None,
        },
        Ok(report) => inconclusive(format!(
            "only {} categories survive pooling; the sample is too sparse to \
             resolve the predicted capture-time shape",
            report.categories
        )),
        Err(err) => inconclusive(err.to_string()),
    }
}
