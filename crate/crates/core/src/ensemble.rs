//! Deterministic parallel Monte-Carlo ensembles over the simulator.
//!
//! Initial conditions are drawn microcanonically: positions uniform over
//! the instantaneous billiard area, velocity directions uniform on the
//! circle, all at a common energy.  Each particle owns one counter-mode
//! stream of a seeded ChaCha generator, so the ensemble is bitwise
//! reproducible for a given seed regardless of how many worker threads run
//! it or in what order they pick up particles.
//!
//! A run integrates every particle over a whole number of protocol cycles,
//! recording per-cycle log energies and every capture into the integrable
//! component.  Aborted trajectories (corner hits and friends) are kept in
//! the records but excluded from statistics; a run whose abort fraction
//! exceeds the configured quality threshold is refused as a whole.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{AbortReason, CaptureEvent, EventSink, ParticleState, Simulator};
use crate::dynamics::StopReason;
use crate::error::{Error, Result};
use crate::geometry::{MushroomShape, Region};
use crate::protocol::Protocol;
use crate::theory::FluxProfile;

/// Default ceiling on the tolerated fraction of aborted trajectories.
pub const DEFAULT_ABORT_LIMIT: f64 = 1e-3;

/// Expected counts below this are pooled before a chi-square test.
const MIN_EXPECTED_PER_CATEGORY: f64 = 5.0;

/// Parameters of one Monte-Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleConfig {
    /// Number of particles.
    pub particles: usize,
    /// Common initial kinetic energy.
    pub initial_energy: f64,
    /// Whole protocol cycles to integrate.
    pub cycles: u32,
    /// Seed of the ensemble; particle `i` uses stream `i` of this seed.
    pub seed: u64,
    /// Phase of the protocol at which the run starts.
    pub start_time: f64,
    /// Maximum tolerated fraction of aborted trajectories.
    pub abort_limit: f64,
}

impl EnsembleConfig {
    pub fn new(particles: usize, initial_energy: f64, cycles: u32, seed: u64) -> Self {
        EnsembleConfig {
            particles,
            initial_energy,
            cycles,
            seed,
            start_time: 0.0,
            abort_limit: DEFAULT_ABORT_LIMIT,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidConfig("ensemble needs at least one particle".into()));
        }
        if !(self.initial_energy.is_finite() && self.initial_energy > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "initial energy must be positive and finite, got {}",
                self.initial_energy
            )));
        }
        if self.cycles == 0 {
            return Err(Error::InvalidConfig("ensemble needs at least one cycle".into()));
        }
        if !(0.0..1.0).contains(&self.abort_limit) {
            return Err(Error::InvalidConfig(format!(
                "abort limit must lie in [0, 1), got {}",
                self.abort_limit
            )));
        }
        if !self.start_time.is_finite() {
            return Err(Error::InvalidConfig("start time must be finite".into()));
        }
        Ok(())
    }
}

/// Everything retained about one trajectory.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ParticleRecord {
    pub index: usize,
    /// Sampled initial condition.
    pub start: ParticleState,
    /// `ln(E_k / E_0)` at each completed cycle boundary; starts with `0.0`,
    /// so a full run has `cycles + 1` entries.
    pub cycle_log_energy: Vec<f64>,
    /// `ln(E_end / E_0)` over the completed part of the run.
    pub log_gain: f64,
    /// Capture moments `t_in` of every trapping, in order.
    pub capture_times: Vec<f64>,
    pub collisions: u64,
    pub hole_crossings: u64,
    pub aborted: Option<AbortReason>,
}

impl ParticleRecord {
    /// First capture moment, if the orbit was ever trapped.
    pub fn first_capture(&self) -> Option<f64> {
        self.capture_times.first().copied()
    }
}

/// Aggregate statistics over the completed trajectories of a run.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStats {
    pub total: usize,
    pub completed: usize,
    pub aborted: usize,
    /// Mean of `ln(E_end / E_0)` over completed trajectories.
    pub mean_log_gain: f64,
    /// Standard error of that mean.
    pub stderr_log_gain: f64,
    /// Mean log gain per cycle: the measured growth rate.
    pub growth_rate: f64,
    /// Fraction of completed trajectories trapped at least once.
    pub captured_fraction: f64,
    /// Mean `ln(E_k / E_0)` at each cycle boundary.
    pub mean_cycle_log_energy: Vec<f64>,
}

/// One finished Monte-Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleRun {
    pub config: EnsembleConfig,
    pub stats: EnsembleStats,
    pub records: Vec<ParticleRecord>,
}

impl EnsembleRun {
    /// `ln(E_end / E_0)` of every completed trajectory.
    pub fn log_gains(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.aborted.is_none())
            .map(|r| r.log_gain)
            .collect()
    }

    /// First capture moment per completed trajectory (`None` = never
    /// trapped).
    pub fn first_captures(&self) -> Vec<Option<f64>> {
        self.records
            .iter()
            .filter(|r| r.aborted.is_none())
            .map(|r| r.first_capture())
            .collect()
    }
}

/// Draws one microcanonical initial condition on the energy shell of the
/// given shape: position uniform over the area, direction uniform, fixed
/// speed.
pub fn sample_initial<R: Rng>(
    shape: &MushroomShape,
    energy: f64,
    time: f64,
    rng: &mut R,
) -> ParticleState {
    let speed = (2.0 * energy).sqrt();
    loop {
        let x = rng.gen_range(-shape.r..shape.r);
        let y = rng.gen_range(-shape.h..shape.r);
        if shape.contains(x, y) != Region::Outside {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let (sin, cos) = angle.sin_cos();
            return ParticleState::new(time, [x, y], [speed * cos, speed * sin]);
        }
    }
}

/// Sink that keeps only capture moments.
#[derive(Default)]
struct CaptureTimes(Vec<f64>);

impl EventSink for CaptureTimes {
    fn on_capture(&mut self, event: &CaptureEvent) {
        self.0.push(event.t_in);
    }
}

/// Runs the ensemble.  Fails with [`Error::AbortRateExceeded`] when more
/// than `abort_limit` of the trajectories hit a solver abort.
pub fn run(protocol: &dyn Protocol, config: &EnsembleConfig) -> Result<EnsembleRun> {
    config.validate()?;
    let period = protocol.period();
    let simulator = Simulator::new(protocol);
    let shape0 = protocol.shape_at(config.start_time);
    let e0 = config.initial_energy;

    let records: Vec<ParticleRecord> = (0..config.particles)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64);
            let start = sample_initial(&shape0, e0, config.start_time, &mut rng);

            let mut sink = CaptureTimes::default();
            let mut state = start;
            let mut cycle_log_energy = Vec::with_capacity(config.cycles as usize + 1);
            cycle_log_energy.push(0.0);
            let mut collisions = 0;
            let mut hole_crossings = 0;
            let mut aborted = None;
            // Cycle by cycle, so energies are sampled at every boundary.
            // No admissible protocol can hold an orbit trapped across a
            // boundary (releases complete within the capturing cycle), so
            // segmenting does not disturb the capture bookkeeping.
            for k in 1..=config.cycles {
                let t_end = config.start_time + period * k as f64;
                let out = simulator.run(state, t_end, &mut sink);
                state = out.state;
                collisions += out.collisions;
                hole_crossings += out.hole_crossings;
                match out.stop {
                    StopReason::TimeReached => {
                        cycle_log_energy.push((state.energy() / e0).ln());
                    }
                    StopReason::Aborted(reason) => {
                        aborted = Some(reason);
                        break;
                    }
                }
            }
            ParticleRecord {
                index,
                start,
                log_gain: *cycle_log_energy.last().expect("seeded with 0.0"),
                cycle_log_energy,
                capture_times: sink.0,
                collisions,
                hole_crossings,
                aborted,
            }
        })
        .collect();

    let total = records.len();
    let aborted = records.iter().filter(|r| r.aborted.is_some()).count();
    if aborted as f64 > config.abort_limit * total as f64 {
        return Err(Error::AbortRateExceeded { aborted, total, limit: config.abort_limit });
    }

    let stats = summarize(&records, config.cycles);
    Ok(EnsembleRun { config: config.clone(), stats, records })
}

fn summarize(records: &[ParticleRecord], cycles: u32) -> EnsembleStats {
    let completed: Vec<&ParticleRecord> =
        records.iter().filter(|r| r.aborted.is_none()).collect();
    let n = completed.len();
    let mean = |xs: &dyn Fn(&ParticleRecord) -> f64| -> f64 {
        if n == 0 {
            return f64::NAN;
        }
        completed.iter().map(|r| xs(r)).sum::<f64>() / n as f64
    };
    let mean_log_gain = mean(&|r| r.log_gain);
    let variance = if n > 1 {
        completed.iter().map(|r| (r.log_gain - mean_log_gain).powi(2)).sum::<f64>()
            / (n - 1) as f64
    } else {
        f64::NAN
    };
    let mean_cycle_log_energy = (0..=cycles as usize)
        .map(|k| mean(&|r| r.cycle_log_energy[k]))
        .collect();
    EnsembleStats {
        total: records.len(),
        completed: n,
        aborted: records.len() - n,
        mean_log_gain,
        stderr_log_gain: (variance / n.max(1) as f64).sqrt(),
        growth_rate: mean_log_gain / cycles as f64,
        captured_fraction: mean(&|r| if r.capture_times.is_empty() { 0.0 } else { 1.0 }),
        mean_cycle_log_energy,
    }
}

/// Fixed-bin histogram with an exact count per bin and a density
/// normalization (area one over the covered range).
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    /// `len() == counts.len() + 1`; uniform spacing.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `counts / (total * bin width)`.
    pub densities: Vec<f64>,
}

impl Histogram {
    /// Bins the samples over their own range (expanded to unit width when
    /// all samples coincide).  The last bin includes its right edge.
    pub fn from_samples(samples: &[f64], bins: usize) -> Result<Histogram> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("cannot bin an empty sample set".into()));
        }
        let (mut lo, mut hi) = samples
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        let edges = (0..=bins)
            .map(|k| lo + (hi - lo) * k as f64 / bins as f64)
            .collect();
        Histogram::with_edges(samples, edges)
    }

    /// Bins the samples with the given edges; samples outside are dropped.
    pub fn with_edges(samples: &[f64], edges: Vec<f64>) -> Result<Histogram> {
        if edges.len() < 2 || edges.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidConfig(
                "histogram needs at least two strictly increasing edges".into(),
            ));
        }
        let bins = edges.len() - 1;
        let mut counts = vec![0u64; bins];
        for &x in samples {
            if x < edges[0] || x > edges[bins] {
                continue;
            }
            let k = edges.partition_point(|&e| e <= x).saturating_sub(1).min(bins - 1);
            counts[k] += 1;
        }
        let total: u64 = counts.iter().sum();
        let densities = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, p)| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / (total as f64 * (p[1] - p[0]))
                }
            })
            .collect();
        Ok(Histogram { edges, counts, densities })
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Result of a chi-square goodness-of-fit comparison.
#[derive(Debug, Clone, Serialize)]
pub struct GofReport {
    /// Pearson statistic over the pooled categories.
    pub statistic: f64,
    pub dof: usize,
    /// Critical value at the requested significance.
    pub threshold: f64,
    pub pass: bool,
    /// Categories remaining after pooling sparse ones.
    pub categories: usize,
}

/// Pearson chi-square test of observed counts against expected counts.
/// Adjacent categories are pooled until every expected count reaches 5, the
/// usual validity rule.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], significance: f64) -> Result<GofReport> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::InvalidConfig(
            "observed and expected category counts must match and be non-empty".into(),
        ));
    }
    if !(0.0..1.0).contains(&significance) || significance == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }
    // Pool left to right; a sparse tail folds into the last kept category.
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0f64, 0.0f64);
    for (&o, &e) in observed.iter().zip(expected) {
        acc.0 += o as f64;
        acc.1 += e;
        if acc.1 >= MIN_EXPECTED_PER_CATEGORY {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            pooled.push(acc);
        }
    }
    if pooled.len() < 2 {
        return Err(Error::InvalidConfig(
            "fewer than two categories with adequate expected counts".into(),
        ));
    }
    let statistic: f64 =
        pooled.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len() - 1;
    let chi = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidConfig(format!("chi-square setup failed: {e}")))?;
    let threshold = chi.inverse_cdf(1.0 - significance);
    Ok(GofReport { statistic, dof, threshold, pass: statistic <= threshold, categories: pooled.len() })
}

/// Chi-square comparison of measured capture moments against the predicted
/// capture-time distribution, with never-captured trajectories as their own
/// category.
///
/// `first_captures` must come from a run over a single cycle starting at
/// protocol time zero, so the moments are directly comparable with the
/// profile's window.
pub fn capture_time_gof(
    first_captures: &[Option<f64>],
    profile: &FluxProfile,
    bins: usize,
    significance: f64,
) -> Result<GofReport> {
    if bins == 0 {
        return Err(Error::InvalidConfig("capture-time comparison needs at least one bin".into()));
    }
    let n = first_captures.len();
    let window = profile.window();
    let edges: Vec<f64> = (0..=bins)
        .map(|k| window.start + (window.end - window.start) * k as f64 / bins as f64)
        .collect();

    let mut observed = vec![0u64; bins + 1];
    for &fc in first_captures {
        match fc {
            Some(t) => {
                let t = t.clamp(window.start, window.end);
                let k = edges.partition_point(|&e| e <= t).saturating_sub(1).min(bins - 1);
                observed[k] += 1;
            }
            None => observed[bins] += 1,
        }
    }

    let mut expected: Vec<f64> =
        profile.capture_mass(&edges).iter().map(|&m| m * n as f64).collect();
    expected.push(profile.p_nc() * n as f64);

    chi_square_gof(&observed, &expected, significance)
}
