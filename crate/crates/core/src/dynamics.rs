//! Event-driven particle dynamics between the moving walls.
//!
//! A point particle flies ballistically between collisions; each collision
//! with a wall moving at normal speed `u` reflects the velocity elastically
//! in the wall frame,
//!
//! ```text
//! v' = v - 2 (v . n - u) n,
//! ```
//!
//! so walls moving against the particle heat it and receding walls cool it.
//! Wall motion is slow compared to the particle in every configuration of
//! interest, but nothing here assumes it: collision times are found exactly
//! (to a residual tolerance) for arbitrary admissible protocols.
//!
//! Collision times are located by Lipschitz-guarded marching: each wall
//! contributes a signed residual that is negative strictly inside the
//! domain, and a bound on the residual's time derivative gives a step that
//! provably cannot jump across a sign change, with a small floor step so
//! the march cannot creep near contact.  Once a sign change is bracketed, a
//! safeguarded Newton iteration polishes the root.  Crossings of the `y=0`
//! line (hole passages and cap-floor bounces) are linear and solved in
//! closed form.
//!
//! The engine also keeps score of the integrable component: every stay in
//! the cap is tracked, and a stay during which the hole ratio drops below
//! the orbit's entry pericenter parameter is classified as a capture — the
//! orbit was dynamically unable to leave until the hole reopened.  This is
//! bookkeeping only; it never feeds back into the motion.

use serde::Serialize;

use crate::geometry::{MushroomShape, Region};
use crate::protocol::Protocol;
use crate::theory::{bisect, capture_windows};

/// A reflection with relative approach speed below `GRAZE_TOL * speed` is
/// numerically meaningless and aborts the trajectory.
pub const GRAZE_TOL: f64 = 1e-9;
/// An impact closer than `CORNER_TOL * r` to a wall junction aborts: the
/// normal is not defined there.
pub const CORNER_TOL: f64 = 1e-9;
/// A particle found outside any wall by more than `PENETRATION_TOL * r`
/// aborts; this is the solver's self-check.
pub const PENETRATION_TOL: f64 = 1e-9;

/// Collision times are polished until the wall residual is below
/// `RESIDUAL_TOL * r`.
const RESIDUAL_TOL: f64 = 1e-12;
/// Floor step: a fraction of the cap-transit time...
const SUBSTEP_RADIUS_FRACTION: f64 = 0.05;
/// ...capped by a fraction of the protocol period (about 1/628 of a cycle,
/// i.e. a hundredth of the natural phase unit) when the walls move.
const SUBSTEP_PERIOD_FRACTION: f64 = 1.0 / 628.32;
const NEWTON_MAX_ITERS: usize = 80;
/// Grid sizes for the capture-time scan inside one classified stay.
const SOJOURN_SCAN_PER_PERIOD: f64 = 4096.0;
const SOJOURN_SCAN_MIN: usize = 64;
const SOJOURN_SCAN_MAX: usize = 8192;
/// The hole ratio must dip this far below the entry pericenter parameter
/// before a stay counts as a capture, so boundary noise never flips one.
const CAPTURE_MARGIN: f64 = 1e-9;

/// Instantaneous state of one particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParticleState {
    pub time: f64,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    /// Which side of the hole line the particle is on.  Tracked explicitly
    /// because the point `y = 0` itself belongs to both closures.
    pub region: Region,
}

impl ParticleState {
    /// State at `time` with the region inferred from the position.
    pub fn new(time: f64, position: [f64; 2], velocity: [f64; 2]) -> Self {
        let region = if position[1] >= 0.0 { Region::Cap } else { Region::Stem };
        ParticleState { time, position, velocity, region }
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    /// Kinetic energy (unit mass), `|v|^2 / 2`.
    pub fn energy(&self) -> f64 {
        0.5 * (self.velocity[0] * self.velocity[0] + self.velocity[1] * self.velocity[1])
    }
}

/// The walls a particle can collide with.  The hole segment of `y = 0` is
/// not a wall; crossing it is a [`HoleCrossing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WallId {
    /// The semicircular cap boundary `|p| = r`, `y >= 0`.
    Arc,
    /// The flat cap floor `y = 0`, `w <= |x| <= r`.
    CapBottom,
    /// The tilted stem wall `x = w + y tan(theta)`.
    StemRight,
    /// The tilted stem wall `x = -(w + y tan(theta))`.
    StemLeft,
    /// The stem floor `y = -h`.
    StemBottom,
}

/// One reflection.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub wall: WallId,
    pub position: [f64; 2],
    pub velocity_before: [f64; 2],
    pub velocity_after: [f64; 2],
}

/// One passage through the hole segment of `y = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HoleCrossing {
    pub time: f64,
    /// Crossing abscissa, `|x| < w(time)`.
    pub x: f64,
    /// Region being entered.
    pub into: Region,
}

/// A stay in the cap during which the hole ratio dropped below the orbit's
/// entry pericenter parameter: the orbit was dynamically trapped in the
/// integrable component from `t_in` until `t_out`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CaptureEvent {
    /// When the orbit entered the cap (or the simulation started there).
    pub t_enter: f64,
    /// When the orbit left the cap, or the simulation end if it never did.
    pub t_exit: f64,
    /// Pericenter parameter `|x v_y - y v_x| / (|v| r)` measured at entry.
    pub sin_phi0: f64,
    /// First time the hole ratio fell below `sin_phi0` (capture moment).
    pub t_in: f64,
    /// Last time the hole ratio was below `sin_phi0` (release moment).
    pub t_out: f64,
    /// False when the stay was cut short by the simulation end.
    pub exited: bool,
}

/// Why a trajectory was abandoned.  All of these are measure-zero or
/// tolerance-scale events; ensembles tolerate a small abort fraction and
/// fail loudly above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AbortReason {
    /// Impact within `CORNER_TOL * r` of a wall junction.
    CornerHit,
    /// Reflection with relative approach speed below `GRAZE_TOL * speed`,
    /// including a wall outrunning the particle it just reflected.
    WallOvertake,
    /// The particle was found outside the domain: solver self-check failed.
    Penetration,
}

/// How a simulation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    /// Ran to the requested end time.
    TimeReached,
    /// Abandoned; the result holds the last trustworthy state.
    Aborted(AbortReason),
}

/// Summary of one trajectory.
#[derive(Debug, Clone, Copy)]
pub struct SimulationResult {
    pub state: ParticleState,
    pub collisions: u64,
    pub hole_crossings: u64,
    pub captures: u32,
    pub stop: StopReason,
}

/// Receives fine-grained events during a run.  All hooks default to no-ops
/// so lean callers pay nothing for what they ignore.
pub trait EventSink {
    fn on_collision(&mut self, _event: &CollisionEvent) {}
    fn on_hole_crossing(&mut self, _event: &HoleCrossing) {}
    fn on_capture(&mut self, _event: &CaptureEvent) {}
}

/// Sink that discards everything.
pub struct NullSink;

impl EventSink for NullSink {}

/// Sink that keeps everything, for tests and trajectory dumps.
#[derive(Debug, Default)]
pub struct RecordingSink {
    pub collisions: Vec<CollisionEvent>,
    pub crossings: Vec<HoleCrossing>,
    pub captures: Vec<CaptureEvent>,
}

impl EventSink for RecordingSink {
    fn on_collision(&mut self, event: &CollisionEvent) {
        self.collisions.push(*event);
    }
    fn on_hole_crossing(&mut self, event: &HoleCrossing) {
        self.crossings.push(*event);
    }
    fn on_capture(&mut self, event: &CaptureEvent) {
        self.captures.push(*event);
    }
}

/// Pericenter parameter of the current free-flight chord: the closest
/// approach of the chord's line to the cap center, in units of `r`.  A
/// chord with `pericenter_sine > nu` cannot reach the hole, which is what
/// makes the high-angular-momentum component of the cap integrable.
pub fn pericenter_sine(state: &ParticleState, r: f64) -> f64 {
    let speed = state.speed();
    if speed == 0.0 || r <= 0.0 {
        return 1.0;
    }
    let l = state.position[0] * state.velocity[1] - state.position[1] * state.velocity[0];
    (l.abs() / (speed * r)).min(1.0)
}

/// Reusable engine for one protocol.  Construction scans the protocol once
/// for the local minima of the hole ratio (used by the capture classifier);
/// after that, runs are independent and `&self`, so one simulator can be
/// shared across threads.
pub struct Simulator<'a> {
    protocol: &'a dyn Protocol,
    period: f64,
    max_rates: crate::geometry::ShapeRates,
    /// Times in `[0, T)` where the hole ratio has a local minimum.
    nu_minima: Vec<f64>,
}

enum Step {
    /// Reached the requested end time mid-flight.
    End,
    Collide { time: f64, wall: WallId },
    CrossHole { time: f64, x: f64 },
}

impl<'a> Simulator<'a> {
    pub fn new(protocol: &'a dyn Protocol) -> Self {
        let period = protocol.period();
        let mut nu_minima: Vec<f64> =
            capture_windows(protocol).iter().map(|w| w.end.rem_euclid(period)).collect();
        nu_minima.sort_by(|a, b| a.partial_cmp(b).expect("finite minima"));
        nu_minima.dedup_by(|a, b| (*a - *b).abs() < period * 1e-12);
        Simulator { protocol, period, max_rates: protocol.max_rates(), nu_minima }
    }

    /// Runs one particle until `t_end` (or an abort), reporting events to
    /// the sink.
    pub fn run<S: EventSink>(
        &self,
        start: ParticleState,
        t_end: f64,
        sink: &mut S,
    ) -> SimulationResult {
        let mut state = start;
        let mut collisions = 0u64;
        let mut hole_crossings = 0u64;
        let mut captures = 0u32;
        if state.region == Region::Outside {
            return SimulationResult {
                state,
                collisions,
                hole_crossings,
                captures: 0,
                stop: StopReason::Aborted(AbortReason::Penetration),
            };
        }
        // Open cap stay: (entry time, entry pericenter parameter).
        let mut sojourn: Option<(f64, f64)> = match state.region {
            Region::Cap => {
                let r = self.protocol.shape_at(state.time).r;
                Some((state.time, pericenter_sine(&state, r)))
            }
            _ => None,
        };
        // Wall of the most recent reflection, still in contact.
        let mut last_wall: Option<WallId> = None;

        let stop = loop {
            if state.time >= t_end {
                break StopReason::TimeReached;
            }
            match self.next_event(&state, t_end, last_wall) {
                Ok(Step::End) => {
                    let dt = t_end - state.time;
                    state.position[0] += state.velocity[0] * dt;
                    state.position[1] += state.velocity[1] * dt;
                    state.time = t_end;
                    break StopReason::TimeReached;
                }
                Ok(Step::Collide { time, wall }) => {
                    match self.reflect(&mut state, time, wall) {
                        Ok(event) => {
                            collisions += 1;
                            last_wall = Some(wall);
                            sink.on_collision(&event);
                        }
                        Err(reason) => break StopReason::Aborted(reason),
                    }
                }
                Ok(Step::CrossHole { time, x }) => {
                    state.position = [x, 0.0];
                    state.time = time;
                    state.region = match state.region {
                        Region::Cap => Region::Stem,
                        Region::Stem => Region::Cap,
                        Region::Outside => unreachable!("rejected before the event loop"),
                    };
                    hole_crossings += 1;
                    last_wall = None;
                    sink.on_hole_crossing(&HoleCrossing { time, x, into: state.region });
                    if state.region == Region::Cap {
                        let r = self.protocol.shape_at(time).r;
                        sojourn = Some((time, pericenter_sine(&state, r)));
                    } else if let Some((t_enter, s0)) = sojourn.take() {
                        if let Some(ev) = self.classify_sojourn(t_enter, time, s0, true) {
                            captures += 1;
                            sink.on_capture(&ev);
                        }
                    }
                }
                Err(reason) => break StopReason::Aborted(reason),
            }
        };

        // A stay still open at the end is classified too; it just never
        // exited.
        if let Some((t_enter, s0)) = sojourn.take() {
            if let Some(ev) = self.classify_sojourn(t_enter, state.time, s0, false) {
                captures += 1;
                sink.on_capture(&ev);
            }
        }

        SimulationResult { state, collisions, hole_crossings, captures, stop }
    }

    /// Locates the next event after `state` along the current free flight.
    fn next_event(
        &self,
        state: &ParticleState,
        t_end: f64,
        last_wall: Option<WallId>,
    ) -> Result<Step, AbortReason> {
        let t0 = state.time;
        let [vx, vy] = state.velocity;
        let speed = state.speed();

        // The y = 0 crossing is linear and exact; it bounds the march.
        let t_y = match state.region {
            Region::Cap if vy < 0.0 => Some(t0 - state.position[1] / vy),
            Region::Stem if vy > 0.0 => Some(t0 - state.position[1] / vy),
            _ => None,
        };
        let horizon = t_y.unwrap_or(f64::INFINITY).min(t_end);

        // Outside never reaches here; run() rejects it up front.
        let walls: &[WallId] = match state.region {
            Region::Cap => &[WallId::Arc],
            _ => &[WallId::StemRight, WallId::StemLeft, WallId::StemBottom],
        };
        // Lipschitz bounds on each residual's time derivative.
        let tan_theta = self.protocol.shape_at(t0).tan_theta;
        let lipschitz: Vec<f64> = walls
            .iter()
            .map(|w| match w {
                WallId::Arc => speed + self.max_rates.dr,
                WallId::StemRight | WallId::StemLeft => {
                    vx.abs() + vy.abs() * tan_theta + self.max_rates.dw
                }
                WallId::StemBottom => vy.abs() + self.max_rates.dh,
                WallId::CapBottom => unreachable!("cap floor is handled by the linear solve"),
            })
            .collect();

        let shape0 = self.protocol.shape_at(t0);
        let moving = self.max_rates.dr > 0.0 || self.max_rates.dw > 0.0 || self.max_rates.dh > 0.0;
        let mut floor = if speed > 0.0 {
            SUBSTEP_RADIUS_FRACTION * shape0.r / speed
        } else {
            f64::INFINITY
        };
        if moving {
            floor = floor.min(self.period * SUBSTEP_PERIOD_FRACTION);
        }
        let pen_tol = PENETRATION_TOL * shape0.r;

        let residuals = |t: f64| -> Vec<f64> {
            let shape = self.protocol.shape_at(t);
            let x = state.position[0] + vx * (t - t0);
            let y = state.position[1] + vy * (t - t0);
            walls.iter().map(|w| wall_residual(*w, x, y, &shape)).collect()
        };

        let mut t = t0;
        let mut f = residuals(t);
        if f.iter().any(|&fi| fi > pen_tol) {
            return Err(AbortReason::Penetration);
        }

        loop {
            if t >= horizon {
                return self.horizon_event(state, t_y, horizon, t_end);
            }
            let safe = f
                .iter()
                .zip(&lipschitz)
                .map(|(&fi, &li)| if li > 0.0 { (-fi).max(0.0) / li } else { f64::INFINITY })
                .fold(f64::INFINITY, f64::min);
            let step = safe.max(floor);
            let t_next = (t + step).min(horizon).min(self.protocol.next_breakpoint_after(t));
            let f_next = residuals(t_next);

            if f_next.iter().all(|&fi| fi < 0.0) {
                if t_next >= horizon {
                    return self.horizon_event(state, t_y, horizon, t_end);
                }
                t = t_next;
                f = f_next;
                continue;
            }

            // Bracket and polish the earliest crossing.
            let mut best: Option<(f64, WallId)> = None;
            for (k, wall) in walls.iter().enumerate() {
                if f_next[k] < 0.0 {
                    continue;
                }
                let mut a = t;
                if f[k] >= 0.0 {
                    // Still in contact with the wall we just left: find the
                    // first separated instant by geometric probing, so a
                    // grazing chord shorter than the floor step is still
                    // resolved.  No separation at all means the wall has
                    // genuinely overtaken the particle.
                    debug_assert_eq!(Some(*wall), last_wall);
                    let mut separated = None;
                    for e in (1..=50).rev() {
                        let probe = t + (t_next - t) * (0.5f64).powi(e);
                        if residuals(probe)[k] < 0.0 {
                            separated = Some(probe);
                            break;
                        }
                    }
                    match separated {
                        Some(p) => a = p,
                        None => return Err(AbortReason::WallOvertake),
                    }
                }
                let root = self.polish_root(state, *wall, a, t_next, shape0.r);
                if best.map_or(true, |(bt, _)| root < bt) {
                    best = Some((root, *wall));
                }
            }
            let (time, wall) = best.expect("at least one wall crossed");
            if time >= horizon {
                return self.horizon_event(state, t_y, horizon, t_end);
            }
            self.check_corner(state, time, wall)?;
            return Ok(Step::Collide { time, wall });
        }
    }

    /// Resolves what happens at the march horizon: the simulation end, or
    /// the exactly-solved `y = 0` crossing (hole passage, cap-floor bounce,
    /// or a corner hit).
    fn horizon_event(
        &self,
        state: &ParticleState,
        t_y: Option<f64>,
        horizon: f64,
        t_end: f64,
    ) -> Result<Step, AbortReason> {
        let Some(t_y) = t_y else { return Ok(Step::End) };
        if t_y >= t_end || horizon >= t_end {
            return Ok(Step::End);
        }
        let shape = self.protocol.shape_at(t_y);
        let x = state.position[0] + state.velocity[0] * (t_y - state.time);
        let corner = CORNER_TOL * shape.r;
        if (x.abs() - shape.w).abs() <= corner {
            return Err(AbortReason::CornerHit);
        }
        match state.region {
            Region::Cap => {
                if x.abs() < shape.w {
                    Ok(Step::CrossHole { time: t_y, x })
                } else if x.abs() >= shape.r - corner {
                    // Junction of the arc and the cap floor.
                    Err(AbortReason::CornerHit)
                } else {
                    Ok(Step::Collide { time: t_y, wall: WallId::CapBottom })
                }
            }
            _ => {
                if x.abs() < shape.w {
                    Ok(Step::CrossHole { time: t_y, x })
                } else {
                    // The side walls converge to |x| = w at y = 0; passing
                    // them unnoticed means the solver lost containment.
                    Err(AbortReason::Penetration)
                }
            }
        }
    }

    /// Safeguarded Newton iteration for the crossing of one wall residual
    /// inside `[a, b]`, where the residual is negative at `a` and
    /// non-negative at `b`.
    fn polish_root(
        &self,
        state: &ParticleState,
        wall: WallId,
        a: f64,
        b: f64,
        r_scale: f64,
    ) -> f64 {
        let t0 = state.time;
        let [vx, vy] = state.velocity;
        let eval = |t: f64| -> (f64, f64) {
            let (shape, rates) = self.protocol.sample(t);
            let x = state.position[0] + vx * (t - t0);
            let y = state.position[1] + vy * (t - t0);
            match wall {
                WallId::Arc => {
                    let d = x.hypot(y);
                    let slope = if d > 0.0 { (x * vx + y * vy) / d } else { speed_of(vx, vy) };
                    (d - shape.r, slope - rates.dr)
                }
                WallId::StemRight => {
                    (x - y * shape.tan_theta - shape.w, vx - vy * shape.tan_theta - rates.dw)
                }
                WallId::StemLeft => {
                    (-x - y * shape.tan_theta - shape.w, -vx - vy * shape.tan_theta - rates.dw)
                }
                WallId::StemBottom => (-y - shape.h, -vy - rates.dh),
                WallId::CapBottom => unreachable!("cap floor is handled by the linear solve"),
            }
        };
        let tol = RESIDUAL_TOL * r_scale;
        let (mut lo, mut hi) = (a, b);
        let mut x = 0.5 * (a + b);
        for _ in 0..NEWTON_MAX_ITERS {
            let (fx, dfx) = eval(x);
            if fx.abs() < tol {
                return x;
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = if dfx != 0.0 { x - fx / dfx } else { f64::NAN };
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
        }
        x
    }

    /// Aborts if the impact lands within tolerance of a wall junction.
    fn check_corner(
        &self,
        state: &ParticleState,
        time: f64,
        wall: WallId,
    ) -> Result<(), AbortReason> {
        let shape = self.protocol.shape_at(time);
        let corner = CORNER_TOL * shape.r;
        let x = state.position[0] + state.velocity[0] * (time - state.time);
        let y = state.position[1] + state.velocity[1] * (time - state.time);
        let hit = match wall {
            WallId::Arc => y < corner,
            WallId::CapBottom => (x.abs() - shape.w).abs() <= corner || x.abs() >= shape.r - corner,
            WallId::StemRight | WallId::StemLeft => y > -corner || y < -shape.h + corner,
            WallId::StemBottom => x.abs() >= shape.w - shape.h * shape.tan_theta - corner,
        };
        if hit {
            Err(AbortReason::CornerHit)
        } else {
            Ok(())
        }
    }

    /// Advances the state to the impact and applies the moving-wall
    /// reflection law.
    fn reflect(
        &self,
        state: &mut ParticleState,
        time: f64,
        wall: WallId,
    ) -> Result<CollisionEvent, AbortReason> {
        let (shape, rates) = self.protocol.sample(time);
        let dt = time - state.time;
        let mut x = state.position[0] + state.velocity[0] * dt;
        let mut y = state.position[1] + state.velocity[1] * dt;

        // Snap onto the wall to stop tolerance drift, then build the
        // outward normal and the wall's normal speed.
        let (n, u) = match wall {
            WallId::Arc => {
                let d = x.hypot(y);
                if d > 0.0 {
                    let scale = shape.r / d;
                    x *= scale;
                    y *= scale;
                }
                ([x / shape.r, y / shape.r], rates.dr)
            }
            WallId::CapBottom => {
                y = 0.0;
                ([0.0, -1.0], 0.0)
            }
            WallId::StemRight => {
                let cos = 1.0 / (1.0 + shape.tan_theta * shape.tan_theta).sqrt();
                x = shape.w + y * shape.tan_theta;
                ([cos, -cos * shape.tan_theta], rates.dw * cos)
            }
            WallId::StemLeft => {
                let cos = 1.0 / (1.0 + shape.tan_theta * shape.tan_theta).sqrt();
                x = -(shape.w + y * shape.tan_theta);
                ([-cos, -cos * shape.tan_theta], rates.dw * cos)
            }
            WallId::StemBottom => {
                y = -shape.h;
                ([0.0, -1.0], rates.dh)
            }
        };

        let [vx, vy] = state.velocity;
        let approach = vx * n[0] + vy * n[1] - u;
        if approach <= GRAZE_TOL * state.speed() {
            return Err(AbortReason::WallOvertake);
        }
        let velocity_after = [vx - 2.0 * approach * n[0], vy - 2.0 * approach * n[1]];

        let event = CollisionEvent {
            time,
            wall,
            position: [x, y],
            velocity_before: state.velocity,
            velocity_after,
        };
        state.time = time;
        state.position = [x, y];
        state.velocity = velocity_after;
        Ok(event)
    }

    /// Classifies one completed cap stay.  Cheap exact test first: the
    /// minimum of the hole ratio over the stay is attained at an endpoint
    /// or at one of the precomputed interior minima.  Only a confirmed
    /// capture pays for the crossing-time scan.
    fn classify_sojourn(
        &self,
        t_enter: f64,
        t_exit: f64,
        sin_phi0: f64,
        exited: bool,
    ) -> Option<CaptureEvent> {
        let nu = |t: f64| self.protocol.nu_at(t);
        let span = t_exit - t_enter;
        let mut interior: Vec<f64> = Vec::new();
        for &tm in &self.nu_minima {
            // Earliest periodic copy of tm inside (t_enter, t_exit).
            let k = ((t_enter - tm) / self.period).floor() + 1.0;
            let mut t = tm + k * self.period;
            while t < t_exit {
                if t > t_enter {
                    interior.push(t);
                }
                t += self.period;
            }
        }
        let mut min_nu = nu(t_enter).min(nu(t_exit));
        for &t in &interior {
            min_nu = min_nu.min(nu(t));
        }
        if min_nu >= sin_phi0 - CAPTURE_MARGIN {
            return None;
        }

        if span <= 0.0 {
            return Some(CaptureEvent {
                t_enter,
                t_exit,
                sin_phi0,
                t_in: t_enter,
                t_out: t_exit,
                exited,
            });
        }

        // Scan grid plus the interior minima, so no dip can fall between
        // nodes unseen.
        let cells = ((span / self.period * SOJOURN_SCAN_PER_PERIOD) as usize)
            .clamp(SOJOURN_SCAN_MIN, SOJOURN_SCAN_MAX);
        let mut ts: Vec<f64> =
            (0..=cells).map(|i| t_enter + span * i as f64 / cells as f64).collect();
        ts.extend(interior);
        ts.sort_by(|a, b| a.partial_cmp(b).expect("finite scan times"));
        let below: Vec<bool> = ts.iter().map(|&t| nu(t) <= sin_phi0).collect();

        let first = below.iter().position(|&b| b).expect("dip exists below the threshold");
        let t_in = if first == 0 {
            t_enter
        } else {
            bisect(|t| nu(t) <= sin_phi0, ts[first - 1], ts[first])
        };
        let last = below.iter().rposition(|&b| b).expect("dip exists below the threshold");
        let t_out = if last == ts.len() - 1 {
            t_exit
        } else {
            bisect(|t| nu(t) > sin_phi0, ts[last], ts[last + 1])
        };

        Some(CaptureEvent { t_enter, t_exit, sin_phi0, t_in, t_out, exited })
    }
}

/// Signed distance-like residual of one wall: negative strictly inside the
/// domain, zero on the wall.
fn wall_residual(wall: WallId, x: f64, y: f64, shape: &MushroomShape) -> f64 {
    match wall {
        WallId::Arc => x.hypot(y) - shape.r,
        WallId::StemRight => x - y * shape.tan_theta - shape.w,
        WallId::StemLeft => -x - y * shape.tan_theta - shape.w,
        WallId::StemBottom => -y - shape.h,
        WallId::CapBottom => y,
    }
}

fn speed_of(vx: f64, vy: f64) -> f64 {
    vx.hypot(vy)
}

/// Runs one particle under a protocol.  Convenience wrapper around
/// [`Simulator`] for one-shot use.
pub fn simulate<S: EventSink>(
    protocol: &dyn Protocol,
    start: ParticleState,
    t_end: f64,
    sink: &mut S,
) -> SimulationResult {
    Simulator::new(protocol).run(start, t_end, sink)
}
