//! Rough timing / noise-floor probe used while sizing the test suites.
//! Run with: cargo run -p mushroom-core --example calibrate

use mushroom_core::geometry::{MushroomShape, ShapeRates};
use mushroom_core::protocol::Protocol;
use mushroom_core::{NullSink, ParticleState, Simulator};

struct BreathingCap {
    r0: f64,
    amp: f64,
    omega: f64,
    w: f64,
    h: f64,
}

impl Protocol for BreathingCap {
    fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega
    }
    fn shape_at(&self, t: f64) -> MushroomShape {
        let r = self.r0 + self.amp * (self.omega * t).sin();
        MushroomShape::new(r, self.w, self.h, 0.0).unwrap()
    }
    fn rates_at(&self, t: f64) -> ShapeRates {
        ShapeRates { dr: self.amp * self.omega * (self.omega * t).cos(), dw: 0.0, dh: 0.0 }
    }
    fn max_rates(&self) -> ShapeRates {
        ShapeRates { dr: self.amp * self.omega, dw: 0.0, dh: 0.0 }
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.period()]
    }
}

fn main() {
    let breather =
        BreathingCap { r0: 1.0, amp: 0.1, omega: std::f64::consts::TAU / 50.0, w: 0.3, h: 0.5 };
    let sim = Simulator::new(&breather);
    let t_total = breather.period() / 3.0;
    for speed in [1e3, 4e3] {
        // Start off the symmetry fold: position along the chord, not at
        // the pericenter.
        let mut state = ParticleState::new(0.0, [0.31, 0.8], [-speed, 0.0]);
        let l0 = (state.position[0] * state.velocity[1] - state.position[1] * state.velocity[0])
            .abs();
        let vr0 = state.speed() * breather.r0;
        println!("speed {speed:.0}: L0={l0:.6}");
        for k in 1..=6 {
            let t = t_total * k as f64 / 6.0;
            let out = sim.run(state, t, &mut NullSink);
            state = out.state;
            let r = breather.shape_at(t).r;
            let l = (state.position[0] * state.velocity[1]
                - state.position[1] * state.velocity[0])
                .abs();
            println!(
                "  t={t:7.3} r={r:.5} vr/vr0-1={:+.3e} L/L0-1={:+.3e} collisions={}",
                state.speed() * r / vr0 - 1.0,
                l / l0 - 1.0,
                out.collisions,
            );
        }
    }
}
