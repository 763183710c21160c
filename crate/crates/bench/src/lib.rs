//! Shared scenarios for the criterion benches: the standard driving cycles
//! and reproducible initial conditions, so every bench measures the same
//! workload from run to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mushroom_core::{
    sample_initial, Direction, FrozenProtocol, MushroomShape, ParticleState, Protocol,
    RectangleCycle, SinusoidalCycle,
};

/// Sinusoidal benchmark cycle: unit cap breathing by half its radius, stem
/// depth in antiphase, hole sweeping down to one fifth of the cap width.
pub fn sinusoidal_benchmark() -> SinusoidalCycle {
    SinusoidalCycle::new(1.0, 1.0, 0.5, -0.5, 0.8, 0.1111, 1.0).expect("valid cycle")
}

/// Rectangle benchmark cycle: fixed unit cap, hole sweeping between 0.3 and
/// full width, stem depth between 2 and 6, slightly tilted stem walls.
pub fn rectangle_benchmark(direction: Direction) -> RectangleCycle {
    let tan_theta = 2.3f64.to_radians().tan();
    RectangleCycle::new(1.0, 0.3, 1.0, 2.0, 6.0, tan_theta, direction, 8.0).expect("valid cycle")
}

/// A static mid-sized table for raw collision throughput.
pub fn frozen_benchmark() -> FrozenProtocol {
    let shape = MushroomShape::new(1.0, 0.45, 1.1, 0.08).expect("valid shape");
    FrozenProtocol::new(shape).expect("valid protocol")
}

/// Microcanonical initial condition drawn from a fixed stream.
pub fn seeded_start(protocol: &dyn Protocol, energy: f64, seed: u64) -> ParticleState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_initial(&protocol.shape_at(0.0), energy, 0.0, &mut rng)
}
