use emberlink::fire::{FireGrid, SolverParams};
use emberlink::geometry::{AxisBox, BoxKind};
use emberlink::radiation::{
    advance_and_collect, emit, emit_from, EnergyLedger, GroundGrid, HotVoxel, RadiationParams,
    RadiationTransport, Surroundings,
};
use emberlink::scenario::{reactive_line, SensorGeometry};
use glam::{DVec2, DVec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMA: f64 = 5.670374419e-8;

fn instant(particles: usize) -> RadiationParams {
    RadiationParams {
        particles_per_emitter_per_step: particles,
        instantaneous: true,
        max_range: 100.0,
        ..RadiationParams::default()
    }
}

/// Joules reaching a sphere of radius 0.2 m placed `r` m along +x from a
/// small emitter, over `steps` steps.
fn sphere_energy(r: f64, scene: &[AxisBox], steps: u64) -> (f64, EnergyLedger) {
    let params = instant(100_000);
    let c = DVec3::splat(10.0);
    let hot = [HotVoxel {
        id: 0,
        center: c.to_array(),
        temperature: 1000.0,
    }];
    let sensor = [SensorGeometry::Sphere {
        center: (c + DVec3::X * r).to_array(),
        radius: 0.2,
    }];
    let world = Surroundings {
        scene,
        domain_lo: DVec3::ZERO,
        domain_hi: DVec3::splat(20.0),
    };
    let mut ground = GroundGrid::new(DVec2::ZERO, 1.0, 20, 20);
    let mut ledger = EnergyLedger::default();
    let mut got = [0.0];
    for step in 0..steps {
        let mut p = emit_from(&hot, 0.05, &params, 0.05, 11, step);
        ledger.emitted += p.iter().map(|p| p.energy).sum::<f64>();
        advance_and_collect(
            &mut p,
            &world,
            &sensor,
            &params,
            0.05,
            &mut got,
            &mut ground,
            &mut ledger,
        );
    }
    (got[0], ledger)
}

/// Share of a point emitter's six Lambertian faces landing on a sphere
/// seen face-on under half-angle `a`: the facing side contributes
/// `sin^2 a`, each of the four grazing sides `(a - sin a cos a) / pi`.
fn cap_fraction(a: f64) -> f64 {
    (a.sin().powi(2) + 4.0 / std::f64::consts::PI * (a - a.sin() * a.cos())) / 6.0
}

#[test]
fn inverse_square_falloff() {
    let (near, ledger) = sphere_energy(1.0, &[], 10);
    let (far, _) = sphere_energy(2.0, &[], 10);
    let ratio = near / far;
    assert!((ratio - 4.0).abs() / 4.0 < 0.15, "ratio {ratio}");
    let (a1, a2) = ((0.2f64).asin(), (0.1f64).asin());
    let expected = ledger.emitted * cap_fraction(a1);
    assert!(
        (near - expected).abs() / expected < 0.05,
        "{near} vs {expected}"
    );
    let closed = cap_fraction(a1) / cap_fraction(a2);
    assert!(
        (ratio - closed).abs() / closed < 0.06,
        "{ratio} vs {closed}"
    );
}

#[test]
fn wall_shadows_the_sensor() {
    let (open, _) = sphere_energy(2.0, &[], 4);
    let wall = AxisBox::new(
        DVec3::new(10.8, 8.0, 8.0),
        DVec3::new(11.0, 12.0, 12.0),
        BoxKind::Wall,
    );
    let (shadowed, ledger) = sphere_energy(2.0, &[wall], 4);
    assert!(open > 0.0);
    assert!(shadowed < 0.01 * open, "{shadowed} of {open}");
    assert!(ledger.solids > 0.0);
}

fn hot_grid(seed: u64) -> FireGrid {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut g = FireGrid::ambient([8, 8, 6], 0.25, &SolverParams::default());
    for t in g.temperature.iter_mut() {
        if r.random::<f64>() < 0.3 {
            *t = r.random_range(300.0..1500.0);
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn emitted_energy_is_stefan_boltzmann(seed in any::<u64>(), dt in 0.001f64..0.2) {
        let g = hot_grid(seed);
        let params = RadiationParams::default();
        let emitted: f64 = emit(&g, &params, dt, seed, 0).iter().map(|p| p.energy).sum();
        let expected: f64 = g
            .temperature
            .iter()
            .filter(|&&t| t > 500.0)
            .map(|t| 0.3 * SIGMA * t.powi(4) * 0.25 * 0.25 * dt)
            .sum();
        prop_assert!((emitted - expected).abs() <= 1e-9 * expected.max(1e-300));
    }

    #[test]
    fn ledger_balances_every_step(seed in any::<u64>(), instantaneous in any::<bool>()) {
        let mut sc = reactive_line();
        sc.domain_size = [2.0, 2.0, 1.5];
        sc.scene = vec![AxisBox::new(DVec3::new(1.5, 0.0, 0.0), DVec3::new(1.7, 2.0, 1.0), BoxKind::Wall)];
        sc.radiation.instantaneous = instantaneous;
        let g = hot_grid(seed);
        let sensors = [SensorGeometry::Sphere { center: [0.5, 0.5, 0.3], radius: 0.15 }];
        let mut rt = RadiationTransport::new(&sc, seed);
        for _ in 0..30 {
            rt.step(&g, &sensors, 0.01);
            // only summation rounding separates the two sides
            prop_assert!(rt.ledger.imbalance() < 1e-10, "{:e} {:?}", rt.ledger.imbalance(), rt.ledger);
        }
        prop_assert!(rt.ledger.emitted > 0.0);
    }
}
