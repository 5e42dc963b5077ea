use emberlink::planner::{riemann_dose, DoseReport};
use emberlink::radiation::{ema, ThermalSensor};
use emberlink::scenario::SensorSpec;
use proptest::prelude::*;

fn sensor(alpha: f64) -> ThermalSensor {
    ThermalSensor::new(SensorSpec::corner_set(0.15, alpha).remove(0))
}

#[test]
fn constant_irradiance_dose() {
    let mut s = sensor(1.0);
    for _ in 0..1000 {
        s.raw_irradiance = 2.0;
        s.ema_update();
        s.accumulate_dose(0.01);
    }
    assert!((s.dose - 20.0).abs() < 0.1, "{}", s.dose);
}

#[test]
fn triangular_ramp_matches_its_area() {
    // 0 -> 4 kW/m^2 over 5 s and back, area 20 kJ/m^2
    let dt = 0.05;
    let samples: Vec<(f64, f64)> = (0..200)
        .map(|k| {
            let t = k as f64 * dt;
            (t, 4.0 - (4.0 / 5.0) * (t - 5.0).abs())
        })
        .collect();
    let d = DoseReport::from_samples(samples.clone(), 10.0);
    assert!((d.dose - 20.0).abs() / 20.0 < 0.01, "{}", d.dose);
    assert_eq!(d.peak_irradiance, 4.0);
    assert_eq!(riemann_dose(&samples, 10.0), d.dose);
}

#[test]
fn filter_reaches_99_percent_on_schedule() {
    for alpha in [0.05, 0.3, 0.7] {
        let mut s = sensor(alpha);
        let mut steps = 0;
        while s.filtered_irradiance < 0.99 {
            s.raw_irradiance = 1.0;
            s.ema_update();
            steps += 1;
        }
        let closed = (0.01f64.ln() / (1.0 - alpha).ln()).ceil() as usize;
        assert_eq!(steps, closed, "alpha {alpha}");
    }
}

proptest! {
    #[test]
    fn unit_alpha_is_identity(prev in -1e3f64..1e3, raw in -1e3f64..1e3) {
        prop_assert_eq!(ema(prev, raw, 1.0), raw);
    }

    #[test]
    fn filtered_reading_stays_between_inputs(prev in 0.0f64..50.0, raw in 0.0f64..50.0, alpha in 0.0f64..=1.0) {
        let f = ema(prev, raw, alpha);
        prop_assert!(f >= prev.min(raw) - 1e-12 && f <= prev.max(raw) + 1e-12);
    }
}
