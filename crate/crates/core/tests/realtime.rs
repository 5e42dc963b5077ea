use std::sync::Mutex;
use std::time::Instant;

use emberlink::bridge::{Bus, Direction, Payload, Topic};
use emberlink::cosim::GoalSeek;
use emberlink::realtime::{
    measure_roundtrip, Realtime, RealtimeConfig, RealtimeError, Stall, Transport,
};
use emberlink::robot::RobotState;
use emberlink::scenario::{reactive_line, Scenario};

// timing tests share one CPU budget
static SERIAL: Mutex<()> = Mutex::new(());

fn small() -> Scenario {
    let mut sc = reactive_line();
    sc.domain_size = [4.0, 3.0, 2.0];
    sc.fires[0].center = [2.0, 1.5, 0.125];
    sc.fires[0].heat_release_rate = 20.0;
    sc.robot_start = [0.5, 0.5];
    sc.robot_goal = [3.5, 0.5];
    sc.robot.camera_width = 64;
    sc.robot.camera_height = 48;
    sc
}

#[test]
fn fire_stall_does_not_slow_the_robot_loop() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let sc = small();
    let cfg = RealtimeConfig {
        goal_tolerance: None,
        stall: Some(Stall {
            after: 1.5,
            length: 5.0,
        }),
        ..RealtimeConfig::new(8.0)
    };
    let rep = Realtime::start(&sc, &cfg, Box::new(GoalSeek { speed: 0.0 }))
        .unwrap()
        .join()
        .unwrap();
    let (s0, s1) = rep.fire.stall_window.expect("fire loop stalled");
    assert!(s1 - s0 >= 5.0);
    let nominal = 1.0 / sc.robot.rate_hz;
    let before = rep.mean_period(0.0, s0).unwrap();
    let during = rep.mean_period(s0, s1).unwrap();
    assert!(
        (during - before).abs() / before < 0.05,
        "{before} vs {during}"
    );
    assert!((during - nominal).abs() / nominal < 0.05, "{during}");
    // readings age past the budget shortly after the stall begins
    assert!(rep.stale_fraction(s0 + 0.5, s1) > 0.99);
    assert!(rep.stale_fraction(0.5, s0) < 0.1);
    assert!(rep.stale_fraction(s1 + 0.5, 8.0) < 0.1);
}

#[test]
fn roundtrip_measures_the_injected_delay() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let sc = small();
    let probe = |delay_ms: f64| {
        let cfg = RealtimeConfig {
            camera_loop: false,
            goal_tolerance: None,
            delay_ms,
            delay_direction: Direction::Both,
            ..RealtimeConfig::new(60.0)
        };
        let rt = Realtime::start(&sc, &cfg, Box::new(GoalSeek { speed: 0.0 })).unwrap();
        let r = measure_roundtrip(&rt, &sc, 10, 10.0).unwrap();
        rt.stop().unwrap();
        r
    };
    let base = probe(0.0);
    assert!(
        base.mean > 0.0 && base.mean < 3.0 * sc.solver.frame_dt,
        "{base:?}"
    );
    let slow = probe(500.0);
    assert!(
        (slow.mean - base.mean - 1.0).abs() < 0.05,
        "{base:?} {slow:?}"
    );
}

#[test]
fn zero_samples_is_an_error() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let sc = small();
    let cfg = RealtimeConfig {
        camera_loop: false,
        ..RealtimeConfig::new(5.0)
    };
    let rt = Realtime::start(&sc, &cfg, Box::new(GoalSeek { speed: 0.0 })).unwrap();
    assert!(matches!(
        measure_roundtrip(&rt, &sc, 0, 10.0),
        Err(RealtimeError::Invalid(_))
    ));
    rt.stop().unwrap();
}

#[test]
fn tcp_transport_carries_both_directions() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let sc = small();
    let cfg = RealtimeConfig {
        transport: Transport::Tcp,
        goal_tolerance: None,
        ..RealtimeConfig::new(2.0)
    };
    let rt = Realtime::start(&sc, &cfg, Box::new(GoalSeek { speed: 0.5 })).unwrap();
    // the two sides run separate clocks
    let rep = rt.join().unwrap();
    assert!(rep.clock_offset.abs() < 1.0);
    let count = |name: &str| {
        rep.message_counts
            .iter()
            .find(|c| c.0 == name)
            .map_or(0, |c| c.1)
    };
    assert!(count("robot:robot/odom") >= 200);
    assert!(count("fire:robot/odom") > 150);
    assert!(count("robot:sensors/thermal") > 20);
    // at most the last triplet is still in flight at shutdown
    let (sent, got) = (count("robot:camera/rgb"), count("fire:camera/rgb"));
    assert!(got <= sent && got + 1 >= sent, "{sent} {got}");
    assert!(rep.robot.composites > 0);
    assert!(rep.stale_fraction(0.5, 2.0) < 0.1);
    assert!(rep.fire.frames > 20);
}

#[test]
fn burst_publishing_keeps_one_value_per_topic() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let bus = Bus::default();
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for k in 0..10_000u64 {
        let s = Instant::now();
        bus.publish(
            Topic::RobotOdom,
            Payload::Odom(RobotState::at(glam::DVec2::new(k as f64, 0.0), 0.0)),
            k as f64 * 1e-4,
        )
        .unwrap();
        worst = worst.max(s.elapsed().as_secs_f64());
    }
    assert!(t0.elapsed().as_secs_f64() < 1.0);
    assert!(worst < 0.01, "{worst}");
    let l = bus.latest(Topic::RobotOdom, 1.0).unwrap();
    assert_eq!(l.envelope.seq, 10_000);
    // only the newest envelope is referenced: the cell and this snapshot
    assert_eq!(std::sync::Arc::strong_count(&l.envelope), 2);
}
