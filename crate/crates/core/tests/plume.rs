use emberlink::fire::FireSim;
use emberlink::scenario::{reactive_line, Scenario};

fn plume_scenario(hrr: f64) -> Scenario {
    let mut sc = reactive_line();
    sc.domain_size = [3.0, 3.0, 3.0];
    sc.fires[0].center = [1.375, 1.375, 0.125];
    sc.fires[0].radius = 0.25;
    sc.fires[0].heat_release_rate = hrr;
    sc.robot_start = [0.3, 0.3];
    sc.robot_goal = [2.7, 2.7];
    sc
}

/// Column-summed temperature rise per (i, j), averaged over the last
/// `average` seconds of a `settle + average` run.
fn column_heat(sc: &Scenario, settle: f64, average: f64) -> (Vec<f64>, [usize; 3]) {
    let mut sim = FireSim::new(sc, 3);
    sim.advance_for(settle).unwrap();
    let [nx, ny, nz] = sim.grid.dims;
    let mut acc = vec![0.0; nx * ny];
    let frames = (average / sc.solver.frame_dt).round() as usize;
    for _ in 0..frames {
        sim.advance(sc.solver.frame_dt).unwrap();
        let g = &sim.grid;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    acc[j * nx + i] += g.temperature[g.idx(i, j, k)] - g.ambient_temperature;
                }
            }
        }
    }
    acc.iter_mut().for_each(|a| *a /= frames as f64);
    (acc, sim.grid.dims)
}

#[test]
fn hottest_column_stands_over_the_source() {
    let sc = plume_scenario(40.0);
    let (heat, [nx, _, _]) = column_heat(&sc, 8.0, 4.0);
    let best = (0..heat.len())
        .max_by(|&a, &b| heat[a].total_cmp(&heat[b]))
        .unwrap();
    assert_eq!((best % nx, best / nx), (5, 5), "{heat:?}");
}

#[test]
fn doubling_heat_release_keeps_the_centerline_as_hot() {
    let center = |hrr: f64| {
        let (heat, [nx, _, _]) = column_heat(&plume_scenario(hrr), 8.0, 4.0);
        heat[5 * nx + 5]
    };
    let (single, double) = (center(30.0), center(60.0));
    assert!(double >= single, "{single} -> {double}");
}
