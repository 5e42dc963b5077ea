use emberlink::fire::{FireGrid, SolverParams};
use emberlink::geometry::{ray_aabb, ray_aabb_exit, AxisBox, BoxKind};
use emberlink::render::{composite, raymarch, FireImage, RenderParams};
use emberlink::robot::{render_depth, render_rgb, CameraModel, RobotParams, RobotState};
use glam::{DVec2, DVec3};
use proptest::prelude::*;

fn camera(x: f64, y: f64, yaw: f64) -> CameraModel {
    let params = RobotParams {
        camera_width: 48,
        camera_height: 36,
        ..RobotParams::default()
    };
    CameraModel::mounted(&RobotState::at(DVec2::new(x, y), yaw), &params)
}

fn grid() -> FireGrid {
    FireGrid::ambient([16, 8, 8], 0.25, &SolverParams::default())
}

fn flame(g: &mut FireGrid) {
    for id in 0..g.len() {
        let [i, j, k] = g.coords(id);
        if (6..10).contains(&i) && (3..5).contains(&j) && k < 5 {
            g.temperature[id] = 1300.0;
            g.soot[id] = 2e-5;
        }
    }
}

#[test]
fn uniform_soot_follows_beer_lambert() {
    let mut g = grid();
    let rho = 3e-5;
    g.soot.iter_mut().for_each(|s| *s = rho);
    let cam = camera(-1.0, 1.0, 0.0);
    let params = RenderParams::default();
    let img = raymarch(&g, &cam, &render_depth(&[], &cam), &params, 0).unwrap();
    let (u, v) = (cam.width / 2, cam.height / 2);
    let d = cam.pixel_ray(u, v).normalize();
    let (lo, hi) = (DVec3::ZERO, g.extent());
    let length =
        ray_aabb_exit(cam.origin(), d, lo, hi) - ray_aabb(cam.origin(), d, lo, hi).unwrap();
    let expected = 1.0 - (-params.soot_extinction * rho * length).exp();
    let alpha = img.alpha[(v * cam.width + u) as usize] as f64;
    assert!(
        (alpha - expected).abs() / expected < 0.02,
        "{alpha} vs {expected}"
    );
}

#[test]
fn fire_behind_a_wall_changes_nothing() {
    let mut g = grid();
    flame(&mut g);
    let cam = camera(0.3, 1.0, 0.0);
    let wall = [AxisBox::new(
        DVec3::new(0.8, -5.0, 0.0),
        DVec3::new(0.9, 7.0, 5.0),
        BoxKind::Wall,
    )];
    let depth = render_depth(&wall, &cam);
    let rgb = render_rgb(&wall, &cam);
    let fire = raymarch(&g, &cam, &depth, &RenderParams::default(), 0).unwrap();
    assert!(fire.alpha.iter().all(|&a| a == 0.0));
    assert_eq!(composite(&rgb, &fire).unwrap(), rgb);
    // without the wall the same flame is visible
    let open = raymarch(
        &g,
        &cam,
        &render_depth(&[], &cam),
        &RenderParams::default(),
        0,
    )
    .unwrap();
    assert!(open.alpha.iter().any(|&a| a > 0.5));
}

#[test]
fn identical_inputs_give_identical_frames() {
    let mut g = grid();
    flame(&mut g);
    let cam = camera(0.5, 0.7, 0.3);
    let depth = render_depth(&[], &cam);
    let rgb = render_rgb(&[], &cam);
    let a = raymarch(&g, &cam, &depth, &RenderParams::default(), 5).unwrap();
    let b = raymarch(&g, &cam, &depth, &RenderParams::default(), 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(composite(&rgb, &a).unwrap(), composite(&rgb, &b).unwrap());
}

proptest! {
    #[test]
    fn transparent_layer_is_identity(w in 1u32..20, h in 1u32..20, seed in any::<u64>()) {
        let data: Vec<u8> = (0..w * h * 3).map(|k| (seed.wrapping_mul(k as u64 + 1) >> 7) as u8).collect();
        let rgb = emberlink::robot::RgbImage { width: w, height: h, data };
        let fire = FireImage::empty(w, h, 0);
        prop_assert_eq!(composite(&rgb, &fire).unwrap(), rgb);
    }
}
