use std::path::{Path, PathBuf};

use emberlink::cosim::{CameraFrames, CosimObserver, ThermalWorld};
use emberlink::fire::write_field_dump;
use emberlink::render::{write_depth_png, write_fire_png, write_rgb_png};
use emberlink::robot::RgbImage;

/// Writes camera triplets as PNGs and fire fields as raw dumps while a
/// run goes on. The first error is kept and later writes are skipped.
pub struct FrameDumper {
    pub dir: PathBuf,
    /// Dump the fire fields every n-th frame; 0 disables.
    pub field_every: u64,
    /// Far plane of the depth PNGs, m.
    pub depth_far: f32,
    pub written: usize,
    pub error: Option<anyhow::Error>,
}

impl FrameDumper {
    pub fn new(dir: &Path, field_every: u64) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(FrameDumper {
            dir: dir.to_path_buf(),
            field_every,
            depth_far: 10.0,
            written: 0,
            error: None,
        })
    }

    fn attempt(&mut self, f: impl FnOnce(&Path) -> anyhow::Result<usize>) {
        if self.error.is_some() {
            return;
        }
        match f(&self.dir) {
            Ok(n) => self.written += n,
            Err(e) => self.error = Some(e),
        }
    }

    pub fn finish(self) -> anyhow::Result<usize> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.written),
        }
    }
}

impl CosimObserver for FrameDumper {
    fn fire_frame(&mut self, _stamp: f64, world: &ThermalWorld) {
        if self.field_every == 0 || world.frames % self.field_every != 0 {
            return;
        }
        let Some(grid) = world.driver.grid() else {
            return;
        };
        let (frame, time) = (world.frames, world.time());
        self.attempt(|dir| {
            write_field_dump(&dir.join("fields"), frame, time, grid)?;
            Ok(1)
        });
    }

    fn camera_frames(&mut self, _stamp: f64, f: &CameraFrames) {
        let far = self.depth_far;
        self.attempt(|dir| {
            let name = |kind: &str| dir.join(format!("{kind}_{:06}.png", f.triplet));
            write_rgb_png(&name("rgb"), f.rgb)?;
            write_depth_png(&name("depth"), f.depth, far)?;
            write_fire_png(&name("fire"), f.fire)?;
            write_rgb_png(&name("composite"), f.composite)?;
            Ok(4)
        });
    }
}

/// Keeps the newest composite so a run can save its last camera view.
#[derive(Default)]
pub struct LastComposite(pub Option<RgbImage>);

impl CosimObserver for LastComposite {
    fn camera_frames(&mut self, _stamp: f64, f: &CameraFrames) {
        self.0 = Some(f.composite.clone());
    }
}
