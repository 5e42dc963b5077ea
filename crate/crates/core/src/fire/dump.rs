use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FireGrid;

/// Sidecar describing a raw field dump: fields are stored back to back as
/// little-endian f32, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub frame: u64,
    pub time: f64,
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub dtype: String,
    pub fields: Vec<String>,
}

/// Writes `frame_NNNNNN.bin` (temperature then soot) and the matching
/// `frame_NNNNNN.json` header into `dir`. Returns the binary path.
pub fn write_field_dump(dir: &Path, frame: u64, time: f64, grid: &FireGrid) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let stem = format!("frame_{frame:06}");
    let bin = dir.join(format!("{stem}.bin"));
    let mut out = io::BufWriter::new(fs::File::create(&bin)?);
    for field in [&grid.temperature, &grid.soot] {
        for &x in field.iter() {
            out.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    let header = DumpHeader {
        frame,
        time,
        dims: grid.dims,
        voxel_size: grid.h,
        dtype: "f32le".into(),
        fields: vec!["temperature".into(), "soot".into()],
    };
    let json = serde_json::to_string_pretty(&header).map_err(io::Error::other)?;
    fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(bin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fire::SolverParams;

    #[test]
    fn dump_has_expected_size_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let g = FireGrid::ambient([3, 2, 2], 0.25, &SolverParams::default());
        let bin = write_field_dump(dir.path(), 4, 0.2, &g).unwrap();
        assert_eq!(fs::metadata(&bin).unwrap().len(), 2 * 12 * 4);
        let header: DumpHeader = serde_json::from_str(
            &fs::read_to_string(dir.path().join("frame_000004.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(header.dims, [3, 2, 2]);
        assert_eq!(header.fields, ["temperature", "soot"]);
    }
}
