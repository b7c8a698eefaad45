use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, VoxelGrid};
use crate::reconstruction::Image;

use super::text::{arity, num, real, records};
use super::{load_with, with_path, write_bytes};

/// Binary images: this magic, then little-endian `nx: u32`, `ny: u32`,
/// `voxel_width`, `origin_x`, `origin_y` and `nx * ny` values as `f64`.
const MAGIC: &[u8; 8] = b"MSRTIMG1";
const HEADER_LEN: usize = 8 + 4 + 4 + 8 * 3;

fn check_len(grid: &VoxelGrid, image: &Image) -> Result<()> {
    if grid.len() == image.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected: grid.len(), actual: image.len() })
    }
}

pub fn format_image_text(grid: &VoxelGrid, image: &Image) -> Result<String> {
    check_len(grid, image)?;
    let mut out = String::from("# grid nx ny voxel_width origin_x origin_y; rows along x, lowest y first\n");
    let _ = writeln!(out, "grid {} {} {} {} {}", grid.nx, grid.ny, grid.voxel_width, grid.origin.x, grid.origin.y);
    for row in image.values.chunks(grid.nx) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_image_text(text: &str) -> Result<(VoxelGrid, Image)> {
    let mut rows = records(text);
    let (line, header) = rows.next().ok_or_else(|| Error::parse(0, "missing grid header"))?;
    arity(line, &header, 6, "grid nx ny voxel_width origin_x origin_y")?;
    if header[0] != "grid" {
        return Err(Error::parse(line, "expected the `grid` header"));
    }
    let nx: usize = num(line, header[1], "nx")?;
    let ny: usize = num(line, header[2], "ny")?;
    let grid = VoxelGrid::new(
        Point::new(real(line, header[4], "origin_x")?, real(line, header[5], "origin_y")?),
        real(line, header[3], "voxel_width")?,
        nx,
        ny,
    )
    .map_err(|e| Error::parse(line, e.to_string()))?;
    let mut values = Vec::new();
    let mut nrows = 0;
    for (line, fields) in rows {
        if nrows == ny {
            return Err(Error::parse(line, format!("more than {ny} rows")));
        }
        arity(line, &fields, nx, "one value per voxel column")?;
        for f in fields {
            values.push(num::<f64>(line, f, "voxel value")?);
        }
        nrows += 1;
    }
    if nrows != ny {
        return Err(Error::parse(0, format!("expected {ny} rows, found {nrows}")));
    }
    Ok((grid, Image { values }))
}

pub fn encode_image_binary(grid: &VoxelGrid, image: &Image) -> Result<Vec<u8>> {
    check_len(grid, image)?;
    let dim = |n: usize| u32::try_from(n).map_err(|_| Error::InvalidGrid(format!("dimension {n} exceeds u32")));
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * image.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim(grid.nx)?.to_le_bytes());
    out.extend_from_slice(&dim(grid.ny)?.to_le_bytes());
    for v in [grid.voxel_width, grid.origin.x, grid.origin.y].into_iter().chain(image.values.iter().copied()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_image_binary(bytes: &[u8]) -> Result<(VoxelGrid, Image)> {
    let bad = |m: String| Error::parse(0, m);
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("not a binary image (bad magic or short header)".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (nx, ny) = (u32_at(8), u32_at(12));
    let n = nx.checked_mul(ny).ok_or_else(|| bad("grid size overflows".into()))?;
    let expected = n.checked_mul(8).and_then(|b| b.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(bad(format!("{nx}x{ny} image needs {:?} bytes, found {}", expected, bytes.len())));
    }
    let grid = VoxelGrid::new(Point::new(f64_at(24), f64_at(32)), f64_at(16), nx, ny)?;
    let values = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((grid, Image { values }))
}

/// `x,y,value` per voxel center, for plotting tools.
pub fn format_image_csv(grid: &VoxelGrid, image: &Image) -> Result<String> {
    check_len(grid, image)?;
    let mut out = String::from("x,y,value\n");
    for (c, v) in grid.centers().zip(&image.values) {
        let _ = writeln!(out, "{},{},{}", c.x, c.y, v);
    }
    Ok(out)
}

pub fn load_image_text(path: impl AsRef<Path>) -> Result<(VoxelGrid, Image)> {
    load_with(path.as_ref(), parse_image_text)
}

pub fn save_image_text(path: impl AsRef<Path>, grid: &VoxelGrid, image: &Image) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, with_path(path, format_image_text(grid, image))?)
}

pub fn load_image_binary(path: impl AsRef<Path>) -> Result<(VoxelGrid, Image)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(super::io_error(path))?;
    with_path(path, decode_image_binary(&bytes))
}

pub fn save_image_binary(path: impl AsRef<Path>, grid: &VoxelGrid, image: &Image) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, with_path(path, encode_image_binary(grid, image))?)
}

pub fn save_image_csv(path: impl AsRef<Path>, grid: &VoxelGrid, image: &Image) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, with_path(path, format_image_csv(grid, image))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> (VoxelGrid, Image) {
        let grid = VoxelGrid::new(Point::new(-0.5, 1.25), 0.25, 3, 2).unwrap();
        (grid, Image { values: vec![0.0, 1.5, -2.0, 1e-300, 7.0, f64::MAX] })
    }

    #[test]
    fn text_layout() {
        let (grid, image) = sample();
        let text = format_image_text(&grid, &image).unwrap();
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines[0], "grid 3 2 0.25 -0.5 1.25");
        assert_eq!(lines[1].split(' ').count(), 3);
        assert_eq!(parse_image_text(&text).unwrap(), (grid, image));
    }

    #[test]
    fn text_errors() {
        assert!(parse_image_text("").is_err());
        assert!(parse_image_text("grid 2 1 0.5 0 0\n1 2\n3 4\n").is_err());
        assert!(parse_image_text("grid 2 2 0.5 0 0\n1 2\n").is_err());
        assert!(matches!(parse_image_text("grid 2 1 0.5 0 0\n1 2 3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_image_text("grid 2 1 -0.5 0 0\n1 2\n").is_err());
    }

    #[test]
    fn binary_layout() {
        let (grid, image) = sample();
        let bytes = encode_image_binary(&grid, &image).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 6 * 8);
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(decode_image_binary(&bytes).unwrap(), (grid, image));
        assert!(decode_image_binary(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_image_binary(b"MSRTIMG1").is_err());
        let mut huge = bytes[..HEADER_LEN].to_vec();
        huge[8..16].copy_from_slice(&[0xff; 8]);
        assert!(decode_image_binary(&huge).is_err());
    }

    #[test]
    fn csv_has_one_row_per_voxel() {
        let (grid, image) = sample();
        let csv = format_image_csv(&grid, &image).unwrap();
        assert_eq!(csv.lines().count(), 7);
        assert_eq!(csv.lines().nth(2).unwrap(), "-0.125,1.375,1.5");
    }

    #[test]
    fn length_mismatch_rejected() {
        let (grid, _) = sample();
        assert!(format_image_text(&grid, &Image { values: vec![0.0; 5] }).is_err());
        assert!(encode_image_binary(&grid, &Image { values: vec![0.0; 7] }).is_err());
    }

    proptest! {
        #[test]
        fn round_trips(nx in 1usize..8, ny in 1usize..8, p in 0.01f64..2.0, ox in -10f64..10.0, oy in -10f64..10.0,
                       seed in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 64)) {
            let grid = VoxelGrid::new(Point::new(ox, oy), p, nx, ny).unwrap();
            let image = Image { values: seed[..nx * ny].to_vec() };
            prop_assert_eq!(parse_image_text(&format_image_text(&grid, &image).unwrap()).unwrap(), (grid, image.clone()));
            prop_assert_eq!(decode_image_binary(&encode_image_binary(&grid, &image).unwrap()).unwrap(), (grid, image));
        }
    }
}
