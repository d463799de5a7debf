use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::grid::VoxelGrid;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const VOXL_MAGIC: &[u8; 5] = b"VOXL1";

/// Write a grid in the VOXL1 format: magic, D as u16 LE x3, then D^3 f32 LE
/// values with z fastest.
pub fn save_voxel(grid: &VoxelGrid, path: &Path) -> Result<()> {
    let d = grid.dim();
    let mut buf = Vec::with_capacity(5 + 6 + grid.values().len() * 4);
    buf.extend_from_slice(VOXL_MAGIC);
    for _ in 0..3 {
        buf.extend_from_slice(&(d as u16).to_le_bytes());
    }
    for &v in grid.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_atomic(path, &buf)
}

pub fn load_voxel(path: &Path) -> Result<VoxelGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 11 {
        return Err(Error::format(
            path,
            format!("header needs 11 bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..5] != VOXL_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic {:?}, expected {:?}", &bytes[..5], VOXL_MAGIC),
        ));
    }
    let d1 = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
    let d2 = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
    let d3 = u16::from_le_bytes([bytes[9], bytes[10]]) as usize;
    if d1 != d2 || d2 != d3 || d1 == 0 {
        return Err(Error::format(
            path,
            format!("non-cubic extents {}x{}x{}", d1, d2, d3),
        ));
    }
    let n = d1 * d2 * d3;
    let expected = 11 + n * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {} bytes, got {}", expected, bytes.len()),
        ));
    }
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let o = 11 + i * 4;
        let v = f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::format(
                path,
                format!("occupancy value {} at voxel {} outside [0,1]", v, i),
            ));
        }
        values.push(v);
    }
    VoxelGrid::new(d1, values)
}

/// Write an image tensor [3,S,S] in [0,1] as a binary PPM (P6, maxval 255).
pub fn save_ppm(image: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = match image.shape() {
        [3, h, w] => (*h, *w),
        s => {
            return Err(Error::ShapeMismatch {
                op: "save_ppm",
                detail: format!("expected [3,H,W], got {:?}", s),
            })
        }
    };
    let mut buf = format!("P6\n{} {}\n255\n", w, h).into_bytes();
    let data = image.data();
    let plane = h * w;
    for i in 0..plane {
        for c in 0..3 {
            buf.push((data[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    write_atomic(path, &buf)
}

pub fn load_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = &bytes[..];
    let mut header_fields = Vec::new();
    // P6 header: three whitespace-separated fields after the magic
    let mut field = Vec::new();
    let mut seen = 0;
    while seen < 4 {
        let mut b = [0u8; 1];
        cursor
            .read_exact(&mut b)
            .map_err(|_| Error::format(path, "truncated PPM header"))?;
        if b[0].is_ascii_whitespace() {
            if !field.is_empty() {
                header_fields.push(String::from_utf8_lossy(&field).into_owned());
                field.clear();
                seen += 1;
            }
        } else {
            field.push(b[0]);
        }
    }
    if header_fields[0] != "P6" {
        return Err(Error::format(path, format!("bad PPM magic {}", header_fields[0])));
    }
    let w: usize = header_fields[1]
        .parse()
        .map_err(|_| Error::format(path, "bad width"))?;
    let h: usize = header_fields[2]
        .parse()
        .map_err(|_| Error::format(path, "bad height"))?;
    if header_fields[3] != "255" {
        return Err(Error::format(path, "expected maxval 255"));
    }
    let expected = 3 * w * h;
    if cursor.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {} pixel bytes, got {}", expected, cursor.len()),
        ));
    }
    let plane = w * h;
    let mut data = vec![0.0; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            data[c * plane + i] = cursor[i * 3 + c] as f64 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Load a view image as the network input tensor.
pub fn load_image_tensor(path: &Path) -> Result<Tensor> {
    load_ppm(path)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}
