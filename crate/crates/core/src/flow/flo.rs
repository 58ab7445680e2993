//! Middlebury `.flo` files: little-endian `f32` tag 202021.25 ("PIEH"),
//! `i32` width and height, then interleaved `(u, v)` as `f32`, row-major.

use std::io::{Read, Write};
use std::path::Path;

use super::FlowField;
use crate::{Error, Result};

pub const FLO_TAG: f32 = 202021.25;

pub fn write_flo<W: Write>(flow: &FlowField, mut out: W) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(12 + 8 * flow.u().len());
    buf.extend_from_slice(&FLO_TAG.to_le_bytes());
    buf.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    buf.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        buf.extend_from_slice(&(*u as f32).to_le_bytes());
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_flo<R: Read>(mut input: R) -> Result<FlowField> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<flo>", e))?;
    if bytes.len() < 12 {
        return Err(Error::Format("truncated .flo header".into()));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    if f32::from_le_bytes(word(0)) != FLO_TAG {
        return Err(Error::Format("missing PIEH tag".into()));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 {
        return Err(Error::Format(format!("bad .flo size {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    if bytes.len() != 12 + 8 * n {
        return Err(Error::Format(format!(
            "expected {} bytes of flow data, found {}",
            8 * n,
            bytes.len() - 12
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for k in 0..n {
        u.push(f32::from_le_bytes(word(12 + 8 * k)) as f64);
        v.push(f32::from_le_bytes(word(16 + 8 * k)) as f64);
    }
    FlowField::new(width, height, u, v)
}

impl FlowField {
    pub fn save_flo(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_flo(self, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load_flo(path: impl AsRef<Path>) -> Result<FlowField> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_flo(std::io::BufReader::new(file))
    }
}
