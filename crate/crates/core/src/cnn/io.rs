//! Model files: `DTRJ`, a format version byte, the configuration, then every
//! parameter as a little-endian `f64` in declaration order.

use std::io::{Read, Write};
use std::path::Path;

use super::{CnnModel, ConvSpec, LrnSpec, NetworkConfig, PoolSpec};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"DTRJ";
pub const FORMAT_VERSION: u8 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated model file".into()))?;
        self.pos = end;
        Ok(slice.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn write_model<W: Write>(model: &CnnModel, mut out: W) -> std::io::Result<()> {
    let c = &model.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(FORMAT_VERSION);
    put_u32(&mut buf, c.input_channels);
    put_u32(&mut buf, c.input_size);
    for s in &c.conv {
        put_u32(&mut buf, s.filters);
        put_u32(&mut buf, s.kernel);
        put_u32(&mut buf, s.stride);
    }
    for p in &c.pool {
        put_u32(&mut buf, p.window);
        put_u32(&mut buf, p.stride);
    }
    put_u32(&mut buf, c.lrn.depth);
    put_f64(&mut buf, c.lrn.k);
    put_f64(&mut buf, c.lrn.alpha);
    put_f64(&mut buf, c.lrn.beta);
    for &f in &c.fc {
        put_u32(&mut buf, f);
    }
    put_u32(&mut buf, c.class_count);
    put_f64(&mut buf, c.learning_rate);
    put_u32(&mut buf, c.epochs);
    put_u32(&mut buf, c.batch_size);
    buf.extend_from_slice(&c.seed.to_le_bytes());
    for block in model.param_blocks() {
        for &v in block {
            put_f64(&mut buf, v);
        }
    }
    out.write_all(&buf)
}

pub fn read_model<R: Read>(mut input: R) -> Result<CnnModel> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<model>", e))?;
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing DTRJ header".into()));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model version {}", bytes[4])));
    }
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 5,
    };
    let input_channels = cur.u32()?;
    let input_size = cur.u32()?;
    let mut conv = [ConvSpec {
        filters: 0,
        kernel: 0,
        stride: 0,
    }; 4];
    for s in &mut conv {
        *s = ConvSpec {
            filters: cur.u32()?,
            kernel: cur.u32()?,
            stride: cur.u32()?,
        };
    }
    let mut pool = [PoolSpec {
        window: 0,
        stride: 0,
    }; 4];
    for p in &mut pool {
        *p = PoolSpec {
            window: cur.u32()?,
            stride: cur.u32()?,
        };
    }
    let lrn = LrnSpec {
        depth: cur.u32()?,
        k: cur.f64()?,
        alpha: cur.f64()?,
        beta: cur.f64()?,
    };
    let fc = [cur.u32()?, cur.u32()?, cur.u32()?];
    let config = NetworkConfig {
        input_channels,
        input_size,
        conv,
        pool,
        lrn,
        fc,
        class_count: cur.u32()?,
        learning_rate: cur.f64()?,
        epochs: cur.u32()?,
        batch_size: cur.u32()?,
        seed: cur.u64()?,
    };
    let mut model = CnnModel::new(config)?;
    for block in model.param_blocks_mut() {
        for v in block.iter_mut() {
            *v = cur.f64()?;
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    Ok(model)
}

impl CnnModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_model(self, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CnnModel> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_model(std::io::BufReader::new(file))
    }
}
