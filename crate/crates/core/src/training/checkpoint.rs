//! Chunked binary checkpoints: magic `STNCKPT1`, then per tensor
//! `{u16 name_len, name, u8 rank, u32 dims.., f32 payload}` (little endian),
//! parameters first, then velocity buffers named `<param>.momentum`, then a
//! footer `{u16 9, "meta.iter", u64 iter}`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"STNCKPT1";
const ITER_KEY: &str = "meta.iter";
pub const MOMENTUM_SUFFIX: &str = ".momentum";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<(String, Tensor)>,
    pub momentum: Vec<(String, Tensor)>,
    pub iter: u64,
}

fn write_chunk(w: &mut impl Write, name: &str, t: &Tensor) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("name too long: {name}")))?;
    let rank = u8::try_from(t.rank()).map_err(|_| Error::Format(format!("rank too high: {name}")))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&[rank])?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension overflow: {name}")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint(mut w: impl Write, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(MAGIC)?;
    for (name, t) in &ckpt.params {
        if name == ITER_KEY || name.ends_with(MOMENTUM_SUFFIX) {
            return Err(Error::Format(format!("reserved parameter name `{name}`")));
        }
        write_chunk(&mut w, name, t)?;
    }
    for (name, t) in &ckpt.momentum {
        write_chunk(&mut w, &format!("{name}{MOMENTUM_SUFFIX}"), t)?;
    }
    w.write_all(&(ITER_KEY.len() as u16).to_le_bytes())?;
    w.write_all(ITER_KEY.as_bytes())?;
    w.write_all(&ckpt.iter.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_bytes<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format(format!("truncated checkpoint reading {what}")))?;
    Ok(b)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint> {
    if &read_bytes::<8>(&mut r, "magic")? != MAGIC {
        return Err(Error::Format("not an STNCKPT1 checkpoint".into()));
    }
    let mut ckpt = Checkpoint {
        params: Vec::new(),
        momentum: Vec::new(),
        iter: 0,
    };
    loop {
        let len = u16::from_le_bytes(read_bytes(&mut r, "name length")?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|_| Error::Format("truncated checkpoint name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("non-UTF-8 name".into()))?;
        if name == ITER_KEY {
            ckpt.iter = u64::from_le_bytes(read_bytes(&mut r, "iteration")?);
            let mut extra = [0u8; 1];
            if r.read(&mut extra)? != 0 {
                return Err(Error::Format("data after checkpoint footer".into()));
            }
            return Ok(ckpt);
        }
        let rank = read_bytes::<1>(&mut r, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_bytes(&mut r, "dimension")?) as usize);
        }
        let count: usize = shape.iter().product();
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format(format!("truncated payload of `{name}`")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::from_vec(&shape, data)
            .map_err(|e| Error::Format(format!("chunk `{name}`: {e}")))?;
        match name.strip_suffix(MOMENTUM_SUFFIX) {
            Some(base) => ckpt.momentum.push((base.to_string(), t)),
            None => ckpt.params.push((name, t)),
        }
    }
}

/// Write atomically through a temporary file in the same directory.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_checkpoint(BufWriter::new(fs::File::create(&tmp)?), ckpt)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let t = |shape: &[usize], f: f32| {
            let n = shape.iter().product::<usize>();
            Tensor::from_vec(shape, (0..n).map(|i| (i as f32 * f).sin()).collect()).unwrap()
        };
        Checkpoint {
            params: vec![("a.weight".into(), t(&[2, 3], 0.7)), ("b".into(), t(&[4], -1.3))],
            momentum: vec![("a.weight".into(), t(&[2, 3], 0.1))],
            iter: 123_456_789_012,
        }
    }

    #[test]
    fn round_trip_bit_exact() {
        let c = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c).unwrap();
        assert_eq!(&buf[..8], b"STNCKPT1");
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, c);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn truncation_detected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &sample()).unwrap();
        for cut in [4, 20, buf.len() - 1] {
            assert!(read_checkpoint(&buf[..cut]).is_err(), "cut at {cut}");
        }
    }
}
