//! Binary embedding stream: magic `EMB1`, then per record a `u32` label
//! (`u32::MAX` when unknown), a `u32` dimension and that many little-endian
//! `f32` values.

use std::io::{Read, Write};

use super::Embedding;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";
const NO_LABEL: u32 = u32::MAX;

pub fn write_embeddings(mut w: impl Write, embeddings: &[Embedding]) -> Result<()> {
    w.write_all(MAGIC)?;
    for e in embeddings {
        if e.label == Some(NO_LABEL) {
            return Err(Error::Format(format!("label {NO_LABEL} is reserved")));
        }
        let dim = u32::try_from(e.dim()).map_err(|_| Error::Format("dimension overflow".into()))?;
        w.write_all(&e.label.unwrap_or(NO_LABEL).to_le_bytes())?;
        w.write_all(&dim.to_le_bytes())?;
        for v in &e.vector {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<Option<u32>> {
    let mut buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut buf[got..])?;
        if n == 0 {
            return if got == 0 {
                Ok(None)
            } else {
                Err(Error::Format("truncated embedding record".into()))
            };
        }
        got += n;
    }
    Ok(Some(u32::from_le_bytes(buf)))
}

pub fn read_embeddings(mut r: impl Read) -> Result<Vec<Embedding>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("missing EMB1 header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not an EMB1 stream".into()));
    }
    let mut out = Vec::new();
    while let Some(label) = read_u32(&mut r)? {
        let dim = read_u32(&mut r)?.ok_or_else(|| Error::Format("truncated embedding record".into()))?;
        let mut bytes = vec![0u8; dim as usize * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format("truncated embedding payload".into()))?;
        let vector = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(Embedding {
            vector,
            label: (label != NO_LABEL).then_some(label),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let embs = vec![
            Embedding::new(vec![1.5, -0.0, f32::MIN_POSITIVE, 3.0e-39], Some(7)),
            Embedding::new(vec![], None),
        ];
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &embs).unwrap();
        assert_eq!(&buf[..4], b"EMB1");
        let back = read_embeddings(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in embs.iter().zip(&back) {
            assert_eq!(a.label, b.label);
            let bits = |e: &Embedding| e.vector.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn truncated_stream_is_rejected() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &[Embedding::new(vec![1.0, 2.0], Some(1))]).unwrap();
        buf.pop();
        assert!(read_embeddings(buf.as_slice()).is_err());
    }
}
