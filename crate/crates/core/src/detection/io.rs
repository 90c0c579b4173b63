//! Line-oriented detection lists: `image_id x1 y1 x2 y2 score`.

use std::io::{BufRead, Write};

use super::BBox;
use crate::error::{Error, Result};

/// One box per line, coordinates and score to 4 decimal places.
pub fn write_detections(mut w: impl Write, dets: &[(usize, BBox)]) -> Result<()> {
    for (id, b) in dets {
        writeln!(
            w,
            "{id} {:.4} {:.4} {:.4} {:.4} {:.4}",
            b.x1,
            b.y1,
            b.x2,
            b.y2,
            b.score.unwrap_or(0.0)
        )?;
    }
    Ok(())
}

/// Inverse of [`write_detections`]; blank lines and `#` comments are skipped.
pub fn read_detections(r: impl BufRead) -> Result<Vec<(usize, BBox)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: None,
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", f.len())));
        }
        let id = f[0].parse::<usize>().map_err(|e| err(format!("image id: {e}")))?;
        let mut v = [0f32; 5];
        for (k, s) in f[1..].iter().enumerate() {
            v[k] = s.parse().map_err(|e| err(format!("field {}: {e}", k + 2)))?;
        }
        out.push((id, BBox::new(v[0], v[1], v[2], v[3]).with_score(v[4])));
    }
    Ok(out)
}
