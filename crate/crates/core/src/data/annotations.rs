//! Text annotations: per image a path line, a count line, then `count` box
//! lines `x1 y1 w h [identity]`, identity `-1` meaning unknown.

use std::fs;
use std::path::{Path, PathBuf};

use crate::detection::BBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub path: PathBuf,
    pub boxes: Vec<BBox>,
    pub identities: Vec<Option<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    pub images: Vec<Annotation>,
    /// Boxes dropped for nonpositive width or height.
    pub skipped: usize,
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path)?;
    parse_annotations(&text).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            path: Some(path.to_path_buf()),
            line,
            msg,
        },
        other => other,
    })
}

pub fn parse_annotations(text: &str) -> Result<AnnotationSet> {
    let err = |line: usize, msg: String| Error::Parse {
        path: None,
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut set = AnnotationSet::default();
    while let Some((_, path)) = lines.next() {
        let (ln, count) = lines
            .next()
            .ok_or_else(|| err(text.lines().count(), format!("missing box count after `{path}`")))?;
        let count: usize = count
            .parse()
            .map_err(|_| err(ln, format!("expected a box count, got `{count}`")))?;
        let mut ann = Annotation {
            path: PathBuf::from(path),
            boxes: Vec::with_capacity(count),
            identities: Vec::with_capacity(count),
        };
        for _ in 0..count {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| err(text.lines().count(), format!("`{path}` lists fewer than {count} boxes")))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(err(ln, format!("expected `x1 y1 w h [identity]`, got `{line}`")));
            }
            let mut v = [0.0f32; 4];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .parse::<f32>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(ln, format!("bad coordinate `{f}`")))?;
            }
            let identity = match fields.get(4) {
                None => None,
                Some(f) => {
                    let id: i64 = f.parse().map_err(|_| err(ln, format!("bad identity `{f}`")))?;
                    match id {
                        -1 => None,
                        0..=0xFFFF_FFFE => Some(id as u32),
                        _ => return Err(err(ln, format!("identity {id} out of range"))),
                    }
                }
            };
            let [x, y, w, h] = v;
            if w <= 0.0 || h <= 0.0 {
                set.skipped += 1;
                continue;
            }
            ann.boxes.push(BBox::new(x, y, x + w, y + h));
            ann.identities.push(identity);
        }
        set.images.push(ann);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_empty_set() {
        assert_eq!(parse_annotations("").unwrap(), AnnotationSet::default());
    }

    #[test]
    fn corner_conversion_and_identity() {
        let set = parse_annotations("a.png\n1\n10 20 30 40 7\n").unwrap();
        let b = set.images[0].boxes[0];
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (10.0, 20.0, 40.0, 60.0));
        assert_eq!(set.images[0].identities, vec![Some(7)]);
    }

    #[test]
    fn zero_width_skipped_and_counted() {
        let set = parse_annotations("a.png\n2\n1 1 0 5\n1 1 3 3 -1\n").unwrap();
        assert_eq!(set.skipped, 1);
        assert_eq!(set.images[0].identities, vec![None]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let e = parse_annotations("a.png\n1\n1 2 x 4\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }
}
