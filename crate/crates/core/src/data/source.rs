//! Where training images come from: the synthetic world or annotation files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{load_annotations, load_image, AnnotationSet, DatasetKind, Sample, SyntheticWorld};
use crate::error::{Error, Result};

/// Training images addressable by `(kind, index)`.
pub trait DataSource {
    fn sample(&self, kind: DatasetKind, index: u64) -> Result<Sample>;
    /// Number of identity classes recognition samples are labelled with.
    fn num_classes(&self) -> usize;
}

impl DataSource for SyntheticWorld {
    fn sample(&self, kind: DatasetKind, index: u64) -> Result<Sample> {
        SyntheticWorld::sample(self, kind, index)
    }

    fn num_classes(&self) -> usize {
        SyntheticWorld::num_classes(self)
    }
}

/// Images listed in annotation files, cycled in file order. Image paths are
/// relative to the annotation file. Recognition identities are renumbered
/// densely in ascending order.
#[derive(Debug, Clone, Default)]
pub struct AnnotatedSource {
    detection: Option<(PathBuf, AnnotationSet)>,
    recognition: Option<(PathBuf, AnnotationSet)>,
    classes: BTreeMap<u32, u32>,
}

impl AnnotatedSource {
    pub fn open(detection: Option<&Path>, recognition: Option<&Path>) -> Result<Self> {
        let load = |p: &Path| -> Result<(PathBuf, AnnotationSet)> {
            let set = load_annotations(p)?;
            if set.images.is_empty() {
                return Err(Error::Input(format!("{} lists no images", p.display())));
            }
            let root = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((root, set))
        };
        let detection = detection.map(load).transpose()?;
        let recognition = recognition.map(load).transpose()?;
        let mut classes = BTreeMap::new();
        if let Some((_, set)) = &recognition {
            for id in set.images.iter().flat_map(|a| a.identities.iter().flatten()) {
                classes.insert(*id, 0);
            }
            for (k, v) in classes.values_mut().enumerate() {
                *v = k as u32;
            }
        }
        Ok(AnnotatedSource {
            detection,
            recognition,
            classes,
        })
    }

    /// Original identity of dense class `k`.
    pub fn identity_of(&self, k: u32) -> Option<u32> {
        self.classes.iter().find(|(_, &v)| v == k).map(|(&id, _)| id)
    }
}

impl DataSource for AnnotatedSource {
    fn sample(&self, kind: DatasetKind, index: u64) -> Result<Sample> {
        let (root, set) = match kind {
            DatasetKind::Detection => &self.detection,
            DatasetKind::Recognition => &self.recognition,
        }
        .as_ref()
        .ok_or_else(|| Error::Input(format!("no {kind} annotations configured")))?;
        let ann = &set.images[(index % set.images.len() as u64) as usize];
        let image = load_image(&root.join(&ann.path))?;
        let identities = match kind {
            DatasetKind::Detection => vec![None; ann.boxes.len()],
            DatasetKind::Recognition => ann
                .identities
                .iter()
                .map(|id| id.map(|i| self.classes[&i]))
                .collect(),
        };
        let (h, w) = (image.shape()[1] as f32, image.shape()[2] as f32);
        let boxes = ann.boxes.iter().map(|b| b.clip(w, h)).collect();
        Ok(Sample {
            image,
            boxes,
            identities,
        })
    }

    fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::save_png;
    use crate::tensor::Tensor;

    #[test]
    fn annotated_images_are_cycled_and_relabelled() {
        let dir = tempfile::tempdir().unwrap();
        save_png(&Tensor::full(&[3, 8, 10], 0.5), &dir.path().join("a.png")).unwrap();
        let list = dir.path().join("rec.txt");
        std::fs::write(&list, "a.png\n2\n1 1 4 4 42\n2 2 3 3 7\na.png\n1\n0 0 5 5 -1\n").unwrap();
        let src = AnnotatedSource::open(None, Some(&list)).unwrap();
        assert_eq!(src.num_classes(), 2);
        let s = src.sample(DatasetKind::Recognition, 2).unwrap();
        assert_eq!(s.identities, vec![Some(1), Some(0)]);
        assert_eq!(s.size(), (8, 10));
        assert_eq!(src.identity_of(1), Some(42));
        assert!(src.sample(DatasetKind::Detection, 0).is_err());
    }
}
