//! A fully synthetic data universe addressable by `(seed, index)`: stitched
//! detection images, stitched identity-labelled images, held-out detection
//! tiles and verification faces.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    make_split, stitch_with, synth_face_sampled, FaceRef, GridLayout, NuisanceRanges, Sample,
    Split, SplitConfig, SyntheticIdentity,
};
use crate::error::{Error, Result};
use crate::seed;

/// Identities of detection-only faces are drawn above this offset so they
/// never coincide with recognition identities.
const DETECTION_ID_BASE: u32 = 1 << 20;

/// Which supervision a sample carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    /// Boxes only.
    Detection,
    /// Boxes and identities.
    Recognition,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Detection => "detection",
            DatasetKind::Recognition => "recognition",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detection" => Ok(DatasetKind::Detection),
            "recognition" => Ok(DatasetKind::Recognition),
            _ => Err(Error::Input(format!(
                "unknown dataset `{s}` (expected detection or recognition)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub seed: u64,
    pub tile: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub split: SplitConfig,
    pub eval_tiles: usize,
    pub nuisance: NuisanceRanges,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            seed: 0,
            tile: 48,
            grid_rows: 2,
            grid_cols: 2,
            split: SplitConfig::default(),
            eval_tiles: 100,
            nuisance: NuisanceRanges::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    cfg: DataConfig,
    split: Split,
}

impl SyntheticWorld {
    pub fn new(cfg: DataConfig) -> Result<Self> {
        if cfg.tile < 16 || cfg.grid_rows == 0 || cfg.grid_cols == 0 {
            return Err(Error::Input(format!(
                "tile {} with a {}x{} grid is too small",
                cfg.tile, cfg.grid_rows, cfg.grid_cols
            )));
        }
        let split = make_split(&cfg.split, cfg.seed)?;
        Ok(SyntheticWorld { cfg, split })
    }

    pub fn config(&self) -> &DataConfig {
        &self.cfg
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn layout(&self) -> GridLayout {
        GridLayout {
            rows: self.cfg.grid_rows,
            cols: self.cfg.grid_cols,
            tile_h: self.cfg.tile,
            tile_w: self.cfg.tile,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.split.train_identities.len()
    }

    fn canvas(&self) -> (usize, usize) {
        (self.cfg.tile, self.cfg.tile)
    }

    fn render(&self, id: u32, rng: &mut impl Rng, label: Option<u32>) -> Result<Sample> {
        let identity = SyntheticIdentity::generate(self.cfg.seed, id);
        let (image, b, _) = synth_face_sampled(&identity, &self.cfg.nuisance, self.canvas(), rng)?;
        Ok(Sample {
            image,
            boxes: vec![b],
            identities: vec![label],
        })
    }

    /// One tile of a given identity instance, labelled with its identity.
    pub fn face(&self, f: FaceRef) -> Result<Sample> {
        let mut rng = seed::rng(
            self.cfg.seed,
            "face",
            &[u64::from(f.identity), u64::from(f.instance)],
        );
        self.render(f.identity, &mut rng, Some(f.identity))
    }

    /// A detection-only tile from a named stream.
    pub fn detection_tile(&self, stream: &str, index: u64) -> Result<Sample> {
        let mut rng = seed::rng(self.cfg.seed, stream, &[index]);
        let id = DETECTION_ID_BASE + rng.gen_range(0..DETECTION_ID_BASE);
        self.render(id, &mut rng, None)
    }

    /// Training image `index` of the given kind.
    pub fn sample(&self, kind: DatasetKind, index: u64) -> Result<Sample> {
        let n = self.layout().tiles() as u64;
        let tiles: Vec<Sample> = match kind {
            DatasetKind::Detection => (0..n)
                .map(|k| self.detection_tile("detection-train", index * n + k))
                .collect::<Result<_>>()?,
            DatasetKind::Recognition => {
                let mut rng = seed::rng(self.cfg.seed, "recognition-train", &[index]);
                self.split
                    .train
                    .choose_multiple(&mut rng, n as usize)
                    .map(|&f| self.face(f))
                    .collect::<Result<_>>()?
            }
        };
        stitch_with(self.layout(), &tiles)
    }

    /// Held-out detection tiles, never used in training.
    pub fn eval_tiles(&self) -> Result<Vec<Sample>> {
        (0..self.cfg.eval_tiles as u64)
            .map(|i| self.detection_tile("detection-eval", i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_reproducible() {
        let w = SyntheticWorld::new(DataConfig::default()).unwrap();
        let a = w.sample(DatasetKind::Recognition, 3).unwrap();
        let b = w.sample(DatasetKind::Recognition, 3).unwrap();
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.boxes, b.boxes);
        assert_eq!(a.size(), (96, 96));
        assert!(a.identities.iter().all(|i| i.is_some_and(|v| v < 20)));
        let d = w.sample(DatasetKind::Detection, 0).unwrap();
        assert_eq!(d.boxes.len(), 4);
        assert!(d.identities.iter().all(Option::is_none));
    }
}
