//! Synthetic faces, stitched training images, identity splits and
//! annotation files.

mod annotations;
mod png;
mod source;
mod split;
mod stitch;
mod synth;
mod world;

pub use annotations::{load_annotations, parse_annotations, Annotation, AnnotationSet};
pub use png::{load_image, save_png, to_rgb8};
pub use source::{AnnotatedSource, DataSource};
pub use split::{make_split, FaceRef, Pair, Split, SplitConfig};
pub use stitch::{stitch_batch, stitch_with, unstitch_boxes, GridLayout, Sample};
pub use synth::{
    face_box, render_face, synth_face, synth_face_sampled, Nuisance, NuisanceRanges,
    SyntheticIdentity,
};
pub use world::{DataConfig, DatasetKind, SyntheticWorld};
