//! Recognition branch: residual feature extractor, center loss and
//! cosine verification.

mod center;
mod io;
mod residual;
mod snet;
mod verify;

pub use center::{center_loss, CenterBank};
pub use io::{read_embeddings, write_embeddings};
pub use residual::{ResidualBlock, ResidualCache};
pub use snet::{SNet, SNetCache, MAX_SHARE_DEPTH};
pub use verify::{accuracy_at, cosine_similarity, find_best_threshold, verify, Embedding};
