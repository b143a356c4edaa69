//! Complete-the-look: outfit corpus construction, style-compatibility embeddings,
//! offline evaluation and complementary-item retrieval.

pub mod category;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod nn;
pub mod optim;
pub mod retrieval;
pub mod outfit;
pub mod sampling;
pub mod tensor_io;
pub mod train;

pub use category::{Category, CategoryVocab};
pub use error::{Error, Result};
pub use features::FeatureStore;
pub use model::{Checkpoint, CheckpointMeta, ModelParams, ModelShape};
pub use outfit::{FashionItem, Outfit, RawOutfitImage};
