//! Dataset ingestion, schema presets, the synthetic monotone generator, and
//! checkpoint persistence.

mod checkpoint;
mod csvio;
mod presets;
mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use csvio::{load_csv, write_csv, Dataset};
pub use presets::{industrial_schema, kuairand_pure_schema, KUAIRAND_TRAIN_CUTOFF};
pub use synthetic::{generate_synthetic, GroundTruth, SynthCategorical, SynthNumerical, SyntheticSpec};
