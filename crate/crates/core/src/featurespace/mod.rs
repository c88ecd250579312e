//! Field declarations, discretization of numerical fields, and encoding of
//! raw records into the `(categorical ids, bucket ids, dense values)` triple
//! consumed by every backbone.
//!
//! Each numerical field feeds the model twice: once as a bucket id looked up
//! in its own embedding table, once as a transformed dense scalar appended to
//! the concatenated embeddings.

mod discretizer;
mod encoder;
mod schema;

pub use discretizer::{bucket_center, bucketize, fit_discretizer, Discretizer};
pub use encoder::{
    dense_transform, encode_sample, DenseTransform, EncodedSample, FeatureEncoder, Features,
    NumericalField, RawRecord, Vocabulary,
};
pub use schema::{DenseMode, Direction, FeatureSchema, FieldKind, FieldSpec};
