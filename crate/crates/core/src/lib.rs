//! Few-shot classification over LLM-generated visual descriptors.
//!
//! Image embeddings are grounded against descriptor and class-prompt text
//! embeddings ([`grounding`]), a sparse multinomial head is learned on the
//! groundings along an ℓ1 regularization path ([`slr`]), and the learned
//! head is ensembled with zero-shot heads in weight space ([`eval`]).
//! [`tensor_io`] handles the on-disk formats and [`cli`] wires the stages
//! into the `avd` command.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod eval;
pub mod grounding;
pub mod numeric;
pub mod rng;
pub mod slr;
pub mod synthetic;
pub mod tensor_io;
pub mod weights;

pub use error::{Error, Result};
pub use tensor_io::{DescriptorSet, EmbeddingMatrix, LabelVector};
pub use weights::{FeatureSpace, WeightMatrix};
