//! Unsupervised lexical normalization for large corpora.
//!
//! Every distinct word is hashed `T` times with MinHash-style locality
//! sensitive hashing over its character n-grams. Words that share a signature
//! in a repetition form a clique; edge weights count the repetitions two words
//! collided in. Edges lighter than `alpha * T` are dropped, and each connected
//! component of what remains is mapped onto its most frequent word.
//!
//! ```
//! use lexnorm::{pipeline, LshParams};
//!
//! let corpus = "amazing amazing amazing amazingg\n";
//! let index = pipeline::index_reader_with(
//!     corpus.as_bytes(),
//!     &pipeline::WhitespaceTokenizer,
//!     "<doc>",
//!     LshParams::default(),
//!     &Default::default(),
//! )
//! .unwrap();
//! assert_eq!(index.words.len(), 2);
//! ```

pub mod baseline;
pub mod bench;
pub mod bounds;
pub mod error;
pub mod graph;
pub mod hashing;
pub mod index_store;
pub mod inference;
pub mod params;
pub mod pipeline;

pub use crate::error::{Error, ErrorKind, Result};
pub use crate::graph::{BucketIndex, CollisionGraph, Component, Vocabulary, WordId, WordTable};
pub use crate::hashing::{FoldedSignature, SubstringSet};
pub use crate::index_store::{load_index, save_index, Index, Manifest};
pub use crate::inference::{infer_batch, infer_word, InferenceMatch, InferenceOptions};
pub use crate::params::{Coefficients, HashCoeffs, HashRole, LshParams};
