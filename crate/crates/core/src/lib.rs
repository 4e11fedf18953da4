//! Event-based graph contrastive learning for text representations.
//!
//! Documents become intra-relation graphs over extracted
//! (subject, predicate, object) event blocks; frequent subgraph patterns
//! mark each graph's event skeleton; an MLP anchor, a skeleton-weighted GCN
//! and shuffled negatives are trained with two triplet terms and an upper
//! bound; a linear probe scores the resulting document vectors.

pub mod config;
pub mod encoder;
pub mod error;
pub mod events;
pub mod export;
pub mod graph;
pub mod loss;
pub mod pipeline;
pub mod probe;
pub mod skeleton;
pub mod stages;
pub mod synth;
pub mod tape;
pub mod train;
pub mod vectors;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/events.md")]
    mod events {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/skeletons.md")]
    mod skeletons {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    mod encoder {}
    #[doc = include_str!("../../../book/src/loss.md")]
    mod loss {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
