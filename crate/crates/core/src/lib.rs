//! Block Metropolis-Hastings for discrete graphical models, with proposals
//! learned once per structural motif and reused across host models.
//!
//! The guide in `book/` walks through the modules in order; its snippets
//! run as doc-tests of this crate.

pub mod error;
pub mod gmm;
pub mod harness;
pub mod logprob;
pub mod model;
pub mod motifs;
pub mod neural;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub mod mdn;
pub mod samplers;
pub mod train;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/samplers.md")]
    mod samplers {}
    #[doc = include_str!("../../../book/src/mdn.md")]
    mod mdn {}
    #[doc = include_str!("../../../book/src/motifs.md")]
    mod motifs {}
    #[doc = include_str!("../../../book/src/neural.md")]
    mod neural {}
    #[doc = include_str!("../../../book/src/gmm.md")]
    mod gmm {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
