pub mod asymptotic;
pub mod decode;
pub mod distance;
pub mod encoder;
pub mod exit;
pub mod ensemble;
pub mod error;
pub mod mathx;
pub mod qpp;
pub mod trellis;

pub use error::{Error, Result};

// Compiles and runs every snippet of the guide as a doc-test.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/constituent-codes.md")]
    mod constituent_codes {}
    #[doc = include_str!("../../../book/src/interleavers.md")]
    mod interleavers {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    mod encoder {}
    #[doc = include_str!("../../../book/src/weight-enumerators.md")]
    mod weight_enumerators {}
    #[doc = include_str!("../../../book/src/spectral-shape.md")]
    mod spectral_shape {}
    #[doc = include_str!("../../../book/src/minimum-distance.md")]
    mod minimum_distance {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/exit-charts.md")]
    mod exit_charts {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
