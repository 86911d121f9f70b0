//! Weak-supervision data pipeline for scribble-annotated road extraction.
//!
//! The crate turns road scribbles into tri-state pseudo-labels ([`scle`]),
//! builds structure-aware mixed training pairs ([`samix`]), evaluates the
//! regularized training objective with analytic gradients ([`losses`]) and
//! scores binarized predictions ([`metrics`]). [`synth`] renders procedural
//! road scenes with exact masks for end-to-end checks, [`io`] holds the file
//! formats and [`oracle`] the brute-force references used by the test suites.

pub mod color;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod oracle;
pub mod raster;
pub mod samix;
pub mod scle;
pub mod skeleton;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{
    nonbackground_mask, tri_decode, tri_encode, BinaryMask, PredictionMap, RasterImage,
    ScribbleMap, Shape, Tri, TriLabel,
};
