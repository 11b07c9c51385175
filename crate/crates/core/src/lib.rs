//! Color quantization toolkit for triaging image corpora.
//!
//! Images are reduced to weighted HSV palettes by k-means in the HSV
//! cylinder. On top of that the crate flags probable human subjects through
//! Monk Skin Tone bands, probable symbols of interest through color-ratio
//! signatures, compares image regions for splice evidence, and batches all
//! of it over directories for sampling and review by human coders.
//!
//! Flags are leads for human review, not determinations.

pub mod colorspace;
pub mod corpus;
pub mod error;
pub mod forensics;
pub mod monk;
pub mod quantize;
pub mod symbol;
pub mod transport;

pub use colorspace::{cyl_to_hsv, hsv_to_cyl, hsv_to_rgb, rgb_to_hsv, CylPoint, Hsv, Rgb8};
pub use corpus::{
    AnalysisConfig, ClusterAssignment, CorpusSummary, EvalResult, ImageRecord, ImageStatus,
    SampleStrategy,
};
pub use error::{Error, Result};
pub use forensics::{ForensicsConfig, ForensicsReport, RegionSpec, Verdict};
pub use monk::{MonkBand, MonkScaleConfig, SkinFlagReport};
pub use quantize::{
    kmeans_palette, load_pixels, palette_distance, Palette, PixelCloud, QuantizeConfig,
};
pub use symbol::{SymbolConfig, SymbolMatch, SymbolSignature, TileGrid};

#[cfg(feature = "testkit")]
pub mod testkit;
