use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("could not decode image: {0}")]
    Decode(String),
    #[error("image has no opaque pixels")]
    EmptyImage,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("region {region} lies outside the {width}x{height} image")]
    OutOfBounds {
        region: String,
        width: u32,
        height: u32,
    },
    #[error("region {region} covers {area} pixels, at least {min} are required")]
    RegionTooSmall { region: String, area: u64, min: u64 },
    #[error("pixel cloud is subsampled or has dropped pixels; regions need the full raster")]
    NotDense,
    #[error("need at least {needed} analyzable images, found {found}")]
    TooFewImages { needed: usize, found: usize },
    #[error("requested sample of {requested} exceeds the {available} analyzable images")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("labels manifest: {0}")]
    ManifestParse(String),
    #[error("cannot read directory {}: {source}", path.display())]
    DirectoryUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
