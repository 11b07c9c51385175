//! Symbol-of-interest detection from color-ratio signatures.
//!
//! A signature is the quantized palette of a symbol's reference image. A
//! target image is cut into square tiles; a tile matches when every required
//! signature color covers more than 1% of it and the tile's color fractions
//! point the same way as the signature weights (cosine similarity >= theta).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::RgbaImage;
use serde::{Deserialize, Serialize};

use crate::colorspace::{hsv_to_cyl, rgb_to_hsv, CylPoint, Rgb8};
use crate::error::{Error, Result};
use crate::quantize::{self, kmeans_palette, Palette, PixelCloud, QuantizeConfig};

pub const DEFAULT_W_MIN: f64 = 0.10;
pub const DEFAULT_TOLERANCE: f64 = 0.12;
pub const DEFAULT_THETA: f64 = 0.90;
/// A required color is present in a tile above this coverage.
pub const PRESENCE_FRACTION: f64 = 0.01;
pub const MANIFEST_FILE: &str = "symbols.toml";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSignature {
    pub name: String,
    pub palette: Palette,
    /// Palette entries at or above this weight are required colors.
    pub w_min: f64,
    /// Cylinder radius within which a pixel counts towards a centroid.
    pub per_color_tolerance: f64,
    /// Per-symbol override of the match threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl SymbolSignature {
    pub fn new(name: impl Into<String>, palette: Palette) -> Result<Self> {
        let sig = Self {
            name: name.into(),
            palette,
            w_min: DEFAULT_W_MIN,
            per_color_tolerance: DEFAULT_TOLERANCE,
            theta: None,
        };
        sig.validate()?;
        Ok(sig)
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_color_tolerance.is_nan() || self.per_color_tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{}: tolerance must be positive",
                self.name
            )));
        }
        if !self.palette.entries.iter().any(|e| e.weight >= self.w_min) {
            return Err(Error::InvalidConfig(format!(
                "{}: no palette color reaches w_min = {}",
                self.name, self.w_min
            )));
        }
        if let Some(t) = self.theta {
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::InvalidConfig(format!(
                    "{}: theta must lie in [-1, 1]",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Required colors as `(point, weight)` pairs, heaviest first.
    pub fn required(&self) -> Vec<(CylPoint, f64)> {
        self.palette
            .entries
            .iter()
            .filter(|e| e.weight >= self.w_min)
            .map(|e| (hsv_to_cyl(e.centroid), e.weight))
            .collect()
    }
}

/// Quantizes a symbol's reference image into a signature with default
/// tolerances. Transparent background pixels never reach the palette.
pub fn signature_from_image(
    name: &str,
    symbol_image: &[u8],
    config: &QuantizeConfig,
) -> Result<SymbolSignature> {
    let cloud = quantize::load_pixels(symbol_image, config)?;
    signature_from_cloud(name, &cloud, config)
}

pub fn signature_from_cloud(
    name: &str,
    cloud: &PixelCloud,
    config: &QuantizeConfig,
) -> Result<SymbolSignature> {
    let palette = kmeans_palette(cloud, config)?;
    if palette.effective_k == 1 {
        log::warn!(
            "symbol {name:?} has a single color; its signature will match any flat patch of it"
        );
    }
    SymbolSignature::new(name, palette)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Row-major partition of an image into square tiles; edge tiles may be
/// smaller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_size: u32,
    pub tiles: Vec<Tile>,
}

impl TileGrid {
    pub fn default_tile_size(width: u32, height: u32) -> u32 {
        (width.min(height) / 8).max(32)
    }

    pub fn new(width: u32, height: u32, tile_size: Option<u32>) -> Self {
        let size = tile_size
            .unwrap_or_else(|| Self::default_tile_size(width, height))
            .max(1);
        let mut tiles = Vec::new();
        for y in (0..height).step_by(size as usize) {
            for x in (0..width).step_by(size as usize) {
                tiles.push(Tile {
                    x,
                    y,
                    width: size.min(width - x),
                    height: size.min(height - y),
                });
            }
        }
        Self {
            tile_size: size,
            tiles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolMatch {
    pub symbol_name: String,
    pub tile_origin: (u32, u32),
    pub tile_size: (u32, u32),
    /// Coverage fraction of each required color, in signature order.
    pub fractions: Vec<f64>,
    pub ratio_similarity: f64,
    pub matched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolConfig {
    pub theta: f64,
    pub tile_size: Option<u32>,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            tile_size: None,
        }
    }
}

/// Scores `points` (one tile) against precomputed required colors.
fn score(
    points: &[CylPoint],
    required: &[(CylPoint, f64)],
    tol: f64,
    theta: f64,
) -> (Vec<f64>, f64, bool) {
    let tol2 = tol * tol;
    let mut counts = vec![0usize; required.len()];
    for p in points {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, (c, _)) in required.iter().enumerate() {
            let d = p.dist2(c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if best_d <= tol2 {
            counts[best] += 1;
        }
    }
    let n = points.len().max(1) as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let dot: f64 = fractions
        .iter()
        .zip(required)
        .map(|(f, (_, w))| f * w)
        .sum();
    let nf = fractions.iter().map(|f| f * f).sum::<f64>().sqrt();
    let nw = required.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    let similarity = if nf > 0.0 && nw > 0.0 {
        (dot / (nf * nw)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let present = fractions.iter().all(|&f| f > PRESENCE_FRACTION);
    (
        fractions.clone(),
        similarity,
        present && similarity >= theta,
    )
}

/// Matches a whole cloud as one tile at origin `(0, 0)`.
pub fn match_tile(tile: &PixelCloud, sig: &SymbolSignature, theta: f64) -> SymbolMatch {
    let points: Vec<CylPoint> = tile.pixels.iter().map(|p| hsv_to_cyl(*p)).collect();
    let (fractions, ratio_similarity, matched) =
        score(&points, &sig.required(), sig.per_color_tolerance, theta);
    SymbolMatch {
        symbol_name: sig.name.clone(),
        tile_origin: (0, 0),
        tile_size: (tile.width, tile.height),
        fractions,
        ratio_similarity,
        matched,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolFlag {
    pub flagged: bool,
    pub best_similarity: f64,
    pub matched_tiles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolScan {
    pub width: u32,
    pub height: u32,
    pub tile_size: u32,
    /// Sorted by symbol name, then tile row-major.
    pub matches: Vec<SymbolMatch>,
    pub flags: BTreeMap<String, SymbolFlag>,
}

pub fn match_symbols(
    image_bytes: &[u8],
    signatures: &[SymbolSignature],
    config: &SymbolConfig,
) -> Result<SymbolScan> {
    let img = quantize::decode_image(image_bytes)?;
    Ok(match_symbols_image(&img, signatures, config))
}

/// Tiles `img` at full resolution (no subsampling, alpha ignored) and scores
/// every `(tile, signature)` pair.
pub fn match_symbols_image(
    img: &RgbaImage,
    signatures: &[SymbolSignature],
    config: &SymbolConfig,
) -> SymbolScan {
    let (width, height) = img.dimensions();
    let grid = TileGrid::new(width, height, config.tile_size);
    let raw = img.as_raw();
    let cyl_at = |x: u32, y: u32| {
        let i = 4 * (y as usize * width as usize + x as usize);
        hsv_to_cyl(rgb_to_hsv(Rgb8::new(raw[i], raw[i + 1], raw[i + 2])))
    };
    let tile_points: Vec<Vec<CylPoint>> = grid
        .tiles
        .iter()
        .map(|t| {
            (t.y..t.y + t.height)
                .flat_map(|y| (t.x..t.x + t.width).map(move |x| (x, y)))
                .map(|(x, y)| cyl_at(x, y))
                .collect()
        })
        .collect();

    let mut order: Vec<&SymbolSignature> = signatures.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));

    let mut matches = Vec::with_capacity(order.len() * grid.tiles.len());
    let mut flags = BTreeMap::new();
    for sig in order {
        let required = sig.required();
        let theta = sig.theta.unwrap_or(config.theta);
        let mut flag = SymbolFlag {
            flagged: false,
            best_similarity: 0.0,
            matched_tiles: 0,
        };
        for (tile, points) in grid.tiles.iter().zip(&tile_points) {
            let (fractions, similarity, matched) =
                score(points, &required, sig.per_color_tolerance, theta);
            flag.best_similarity = flag.best_similarity.max(similarity);
            if matched {
                flag.flagged = true;
                flag.matched_tiles += 1;
            }
            matches.push(SymbolMatch {
                symbol_name: sig.name.clone(),
                tile_origin: (tile.x, tile.y),
                tile_size: (tile.width, tile.height),
                fractions,
                ratio_similarity: similarity,
                matched,
            });
        }
        flags.insert(sig.name.clone(), flag);
    }
    SymbolScan {
        width,
        height,
        tile_size: grid.tile_size,
        matches,
        flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// `symbols.toml`: `version = 1` plus one `[[symbol]]` table per reference
/// image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolManifest {
    pub version: u32,
    #[serde(default, rename = "symbol")]
    pub symbols: Vec<ManifestEntry>,
}

impl SymbolManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Self =
            toml::from_str(text).map_err(|e| Error::Parse(format!("symbol manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Parse(format!(
                "symbol manifest version {} is not supported (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }
}

/// Loads every signature of a symbol database directory.
pub fn load_symbol_database(dir: &Path, config: &QuantizeConfig) -> Result<Vec<SymbolSignature>> {
    let manifest = SymbolManifest::parse(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let mut out = Vec::with_capacity(manifest.symbols.len());
    for entry in &manifest.symbols {
        let bytes = std::fs::read(dir.join(&entry.file))?;
        let cfg = QuantizeConfig {
            k: entry.k.unwrap_or(config.k),
            ..*config
        };
        let mut sig = signature_from_image(&entry.name, &bytes, &cfg)?;
        if let Some(w) = entry.w_min {
            sig.w_min = w;
        }
        if let Some(t) = entry.tolerance {
            sig.per_color_tolerance = t;
        }
        sig.theta = entry.theta;
        sig.validate()?;
        out.push(sig);
    }
    Ok(out)
}
