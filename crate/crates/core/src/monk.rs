//! Human-subject flagging from Monk Skin Tone bands.
//!
//! Each band is an axis-aligned box around a reference color: a circular
//! window on hue and linear windows on saturation and value. An image is
//! flagged when the fraction of its pixels inside the union of the bands
//! reaches `tau`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::colorspace::{hue_distance, rgb_to_hsv, wrap_degrees, Hsv, Rgb8};
use crate::error::{Error, Result};
use crate::quantize::{Palette, PixelCloud};

/// The checked-in default band table.
pub const DEFAULT_SCALE_TEXT: &str = include_str!("../data/monk_scale.txt");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfwidths {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl Default for Halfwidths {
    /// 15% of each axis' full range.
    fn default() -> Self {
        Self {
            h: 0.15 * 360.0,
            s: 0.15,
            v: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonkBand {
    pub tone_id: u8,
    pub hex: String,
    pub reference: Hsv,
    pub h_halfwidth: f64,
    pub s_halfwidth: f64,
    pub v_halfwidth: f64,
}

impl MonkBand {
    /// `(start, end)` of the hue window in degrees; `start > end` when it wraps.
    pub fn hue_window(&self) -> (f64, f64) {
        (
            wrap_degrees(self.reference.h - self.h_halfwidth),
            wrap_degrees(self.reference.h + self.h_halfwidth),
        )
    }

    pub fn s_window(&self) -> (f64, f64) {
        clamp_window(self.reference.s, self.s_halfwidth)
    }

    pub fn v_window(&self) -> (f64, f64) {
        clamp_window(self.reference.v, self.v_halfwidth)
    }

    #[inline]
    pub fn contains(&self, p: &Hsv) -> bool {
        pixel_in_band(p, self)
    }
}

fn clamp_window(center: f64, half: f64) -> (f64, f64) {
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn band_from_hex(tone_id: u8, hex: &str, halfwidths: Halfwidths) -> Result<MonkBand> {
    if !(halfwidths.h > 0.0 && halfwidths.s > 0.0 && halfwidths.v > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "band halfwidths must be positive: {halfwidths:?}"
        )));
    }
    let rgb = Rgb8::from_hex(hex)?;
    Ok(MonkBand {
        tone_id,
        hex: rgb.to_hex(),
        reference: rgb_to_hsv(rgb),
        h_halfwidth: halfwidths.h,
        s_halfwidth: halfwidths.s,
        v_halfwidth: halfwidths.v,
    })
}

#[inline]
pub fn pixel_in_band(p: &Hsv, b: &MonkBand) -> bool {
    (p.s - b.reference.s).abs() <= b.s_halfwidth
        && (p.v - b.reference.v).abs() <= b.v_halfwidth
        && hue_distance(p.h, b.reference.h) <= b.h_halfwidth
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonkScaleConfig {
    pub bands: Vec<MonkBand>,
    pub tau: f64,
}

impl Default for MonkScaleConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_SCALE_TEXT, Halfwidths::default(), 0.05)
            .expect("bundled monk scale parses")
    }
}

impl MonkScaleConfig {
    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = tau;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::InvalidConfig("monk scale has no bands".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if self.bands.len() != 10 {
            log::warn!("monk scale has {} bands instead of 10", self.bands.len());
        }
        Ok(())
    }

    /// Parses the plain-text band table (see `data/monk_scale.txt`).
    pub fn parse(text: &str, defaults: Halfwidths, tau: f64) -> Result<Self> {
        let mut bands: Vec<MonkBand> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("monk scale line {}: {what}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 && fields.len() != 5 {
                return Err(bad("expected `tone_id hex [h s v]`"));
            }
            let tone_id: u8 = fields[0]
                .parse()
                .map_err(|_| bad("tone_id is not an integer"))?;
            if bands.iter().any(|b| b.tone_id == tone_id) {
                return Err(bad("duplicate tone_id"));
            }
            let halfwidths = if fields.len() == 5 {
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| bad("halfwidth is not a number"))
                };
                Halfwidths {
                    h: num(fields[2])?,
                    s: num(fields[3])?,
                    v: num(fields[4])?,
                }
            } else {
                defaults
            };
            let band =
                band_from_hex(tone_id, fields[1], halfwidths).map_err(|e| bad(&e.to_string()))?;
            bands.push(band);
        }
        let scale = Self { bands, tau };
        scale.validate()?;
        Ok(scale)
    }

    pub fn load(path: &Path, defaults: Halfwidths, tau: f64) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, defaults, tau)
    }

    /// First band containing `p`, if any.
    pub fn band_of(&self, p: &Hsv) -> Option<&MonkBand> {
        self.bands.iter().find(|b| b.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinFlagReport {
    /// Per-band fractions; a pixel may count towards several bands.
    pub per_tone_fraction: Vec<f64>,
    /// Fraction of pixels inside at least one band.
    pub total_matched_fraction: f64,
    pub flagged: bool,
    pub tau_used: f64,
}

pub fn flag_skin(cloud: &PixelCloud, scale: &MonkScaleConfig) -> SkinFlagReport {
    let mut per_tone = vec![0usize; scale.bands.len()];
    let mut union = 0usize;
    for p in &cloud.pixels {
        let mut hit = false;
        for (count, band) in per_tone.iter_mut().zip(&scale.bands) {
            if band.contains(p) {
                *count += 1;
                hit = true;
            }
        }
        union += usize::from(hit);
    }
    let n = cloud.pixels.len().max(1) as f64;
    let total_matched_fraction = union as f64 / n;
    SkinFlagReport {
        per_tone_fraction: per_tone.iter().map(|&c| c as f64 / n).collect(),
        total_matched_fraction,
        flagged: total_matched_fraction >= scale.tau,
        tau_used: scale.tau,
    }
}

/// For each palette entry, the first tone whose band contains its centroid.
pub fn palette_band_matches(palette: &Palette, scale: &MonkScaleConfig) -> Vec<Option<u8>> {
    palette
        .entries
        .iter()
        .map(|e| scale.band_of(&e.centroid).map(|b| b.tone_id))
        .collect()
}
