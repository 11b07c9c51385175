//! Conversions between 8-bit RGB, HSV and the cylindrical embedding.
//!
//! Hue is an angle, so Euclidean distance on raw `(h, s, v)` triples is wrong
//! near the 0/360 seam. Every distance in this crate is measured on
//! [`CylPoint`]s instead: `x = s cos h`, `y = s sin h`, `z = v`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this chroma radius a cylindrical point is treated as achromatic.
const ACHROMATIC_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rgb8 {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb8 {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    /// Parses `RRGGBB`, with an optional leading `#`. Case-insensitive.
    pub fn from_hex(hex: &str) -> Result<Self> {
        let digits = hex.trim().trim_start_matches('#');
        if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::Parse(format!("malformed hex color {hex:?}")));
        }
        let channel = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).unwrap();
        Ok(Self::new(channel(0), channel(2), channel(4)))
    }

    pub fn to_hex(self) -> String {
        format!("{:02X}{:02X}{:02X}", self.r, self.g, self.b)
    }
}

impl fmt::Display for Rgb8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.to_hex())
    }
}

impl FromStr for Rgb8 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_hex(s)
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
///
/// Achromatic colors (`s == 0` or `v == 0`) carry `h == 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl Hsv {
    /// Validates and canonicalizes. Hue is reduced modulo 360.
    pub fn new(h: f64, s: f64, v: f64) -> Result<Self> {
        if !(h.is_finite() && s.is_finite() && v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite hsv ({h}, {s}, {v})"
            )));
        }
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!(
                "saturation and value must lie in [0, 1], got ({s}, {v})"
            )));
        }
        Ok(Self::canonical(h, s, v))
    }

    fn canonical(h: f64, s: f64, v: f64) -> Self {
        if s == 0.0 || v == 0.0 {
            return Self { h: 0.0, s, v };
        }
        Self {
            h: wrap_degrees(h),
            s,
            v,
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..360.0).contains(&self.h)
            && (0.0..=1.0).contains(&self.s)
            && (0.0..=1.0).contains(&self.v)
            && (self.h == 0.0 || (self.s > 0.0 && self.v > 0.0))
    }

    pub fn to_cyl(self) -> CylPoint {
        hsv_to_cyl(self)
    }

    pub fn to_rgb(self) -> Rgb8 {
        hsv_to_rgb(self)
    }

    /// Lexicographic `(h, s, v)` ordering; used for reproducible tie-breaks.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.h
            .total_cmp(&other.h)
            .then(self.s.total_cmp(&other.s))
            .then(self.v.total_cmp(&other.v))
    }
}

/// A point of the HSV cylinder in Cartesian coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CylPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CylPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dist2(&self, other: &Self) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn dist(&self, other: &Self) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn to_hsv(self) -> Hsv {
        cyl_to_hsv(self)
    }
}

/// Reduces an angle in degrees to `[0, 360)`.
pub fn wrap_degrees(h: f64) -> f64 {
    let w = h.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Shortest angular distance between two hues, in `[0, 180]`.
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = wrap_degrees(a - b);
    d.min(360.0 - d)
}

pub fn rgb_to_hsv(c: Rgb8) -> Hsv {
    let (r, g, b) = (i32::from(c.r), i32::from(c.g), i32::from(c.b));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if max == 0 {
        return Hsv {
            h: 0.0,
            s: 0.0,
            v: 0.0,
        };
    }
    let v = f64::from(max) / 255.0;
    if delta == 0 {
        return Hsv { h: 0.0, s: 0.0, v };
    }
    let s = f64::from(delta) / f64::from(max);
    let d = f64::from(delta);
    let h = if max == r {
        60.0 * f64::from(g - b) / d
    } else if max == g {
        60.0 * (f64::from(b - r) / d + 2.0)
    } else {
        60.0 * (f64::from(r - g) / d + 4.0)
    };
    Hsv {
        h: wrap_degrees(h),
        s,
        v,
    }
}

pub fn hsv_to_rgb(c: Hsv) -> Rgb8 {
    let chroma = c.v * c.s;
    let sector = wrap_degrees(c.h) / 60.0;
    let x = chroma * (1.0 - (sector % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match sector as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = c.v - chroma;
    Rgb8::new(to_byte(r1 + m), to_byte(g1 + m), to_byte(b1 + m))
}

/// `f64::round` rounds half away from zero.
fn to_byte(unit: f64) -> u8 {
    (unit * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn hsv_to_cyl(c: Hsv) -> CylPoint {
    let theta = wrap_degrees(c.h).to_radians();
    CylPoint::new(c.s * theta.cos(), c.s * theta.sin(), c.v)
}

pub fn cyl_to_hsv(p: CylPoint) -> Hsv {
    let radius = p.x.hypot(p.y);
    let v = p.z.clamp(0.0, 1.0);
    if radius < ACHROMATIC_EPS {
        return Hsv { h: 0.0, s: 0.0, v };
    }
    let s = radius.min(1.0);
    if v == 0.0 {
        return Hsv { h: 0.0, s, v };
    }
    Hsv {
        h: wrap_degrees(p.y.atan2(p.x).to_degrees()),
        s,
        v,
    }
}
