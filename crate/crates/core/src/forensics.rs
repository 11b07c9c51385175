//! Region-versus-region color distribution comparison.

use std::fmt;
use std::str::FromStr;

use image::RgbaImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::{
    self, kmeans_palette, palette_distance, Palette, PixelCloud, QuantizeConfig,
};

pub const MIN_REGION_AREA: u64 = 16;
pub const DEFAULT_DELTA: f64 = 0.25;
pub const DEFAULT_REGION_K: usize = 4;
pub const HISTOGRAM_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl RegionSpec {
    pub const fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn check(&self, width: u32, height: u32) -> Result<()> {
        let fits = u64::from(self.x) + u64::from(self.width) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.height) <= u64::from(height);
        if !fits {
            return Err(Error::OutOfBounds {
                region: self.to_string(),
                width,
                height,
            });
        }
        if self.area() < MIN_REGION_AREA {
            return Err(Error::RegionTooSmall {
                region: self.to_string(),
                area: self.area(),
                min: MIN_REGION_AREA,
            });
        }
        Ok(())
    }
}

impl fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.width, self.height)
    }
}

/// Parses `x,y,w,h`.
impl FromStr for RegionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let nums: Vec<u32> = parts
            .iter()
            .map(|p| p.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("region {s:?} is not x,y,w,h")))?;
        match nums[..] {
            [x, y, width, height] => Ok(Self {
                x,
                y,
                width,
                height,
            }),
            _ => Err(Error::Parse(format!("region {s:?} is not x,y,w,h"))),
        }
    }
}

/// Row-major pixels of `r`; `cloud` must be a dense, unsubsampled raster.
pub fn region_cloud(cloud: &PixelCloud, r: &RegionSpec) -> Result<PixelCloud> {
    if !cloud.is_dense() {
        return Err(Error::NotDense);
    }
    r.check(cloud.width, cloud.height)?;
    let w = cloud.width as usize;
    let mut pixels = Vec::with_capacity(r.area() as usize);
    for y in r.y as usize..(r.y + r.height) as usize {
        let row = y * w;
        pixels.extend_from_slice(&cloud.pixels[row + r.x as usize..row + (r.x + r.width) as usize]);
    }
    PixelCloud::new(r.width, r.height, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

/// Normalized per-channel RGB histograms of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelHistograms {
    pub bins: usize,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForensicsReport {
    pub region_a: RegionSpec,
    pub region_b: RegionSpec,
    pub distance: f64,
    pub delta_used: f64,
    pub verdict: Verdict,
    pub palette_a: Palette,
    pub palette_b: Palette,
    /// Auxiliary evidence; no verdict rule is attached.
    pub channels_a: ChannelHistograms,
    pub channels_b: ChannelHistograms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForensicsConfig {
    pub delta: f64,
    /// Quantization for each region; `k` defaults to 4.
    pub quantize: QuantizeConfig,
}

impl Default for ForensicsConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            quantize: QuantizeConfig::with_k(DEFAULT_REGION_K),
        }
    }
}

pub fn compare_regions(
    image_bytes: &[u8],
    a: &RegionSpec,
    b: &RegionSpec,
    config: &ForensicsConfig,
) -> Result<ForensicsReport> {
    let img = quantize::decode_image(image_bytes)?;
    compare_regions_image(&img, a, b, config)
}

pub fn compare_regions_image(
    img: &RgbaImage,
    a: &RegionSpec,
    b: &RegionSpec,
    config: &ForensicsConfig,
) -> Result<ForensicsReport> {
    if config.delta.is_nan() || config.delta <= 0.0 {
        return Err(Error::InvalidConfig("delta must be positive".into()));
    }
    let dense = PixelCloud::dense(img)?;
    let quantize_region = |r: &RegionSpec| -> Result<Palette> {
        let cloud = region_cloud(&dense, r)?.subsample(config.quantize.max_pixels);
        kmeans_palette(&cloud, &config.quantize)
    };
    let palette_a = quantize_region(a)?;
    let palette_b = quantize_region(b)?;
    let distance = palette_distance(&palette_a, &palette_b);
    let verdict = if distance > config.delta {
        Verdict::Inconsistent
    } else {
        Verdict::Consistent
    };
    Ok(ForensicsReport {
        region_a: *a,
        region_b: *b,
        distance,
        delta_used: config.delta,
        verdict,
        palette_a,
        palette_b,
        channels_a: channel_histograms(img, a),
        channels_b: channel_histograms(img, b),
    })
}

pub fn channel_histograms(img: &RgbaImage, r: &RegionSpec) -> ChannelHistograms {
    let mut hist = [[0u64; HISTOGRAM_BINS]; 3];
    for y in r.y..r.y + r.height {
        for x in r.x..r.x + r.width {
            let p = img.get_pixel(x, y);
            for c in 0..3 {
                hist[c][p[c] as usize * HISTOGRAM_BINS / 256] += 1;
            }
        }
    }
    let n = r.area().max(1) as f64;
    let norm = |h: &[u64; HISTOGRAM_BINS]| h.iter().map(|&c| c as f64 / n).collect();
    ChannelHistograms {
        bins: HISTOGRAM_BINS,
        r: norm(&hist[0]),
        g: norm(&hist[1]),
        b: norm(&hist[2]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgba;

    fn two_panel() -> RgbaImage {
        RgbaImage::from_fn(128, 64, |x, _| {
            if x < 64 {
                Rgba([255, 0, 0, 255])
            } else {
                Rgba([0, 0, 255, 255])
            }
        })
    }

    #[test]
    fn parses_regions() {
        assert_eq!(
            "0,4,64,32".parse::<RegionSpec>().unwrap(),
            RegionSpec::new(0, 4, 64, 32)
        );
        assert!("0,4,64".parse::<RegionSpec>().is_err());
        assert!("0,4,-1,3".parse::<RegionSpec>().is_err());
        assert_eq!(RegionSpec::new(1, 2, 3, 4).to_string(), "1,2,3,4");
    }

    #[test]
    fn region_extraction() {
        let img = RgbaImage::from_pixel(8, 6, Rgba([9, 9, 9, 255]));
        let cloud = PixelCloud::dense(&img).unwrap();
        assert_eq!(
            region_cloud(&cloud, &RegionSpec::new(0, 0, 8, 6)).unwrap(),
            cloud
        );
        let sub = region_cloud(&cloud, &RegionSpec::new(2, 1, 4, 4)).unwrap();
        assert_eq!(sub.len(), 16);
        assert!(sub.pixels.iter().all(|p| *p == cloud.pixels[0]));
        assert!(matches!(
            region_cloud(&cloud, &RegionSpec::new(5, 0, 4, 4)),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            region_cloud(&cloud, &RegionSpec::new(0, 0, 3, 3)),
            Err(Error::RegionTooSmall { .. })
        ));
        assert!(matches!(
            region_cloud(&cloud.subsample(10), &RegionSpec::new(0, 0, 4, 4)),
            Err(Error::NotDense)
        ));
    }

    #[test]
    fn solid_image_regions_agree() {
        let img = RgbaImage::from_pixel(64, 64, Rgba([30, 140, 60, 255]));
        let r = compare_regions_image(
            &img,
            &RegionSpec::new(0, 0, 16, 16),
            &RegionSpec::new(32, 32, 16, 16),
            &ForensicsConfig::default(),
        )
        .unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.verdict, Verdict::Consistent);
    }

    #[test]
    fn red_versus_blue_panels() {
        let r = compare_regions_image(
            &two_panel(),
            &RegionSpec::new(0, 0, 64, 64),
            &RegionSpec::new(64, 0, 64, 64),
            &ForensicsConfig::default(),
        )
        .unwrap();
        assert!((r.distance - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::Inconsistent);
        assert_eq!(r.channels_a.r[15], 1.0);
        assert_eq!(r.channels_b.b[15], 1.0);
    }

    #[test]
    fn json_verdict_strings() {
        assert_eq!(
            serde_json::to_string(&Verdict::Inconsistent).unwrap(),
            "\"inconsistent\""
        );
    }
}
