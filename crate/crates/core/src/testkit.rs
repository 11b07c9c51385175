//! Synthetic fixtures with known ground truth, for tests and benchmarks.
//!
//! Enabled with the `testkit` feature.

use image::{ImageFormat, Rgba, RgbaImage};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::colorspace::{hsv_to_rgb, Hsv, Rgb8};

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("png encoding into memory");
    out.into_inner()
}

pub fn rgba(c: Rgb8) -> Rgba<u8> {
    Rgba([c.r, c.g, c.b, 255])
}

pub fn solid(width: u32, height: u32, c: Rgb8) -> RgbaImage {
    RgbaImage::from_pixel(width, height, rgba(c))
}

/// Adds N(0, sigma) noise on each channel in unit RGB, rounded and clamped.
pub fn jitter<R: Rng>(c: Rgb8, sigma: f64, rng: &mut R) -> Rgb8 {
    if sigma <= 0.0 {
        return c;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut ch = |v: u8| {
        let x = f64::from(v) / 255.0 + normal.sample(rng);
        (x * 255.0).round().clamp(0.0, 255.0) as u8
    };
    Rgb8::new(ch(c.r), ch(c.g), ch(c.b))
}

pub fn noisy_fill<R: Rng>(
    width: u32,
    height: u32,
    base: Rgb8,
    sigma: f64,
    rng: &mut R,
) -> RgbaImage {
    RgbaImage::from_fn(width, height, |_, _| rgba(jitter(base, sigma, rng)))
}

/// Copies `src` onto `dst` with its top-left corner at `(x, y)`, clipped.
pub fn paste(dst: &mut RgbaImage, src: &RgbaImage, x: u32, y: u32) {
    for (sx, sy, p) in src.enumerate_pixels() {
        let (dx, dy) = (x + sx, y + sy);
        if dx < dst.width() && dy < dst.height() {
            dst.put_pixel(dx, dy, *p);
        }
    }
}

/// A flat symbol built from horizontal bands of `colors` with the given
/// row proportions.
#[derive(Debug, Clone)]
pub struct SyntheticLogo {
    pub name: String,
    pub colors: Vec<(Rgb8, f64)>,
    pub image: RgbaImage,
}

fn banded(size: u32, colors: &[(Rgb8, f64)]) -> RgbaImage {
    let mut cut = Vec::new();
    let mut acc = 0.0;
    for (c, w) in colors {
        acc += w;
        cut.push((*c, (acc * f64::from(size)).round() as u32));
    }
    RgbaImage::from_fn(size, size, |_, y| {
        let c = cut
            .iter()
            .find(|(_, end)| y < *end)
            .map(|(c, _)| *c)
            .unwrap_or(cut.last().unwrap().0);
        rgba(c)
    })
}

/// Five 64x64 multi-color logos with well separated colors.
pub fn synthetic_logos() -> Vec<SyntheticLogo> {
    let spec: [(&str, &[(Rgb8, f64)]); 5] = [
        (
            "black-gold",
            &[(Rgb8::new(0, 0, 0), 0.75), (Rgb8::new(255, 220, 0), 0.25)],
        ),
        (
            "red-white",
            &[
                (Rgb8::new(200, 0, 0), 0.625),
                (Rgb8::new(255, 255, 255), 0.375),
            ],
        ),
        (
            "tricolor",
            &[
                (Rgb8::new(0, 150, 60), 0.375),
                (Rgb8::new(255, 255, 255), 0.25),
                (Rgb8::new(220, 0, 40), 0.375),
            ],
        ),
        (
            "bolt",
            &[
                (Rgb8::new(0, 0, 128), 0.5),
                (Rgb8::new(255, 140, 0), 0.25),
                (Rgb8::new(230, 230, 230), 0.25),
            ],
        ),
        (
            "quad",
            &[
                (Rgb8::new(255, 0, 255), 0.375),
                (Rgb8::new(0, 200, 200), 0.25),
                (Rgb8::new(0, 0, 0), 0.25),
                (Rgb8::new(255, 255, 0), 0.125),
            ],
        ),
    ];
    spec.iter()
        .map(|(name, colors)| SyntheticLogo {
            name: name.to_string(),
            colors: colors.to_vec(),
            image: banded(64, colors),
        })
        .collect()
}

/// Random colored rectangles over a random base, with mild noise.
pub fn clutter<R: Rng>(width: u32, height: u32, rng: &mut R) -> RgbaImage {
    let random_color = |rng: &mut R| {
        hsv_to_rgb(Hsv {
            h: rng.random_range(0.0..360.0),
            s: rng.random_range(0.3..1.0),
            v: rng.random_range(0.3..1.0),
        })
    };
    let base = random_color(rng);
    let mut img = solid(width, height, base);
    for _ in 0..rng.random_range(4..10) {
        let c = random_color(rng);
        let (w, h) = (
            rng.random_range(8..=width / 2),
            rng.random_range(8..=height / 2),
        );
        let (x, y) = (
            rng.random_range(0..width - w),
            rng.random_range(0..height - h),
        );
        for yy in y..y + h {
            for xx in x..x + w {
                img.put_pixel(xx, yy, rgba(c));
            }
        }
    }
    for p in img.pixels_mut() {
        let c = jitter(Rgb8::new(p[0], p[1], p[2]), 0.01, rng);
        *p = rgba(c);
    }
    img
}

/// Background hues no Monk band reaches.
pub fn non_skin_color<R: Rng>(rng: &mut R) -> Rgb8 {
    hsv_to_rgb(Hsv {
        h: rng.random_range(150.0..290.0),
        s: rng.random_range(0.7..1.0),
        v: rng.random_range(0.4..0.9),
    })
}

/// A non-skin noisy background with exactly `round(p * w * h)` pixels set to
/// `planted`, at random positions. Returns the image and the exact planted
/// fraction.
pub fn skin_composite<R: Rng>(
    width: u32,
    height: u32,
    p: f64,
    planted: Rgb8,
    rng: &mut R,
) -> (RgbaImage, f64) {
    let base = non_skin_color(rng);
    let mut img = noisy_fill(width, height, base, 0.01, rng);
    let n = (width * height) as usize;
    let k = (p * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
        let at = idx[i];
        img.put_pixel(
            (at % width as usize) as u32,
            (at / width as usize) as u32,
            rgba(planted),
        );
    }
    (img, k as f64 / n as f64)
}

/// A "sign": noisy base texture of `lines` horizontal strips of height
/// `line_height`, where the last strip is drawn from a distribution whose hue
/// is shifted by `hue_shift` degrees.
pub fn spliced_sign<R: Rng>(
    width: u32,
    line_height: u32,
    lines: u32,
    base: Rgb8,
    hue_shift: f64,
    sigma: f64,
    rng: &mut R,
) -> RgbaImage {
    let b = crate::colorspace::rgb_to_hsv(base);
    let shifted = hsv_to_rgb(Hsv {
        h: crate::colorspace::wrap_degrees(b.h + hue_shift),
        ..b
    });
    let height = line_height * lines;
    RgbaImage::from_fn(width, height, |_, y| {
        let c = if y >= line_height * (lines - 1) {
            shifted
        } else {
            base
        };
        rgba(jitter(c, sigma, rng))
    })
}
