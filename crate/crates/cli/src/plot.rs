//! Figure output: palette swatch strips (PNG) and pixel-cloud scatter plots
//! (SVG).
//!
//! The scatter uses a fixed oblique projection: azimuth 30 degrees about the
//! vertical axis, elevation 20 degrees. HSV clouds are drawn in the
//! cylindrical embedding `(s cos h, s sin h, v)`; RGB clouds in the unit cube
//! recentred so `(r, g)` spans `[-1, 1]` and `b` is vertical.

use std::fmt::Write as _;

use chromaq::colorspace::{hsv_to_cyl, hsv_to_rgb, Hsv};
use chromaq::quantize::Palette;
use image::{Rgba, RgbaImage};

pub const SWATCH_CELL: u32 = 64;
pub const MAX_SCATTER_POINTS: usize = 5000;
pub const AZIMUTH_DEG: f64 = 30.0;
pub const ELEVATION_DEG: f64 = 20.0;
const CANVAS: f64 = 600.0;
const SCALE: f64 = 200.0;
const OUTLINE: Rgba<u8> = Rgba([0, 200, 0, 255]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotSpace {
    Hsv,
    Rgb,
}

type Point3 = (f64, f64, f64);

/// One cell per palette entry, heaviest on the left; `highlight[i]` draws a
/// green outline around cell `i`.
pub fn swatch(palette: &Palette, highlight: &[bool]) -> RgbaImage {
    let n = palette.entries.len() as u32;
    let mut img = RgbaImage::new(SWATCH_CELL * n, SWATCH_CELL);
    for (i, e) in palette.entries.iter().enumerate() {
        let c = e.rgb();
        let x0 = i as u32 * SWATCH_CELL;
        let outlined = highlight.get(i).copied().unwrap_or(false);
        for y in 0..SWATCH_CELL {
            for x in 0..SWATCH_CELL {
                let border = x < 4 || y < 4 || x >= SWATCH_CELL - 4 || y >= SWATCH_CELL - 4;
                let px = if outlined && border {
                    OUTLINE
                } else {
                    Rgba([c.r, c.g, c.b, 255])
                };
                img.put_pixel(x0 + x, y, px);
            }
        }
    }
    img
}

fn embed(c: Hsv, space: PlotSpace) -> (f64, f64, f64) {
    match space {
        PlotSpace::Hsv => {
            let p = hsv_to_cyl(c);
            (p.x, p.y, p.z)
        }
        PlotSpace::Rgb => {
            let rgb = hsv_to_rgb(c);
            let unit = |v: u8| f64::from(v) / 255.0;
            (
                unit(rgb.r) * 2.0 - 1.0,
                unit(rgb.g) * 2.0 - 1.0,
                unit(rgb.b),
            )
        }
    }
}

fn project((x, y, z): (f64, f64, f64)) -> (f64, f64) {
    let (az, el) = (AZIMUTH_DEG.to_radians(), ELEVATION_DEG.to_radians());
    let u = x * az.cos() - y * az.sin();
    let depth = x * az.sin() + y * az.cos();
    let v = depth * el.sin() + (z - 0.5) * 2.0 * el.cos();
    (CANVAS / 2.0 + u * SCALE, CANVAS / 2.0 - v * SCALE)
}

pub fn scatter_svg(pixels: &[Hsv], palette: &Palette, space: PlotSpace) -> String {
    let step = pixels.len().div_ceil(MAX_SCATTER_POINTS).max(1);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    let axes: [(Point3, Point3); 3] = match space {
        PlotSpace::Hsv => [
            ((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
            ((-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
            ((0.0, -1.0, 0.0), (0.0, 1.0, 0.0)),
        ],
        PlotSpace::Rgb => [
            ((-1.0, -1.0, 0.0), (1.0, -1.0, 0.0)),
            ((-1.0, -1.0, 0.0), (-1.0, 1.0, 0.0)),
            ((-1.0, -1.0, 0.0), (-1.0, -1.0, 1.0)),
        ],
    };
    for (a, b) in axes {
        let (p, q) = (project(a), project(b));
        let _ = writeln!(
            svg,
            r##"<line class="axis" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888888"/>"##,
            p.0, p.1, q.0, q.1
        );
    }
    for c in pixels.iter().step_by(step) {
        let (x, y) = project(embed(*c, space));
        let _ = writeln!(
            svg,
            r##"<circle class="px" cx="{x:.2}" cy="{y:.2}" r="1.5" fill="#{}"/>"##,
            hsv_to_rgb(*c).to_hex()
        );
    }
    for e in &palette.entries {
        let (x, y) = project(embed(e.centroid, space));
        let _ = writeln!(
            svg,
            r##"<circle class="centroid" cx="{x:.2}" cy="{y:.2}" r="9" fill="#{}" stroke="#000000" stroke-width="2"/>"##,
            e.rgb().to_hex()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swatch_outline_and_size() {
        let p = Palette::from_weighted([
            (
                Hsv {
                    h: 0.0,
                    s: 1.0,
                    v: 1.0,
                },
                0.7,
            ),
            (
                Hsv {
                    h: 240.0,
                    s: 1.0,
                    v: 1.0,
                },
                0.3,
            ),
        ])
        .unwrap();
        let img = swatch(&p, &[false, true]);
        assert_eq!(img.dimensions(), (128, 64));
        assert_eq!(*img.get_pixel(0, 0), Rgba([255, 0, 0, 255]));
        assert_eq!(*img.get_pixel(64, 0), OUTLINE);
        assert_eq!(*img.get_pixel(96, 32), Rgba([0, 0, 255, 255]));
    }

    #[test]
    fn scatter_caps_points() {
        let px = vec![
            Hsv {
                h: 10.0,
                s: 0.5,
                v: 0.5
            };
            12_000
        ];
        let p = Palette::from_weighted([(px[0], 1.0)]).unwrap();
        let svg = scatter_svg(&px, &p, PlotSpace::Hsv);
        let n = svg.matches(r#"class="px""#).count();
        assert!(n <= MAX_SCATTER_POINTS && n > 0);
        assert_eq!(svg.matches(r#"class="centroid""#).count(), 1);
    }

    #[test]
    fn spaces_differ_in_geometry() {
        let px = vec![Hsv {
            h: 200.0,
            s: 0.8,
            v: 0.6,
        }];
        let p = Palette::from_weighted([(px[0], 1.0)]).unwrap();
        assert_ne!(
            scatter_svg(&px, &p, PlotSpace::Hsv),
            scatter_svg(&px, &p, PlotSpace::Rgb)
        );
    }
}
