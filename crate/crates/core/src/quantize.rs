//! K-means color quantization in the HSV cylinder.

use image::RgbaImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colorspace::{cyl_to_hsv, hsv_to_cyl, rgb_to_hsv, CylPoint, Hsv, Rgb8};
use crate::error::{Error, Result};
use crate::transport;

/// Pixels with alpha below this are dropped when building a cloud.
pub const ALPHA_CUTOFF: u8 = 128;

/// An ordered list of HSV pixels taken row-major from an image.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelCloud {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Hsv>,
    /// Pixel count of the raster before subsampling or alpha filtering.
    pub source_pixel_count: u64,
}

impl PixelCloud {
    pub fn new(width: u32, height: u32, pixels: Vec<Hsv>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(
                "cloud dimensions must be positive".into(),
            ));
        }
        if pixels.is_empty() {
            return Err(Error::EmptyImage);
        }
        if let Some(bad) = pixels.iter().find(|p| !p.is_valid()) {
            return Err(Error::InvalidConfig(format!("invalid pixel {bad:?}")));
        }
        Ok(Self {
            width,
            height,
            pixels,
            source_pixel_count: u64::from(width) * u64::from(height),
        })
    }

    /// A cloud of every pixel of `img`, alpha ignored.
    pub fn dense(img: &RgbaImage) -> Result<Self> {
        let pixels = img
            .pixels()
            .map(|p| rgb_to_hsv(Rgb8::new(p[0], p[1], p[2])))
            .collect();
        Self::new(img.width(), img.height(), pixels)
    }

    /// A cloud of `img` capped at `max_pixels`, with transparent pixels dropped.
    pub fn from_image(img: &RgbaImage, max_pixels: usize) -> Result<Self> {
        let (width, height) = img.dimensions();
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        let total = width as usize * height as usize;
        let step = subsample_stride(total, max_pixels);
        let raw = img.as_raw();
        let pixels: Vec<Hsv> = (0..total)
            .step_by(step)
            .filter_map(|i| {
                let px = &raw[4 * i..4 * i + 4];
                (px[3] >= ALPHA_CUTOFF).then(|| rgb_to_hsv(Rgb8::new(px[0], px[1], px[2])))
            })
            .collect();
        if pixels.is_empty() {
            return Err(Error::EmptyImage);
        }
        Ok(Self {
            width,
            height,
            pixels,
            source_pixel_count: total as u64,
        })
    }

    /// True when every source pixel is present, in row-major order.
    pub fn is_dense(&self) -> bool {
        self.pixels.len() as u64 == self.source_pixel_count
            && self.source_pixel_count == u64::from(self.width) * u64::from(self.height)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Stride-subsampled copy holding at most `max_pixels` pixels.
    pub fn subsample(&self, max_pixels: usize) -> Self {
        let step = subsample_stride(self.pixels.len(), max_pixels);
        if step == 1 {
            return self.clone();
        }
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().step_by(step).copied().collect(),
            source_pixel_count: self.source_pixel_count,
        }
    }
}

/// Every `ceil(total / max)`-th pixel is kept once `total` exceeds `max`.
pub fn subsample_stride(total: usize, max_pixels: usize) -> usize {
    if max_pixels == 0 || total <= max_pixels {
        1
    } else {
        total.div_ceil(max_pixels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantizeConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid move, cylinder units.
    pub tol: f64,
    pub n_init: usize,
    pub max_pixels: usize,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            max_iter: 100,
            tol: 1e-4,
            n_init: 5,
            max_pixels: 100_000,
        }
    }
}

impl QuantizeConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.n_init == 0 {
            return Err(Error::InvalidConfig("n_init must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub centroid: Hsv,
    pub weight: f64,
}

impl PaletteEntry {
    pub fn rgb(&self) -> Rgb8 {
        self.centroid.to_rgb()
    }
}

/// Weighted centroids summarizing an image, heaviest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub entries: Vec<PaletteEntry>,
    pub effective_k: usize,
}

impl Palette {
    /// Normalizes the weights, drops empty entries and sorts by weight
    /// descending, then `(h, s, v)` ascending.
    pub fn from_weighted(entries: impl IntoIterator<Item = (Hsv, f64)>) -> Result<Self> {
        let mut entries: Vec<PaletteEntry> = entries
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(centroid, weight)| PaletteEntry { centroid, weight })
            .collect();
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        if entries.is_empty() || !total.is_finite() {
            return Err(Error::InvalidConfig(
                "palette needs at least one positive weight".into(),
            ));
        }
        for e in &mut entries {
            e.weight /= total;
        }
        entries.sort_by(|a, b| {
            b.weight
                .total_cmp(&a.weight)
                .then_with(|| a.centroid.lex_cmp(&b.centroid))
        });
        let effective_k = entries.len();
        Ok(Self {
            entries,
            effective_k,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn points(&self) -> Vec<CylPoint> {
        self.entries
            .iter()
            .map(|e| hsv_to_cyl(e.centroid))
            .collect()
    }

    fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        for (a, b) in self.entries.iter().zip(&other.entries) {
            let ord = a
                .weight
                .total_cmp(&b.weight)
                .then_with(|| a.centroid.lex_cmp(&b.centroid));
            if ord.is_ne() {
                return ord;
            }
        }
        self.entries.len().cmp(&other.entries.len())
    }
}

/// Result of a k-means fit, with the objective that selected it.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    pub palette: Palette,
    /// Weighted within-cluster sum of squares, averaged per pixel.
    pub inertia: f64,
    /// Restart that produced the palette.
    pub restart: usize,
    pub iterations: usize,
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbaImage> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgba8())
        .map_err(|e| Error::Decode(e.to_string()))
}

/// Decodes `image_bytes` and builds the cloud k-means runs on.
pub fn load_pixels(image_bytes: &[u8], config: &QuantizeConfig) -> Result<PixelCloud> {
    let img = decode_image(image_bytes)?;
    PixelCloud::from_image(&img, config.max_pixels)
}

pub fn kmeans_palette(cloud: &PixelCloud, config: &QuantizeConfig) -> Result<Palette> {
    kmeans(cloud, config).map(|q| q.palette)
}

/// Lloyd's algorithm with k-means++ seeding over `config.n_init` restarts.
///
/// Pixels are first collapsed into distinct colors with multiplicities and
/// sorted, so the fit does not depend on pixel order.
pub fn kmeans(cloud: &PixelCloud, config: &QuantizeConfig) -> Result<Quantization> {
    config.validate()?;
    if cloud.pixels.is_empty() {
        return Err(Error::EmptyImage);
    }
    let distinct = distinct_colors(&cloud.pixels);
    let total = cloud.pixels.len() as f64;

    if distinct.len() <= config.k {
        let palette =
            Palette::from_weighted(distinct.iter().map(|(c, n)| (*c, *n as f64 / total)))?;
        return Ok(Quantization {
            palette,
            inertia: 0.0,
            restart: 0,
            iterations: 0,
        });
    }

    let points: Vec<CylPoint> = distinct.iter().map(|(c, _)| hsv_to_cyl(*c)).collect();
    let weights: Vec<f64> = distinct.iter().map(|(_, n)| *n as f64).collect();

    let mut best: Option<Fit> = None;
    for restart in 0..config.n_init {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64));
        let init = plus_plus_init(&points, &weights, config.k, &mut rng);
        let fit = lloyd(&points, &weights, init, config);
        // Strict comparison keeps the lowest restart index on ties.
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(Fit { restart, ..fit });
        }
    }
    let best = best.expect("n_init >= 1");
    let palette = Palette::from_weighted(
        best.centroids
            .iter()
            .zip(&best.cluster_weight)
            .map(|(c, w)| (cyl_to_hsv(*c), *w / total)),
    )?;
    Ok(Quantization {
        palette,
        inertia: best.objective / total,
        restart: best.restart,
        iterations: best.iterations,
    })
}

/// Distinct colors with their pixel counts, sorted by bit pattern.
fn distinct_colors(pixels: &[Hsv]) -> Vec<(Hsv, usize)> {
    let mut keys: Vec<[u64; 3]> = pixels
        .iter()
        .map(|p| [p.h.to_bits(), p.s.to_bits(), p.v.to_bits()])
        .collect();
    keys.sort_unstable();
    let mut out: Vec<(Hsv, usize)> = Vec::new();
    let mut last: Option<[u64; 3]> = None;
    for key in keys {
        if last == Some(key) {
            out.last_mut().unwrap().1 += 1;
        } else {
            let c = Hsv {
                h: f64::from_bits(key[0]),
                s: f64::from_bits(key[1]),
                v: f64::from_bits(key[2]),
            };
            out.push((c, 1));
            last = Some(key);
        }
    }
    out
}

struct Fit {
    centroids: Vec<CylPoint>,
    cluster_weight: Vec<f64>,
    objective: f64,
    restart: usize,
    iterations: usize,
}

/// Draws an index with probability proportional to `mass`.
fn weighted_draw(mass: &[f64], rng: &mut ChaCha8Rng) -> Option<usize> {
    let total: f64 = mass.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &m) in mass.iter().enumerate() {
        acc += m;
        if target < acc {
            return Some(i);
        }
    }
    mass.iter().rposition(|&m| m > 0.0)
}

/// Greedy k-means++: each new center is the best of a few candidates drawn
/// proportionally to weighted squared distance.
fn plus_plus_init(
    points: &[CylPoint],
    weights: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<CylPoint> {
    let trials = 2 + (k as f64).ln().floor() as usize;
    let first = weighted_draw(weights, rng).unwrap_or(0);
    let mut centers = vec![points[first]];
    let mut nearest: Vec<f64> = points.iter().map(|p| p.dist2(&points[first])).collect();
    while centers.len() < k {
        let mass: Vec<f64> = nearest.iter().zip(weights).map(|(d, w)| d * w).collect();
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for _ in 0..trials {
            let candidate = match weighted_draw(&mass, rng) {
                Some(i) => i,
                // Every point coincides with a chosen center.
                None => nearest.iter().position(|&d| d > 0.0).unwrap_or(0),
            };
            let c = points[candidate];
            let updated: Vec<f64> = nearest
                .iter()
                .zip(points)
                .map(|(d, p)| d.min(p.dist2(&c)))
                .collect();
            let potential: f64 = updated.iter().zip(weights).map(|(d, w)| d * w).sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, updated, candidate));
            }
        }
        let (_, updated, chosen) = best.expect("at least one trial");
        centers.push(points[chosen]);
        nearest = updated;
    }
    centers
}

/// Nearest centroid and its squared distance; ties go to the lowest index.
#[inline]
fn nearest_centroid(p: &CylPoint, centroids: &[CylPoint]) -> (usize, f64) {
    let mut best = (0, p.dist2(&centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = p.dist2(c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(
    points: &[CylPoint],
    weights: &[f64],
    centroids: &[CylPoint],
    labels: &mut [usize],
    dists: &mut [f64],
) -> f64 {
    let mut objective = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest_centroid(p, centroids);
        labels[i] = j;
        dists[i] = d;
        objective += weights[i] * d;
    }
    objective
}

fn lloyd(
    points: &[CylPoint],
    weights: &[f64],
    init: Vec<CylPoint>,
    config: &QuantizeConfig,
) -> Fit {
    let k = init.len();
    let mut centroids = init;
    let mut labels = vec![0usize; points.len()];
    let mut dists = vec![0.0; points.len()];
    let mut previous = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..config.max_iter {
        iterations += 1;
        let objective = assign(points, weights, &centroids, &mut labels, &mut dists);
        debug_assert!(
            objective <= previous + 1e-9 * previous.abs().max(1.0),
            "k-means objective rose from {previous} to {objective}"
        );
        previous = objective;

        let (sums, mass) = centroids_of(points, weights, &labels, k);
        let mut next: Vec<CylPoint> = (0..k)
            .map(|j| {
                if mass[j] > 0.0 {
                    CylPoint::new(
                        sums[j][0] / mass[j],
                        sums[j][1] / mass[j],
                        sums[j][2] / mass[j],
                    )
                } else {
                    centroids[j]
                }
            })
            .collect();

        // Empty clusters take the point farthest from its own centroid.
        for j in (0..k).filter(|&j| mass[j] == 0.0) {
            let far = (0..points.len())
                .filter(|&i| dists[i] > 0.0)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                next[j] = points[i];
                dists[i] = 0.0;
            }
        }

        let movement = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| a.dist(b))
            .fold(0.0, f64::max);
        centroids = next;
        if movement < config.tol {
            break;
        }
    }

    assign(points, weights, &centroids, &mut labels, &mut dists);
    if hartigan(
        points,
        weights,
        &mut labels,
        &mut centroids,
        config.max_iter,
    ) {
        iterations += 1;
    }
    let objective = assign(points, weights, &centroids, &mut labels, &mut dists);
    debug_assert!(objective <= previous + 1e-9 * previous.abs().max(1.0));
    let mut cluster_weight = vec![0.0; k];
    for (&l, &w) in labels.iter().zip(weights) {
        cluster_weight[l] += w;
    }
    Fit {
        centroids,
        cluster_weight,
        objective,
        restart: 0,
        iterations,
    }
}

fn centroids_of(
    points: &[CylPoint],
    weights: &[f64],
    labels: &[usize],
    k: usize,
) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut sums = vec![[0.0f64; 3]; k];
    let mut mass = vec![0.0f64; k];
    for ((p, &w), &l) in points.iter().zip(weights).zip(labels) {
        sums[l][0] += w * p.x;
        sums[l][1] += w * p.y;
        sums[l][2] += w * p.z;
        mass[l] += w;
    }
    (sums, mass)
}

/// Single-point transfer refinement after Lloyd converges: a color moves to
/// another cluster whenever that strictly lowers the objective. Returns
/// whether anything moved.
fn hartigan(
    points: &[CylPoint],
    weights: &[f64],
    labels: &mut [usize],
    centroids: &mut [CylPoint],
    max_passes: usize,
) -> bool {
    let k = centroids.len();
    let mut moved_any = false;
    for _ in 0..max_passes {
        let (mut sums, mut mass) = centroids_of(points, weights, labels, k);
        let mean = |sum: &[f64; 3], m: f64| CylPoint::new(sum[0] / m, sum[1] / m, sum[2] / m);
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let w = weights[i];
            let from = labels[i];
            if mass[from] <= w {
                continue;
            }
            let own = mean(&sums[from], mass[from]);
            let removal = mass[from] * w / (mass[from] - w) * p.dist2(&own);
            let mut best: Option<(usize, f64)> = None;
            for to in (0..k).filter(|&j| j != from && mass[j] > 0.0) {
                let gain = mass[to] * w / (mass[to] + w) * p.dist2(&mean(&sums[to], mass[to]));
                if best.is_none_or(|b| gain < b.1) {
                    best = Some((to, gain));
                }
            }
            if let Some((to, addition)) = best {
                if addition < removal * (1.0 - 1e-12) {
                    for (axis, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                        sums[from][axis] -= w * v;
                        sums[to][axis] += w * v;
                    }
                    mass[from] -= w;
                    mass[to] += w;
                    labels[i] = to;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
        moved_any = true;
        let (sums, mass) = centroids_of(points, weights, labels, k);
        for j in 0..k {
            if mass[j] > 0.0 {
                centroids[j] = mean(&sums[j], mass[j]);
            }
        }
    }
    moved_any
}

/// Earth mover's distance between two palettes, ground cost Euclidean in
/// the HSV cylinder.
pub fn palette_distance(a: &Palette, b: &Palette) -> f64 {
    // Solve in a fixed orientation so the result is bitwise symmetric.
    let (a, b) = if a.canonical_cmp(b).is_gt() {
        (b, a)
    } else {
        (a, b)
    };
    let pa = a.points();
    let pb = b.points();
    let cost: Vec<Vec<f64>> = pa
        .iter()
        .map(|p| pb.iter().map(|q| p.dist(q)).collect())
        .collect();
    transport::solve(&a.weights(), &b.weights(), &cost).cost
}
