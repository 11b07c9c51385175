//! Batch analysis of image directories: per-image records, corpus summary,
//! palette-based k-medoids grouping, coder samples and flag evaluation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::monk::{self, flag_skin, MonkScaleConfig, SkinFlagReport};
use crate::quantize::{
    self, kmeans_palette, palette_distance, Palette, PixelCloud, QuantizeConfig,
};
use crate::symbol::{match_symbols_image, SymbolConfig, SymbolFlag, SymbolSignature};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const SUPPORTED_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "gif", "bmp", "webp"];
pub const HUE_BINS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub quantize: QuantizeConfig,
    pub monk: MonkScaleConfig,
    pub signatures: Vec<SymbolSignature>,
    pub symbol: SymbolConfig,
    /// Worker pool width for `scan`.
    pub workers: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            quantize: QuantizeConfig::default(),
            monk: MonkScaleConfig::default(),
            signatures: Vec::new(),
            symbol: SymbolConfig::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStatus {
    Ok,
    DecodeFailed,
    Empty,
}

/// One analyzed image. Analysis fields are present exactly when
/// `status == ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    /// Path relative to the scanned directory, `/`-separated.
    pub path: String,
    /// SHA-256 of the file bytes, lowercase hex.
    pub content_digest: String,
    pub status: ImageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palette: Option<Palette>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skin: Option<SkinFlagReport>,
    /// Monk tone matched by each palette centroid, in palette order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skin_centroids: Option<Vec<Option<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_flags: Option<BTreeMap<String, SymbolFlag>>,
}

impl ImageRecord {
    pub fn is_ok(&self) -> bool {
        self.status == ImageStatus::Ok
    }

    pub fn skin_flagged(&self) -> bool {
        self.skin.as_ref().is_some_and(|s| s.flagged)
    }

    pub fn symbol_flagged(&self) -> bool {
        self.symbol_flags
            .as_ref()
            .is_some_and(|m| m.values().any(|f| f.flagged))
    }

    fn failed(path: String, digest: String, status: ImageStatus, error: String) -> Self {
        Self {
            path,
            content_digest: digest,
            status,
            error: Some(error),
            width: None,
            height: None,
            palette: None,
            skin: None,
            skin_centroids: None,
            symbol_flags: None,
        }
    }
}

pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Full per-image analysis. Failures become records, never errors.
pub fn analyze_bytes(path: &str, bytes: &[u8], config: &AnalysisConfig) -> ImageRecord {
    let digest = content_digest(bytes);
    let img = match quantize::decode_image(bytes) {
        Ok(img) => img,
        Err(e) => {
            return ImageRecord::failed(
                path.into(),
                digest,
                ImageStatus::DecodeFailed,
                e.to_string(),
            )
        }
    };
    let cloud = match PixelCloud::from_image(&img, config.quantize.max_pixels) {
        Ok(c) => c,
        Err(e) => {
            return ImageRecord::failed(path.into(), digest, ImageStatus::Empty, e.to_string())
        }
    };
    let palette = match kmeans_palette(&cloud, &config.quantize) {
        Ok(p) => p,
        Err(e) => {
            return ImageRecord::failed(path.into(), digest, ImageStatus::Empty, e.to_string())
        }
    };
    let skin = flag_skin(&cloud, &config.monk);
    let skin_centroids = monk::palette_band_matches(&palette, &config.monk);
    let symbol_flags = match_symbols_image(&img, &config.signatures, &config.symbol).flags;
    ImageRecord {
        path: path.into(),
        content_digest: digest,
        status: ImageStatus::Ok,
        error: None,
        width: Some(img.width()),
        height: Some(img.height()),
        palette: Some(palette),
        skin: Some(skin),
        skin_centroids: Some(skin_centroids),
        symbol_flags: Some(symbol_flags),
    }
}

fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| SUPPORTED_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn relative_label(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Supported image files under `dir`, recursively, sorted by relative path.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    std::fs::read_dir(dir).map_err(|source| Error::DirectoryUnreadable {
        path: dir.into(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).follow_links(false) {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                log::warn!("skipping unreadable entry: {e}");
                continue;
            }
        };
        if entry.file_type().is_file() && is_supported(entry.path()) {
            files.push((relative_label(dir, entry.path()), entry.into_path()));
        }
    }
    files.sort();
    Ok(files)
}

pub fn scan(dir: &Path, config: &AnalysisConfig) -> Result<Vec<ImageRecord>> {
    let files = list_images(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let mut records: Vec<ImageRecord> = pool.install(|| {
        files
            .par_iter()
            .map(|(label, path)| {
                let mut bytes = Vec::new();
                match std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)) {
                    Ok(_) => analyze_bytes(label, &bytes, config),
                    Err(e) => ImageRecord::failed(
                        label.clone(),
                        content_digest(&bytes),
                        ImageStatus::DecodeFailed,
                        e.to_string(),
                    ),
                }
            })
            .collect()
    });
    records.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(records)
}

/// The on-disk report: a versioned wrapper around the record array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub records: Vec<ImageRecord>,
}

impl Report {
    pub fn new(records: Vec<ImageRecord>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            records,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported report schema {}",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub n_images: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub n_skin_flagged: usize,
    pub symbol_match_counts: BTreeMap<String, usize>,
    /// Palette weight per 30-degree hue bin, summed over images.
    pub hue_histogram: Vec<f64>,
    pub mean_saturation: f64,
    pub mean_value: f64,
}

pub fn summarize(records: &[ImageRecord]) -> CorpusSummary {
    let mut hue_histogram = vec![0.0; HUE_BINS];
    let mut symbol_match_counts = BTreeMap::new();
    let (mut sat, mut val) = (0.0, 0.0);
    let mut n_ok = 0;
    let mut n_skin_flagged = 0;
    for r in records.iter().filter(|r| r.is_ok()) {
        n_ok += 1;
        n_skin_flagged += usize::from(r.skin_flagged());
        if let Some(p) = &r.palette {
            for e in &p.entries {
                let bin = ((e.centroid.h / 30.0) as usize).min(HUE_BINS - 1);
                hue_histogram[bin] += e.weight;
                sat += e.weight * e.centroid.s;
                val += e.weight * e.centroid.v;
            }
        }
        for (name, flag) in r.symbol_flags.iter().flatten() {
            *symbol_match_counts.entry(name.clone()).or_insert(0) += usize::from(flag.flagged);
        }
    }
    let denom = n_ok.max(1) as f64;
    CorpusSummary {
        n_images: records.len(),
        n_ok,
        n_failed: records.len() - n_ok,
        n_skin_flagged,
        symbol_match_counts,
        hue_histogram,
        mean_saturation: sat / denom,
        mean_value: val / denom,
    }
}

impl CorpusSummary {
    /// Two-column `metric,value` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "n_images,{}", self.n_images);
        let _ = writeln!(out, "n_ok,{}", self.n_ok);
        let _ = writeln!(out, "n_failed,{}", self.n_failed);
        let _ = writeln!(out, "n_skin_flagged,{}", self.n_skin_flagged);
        for (name, count) in &self.symbol_match_counts {
            let _ = writeln!(out, "symbol_matches:{},{count}", csv_field(name));
        }
        for (i, w) in self.hue_histogram.iter().enumerate() {
            let _ = writeln!(out, "hue_{:03}_{:03},{w}", i * 30, (i + 1) * 30);
        }
        let _ = writeln!(out, "mean_saturation,{}", self.mean_saturation);
        let _ = writeln!(out, "mean_value,{}", self.mean_value);
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Symmetric pairwise distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| if j > i { f(i, j) } else { 0.0 }).collect())
            .collect();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                data[i * n + j] = rows[i][j];
                data[j * n + i] = rows[i][j];
            }
        }
        Self { n, data }
    }

    pub fn palettes(palettes: &[&Palette]) -> Self {
        Self::from_fn(palettes.len(), |i, j| {
            palette_distance(palettes[i], palettes[j])
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Medoids {
    /// Medoid point indices, ascending; group `g` is `medoids[g]`.
    pub medoids: Vec<usize>,
    pub labels: Vec<usize>,
    pub cost: f64,
    pub swaps: usize,
}

/// Sum over points of the distance to the nearest medoid.
pub fn medoid_cost(d: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..d.len())
        .map(|j| {
            medoids
                .iter()
                .map(|&m| d.get(j, m))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// PAM: greedy BUILD then best-improvement SWAP until no swap helps.
///
/// `seed` fixes the candidate visiting order, which only matters for ties.
pub fn pam(d: &DistanceMatrix, g: usize, seed: u64) -> Result<Medoids> {
    let n = d.len();
    if g == 0 {
        return Err(Error::InvalidConfig(
            "group count must be at least 1".into(),
        ));
    }
    if n < g {
        return Err(Error::TooFewImages {
            needed: g,
            found: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut medoids: Vec<usize> = Vec::with_capacity(g);
    let mut is_medoid = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    while medoids.len() < g {
        let mut best: Option<(usize, f64)> = None;
        for &c in order.iter().filter(|&&c| !is_medoid[c]) {
            let score = if medoids.is_empty() {
                -(0..n).map(|j| d.get(c, j)).sum::<f64>()
            } else {
                (0..n)
                    .map(|j| (nearest[j] - d.get(c, j)).max(0.0))
                    .sum::<f64>()
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((c, score));
            }
        }
        let (c, _) = best.expect("a non-medoid candidate exists");
        medoids.push(c);
        is_medoid[c] = true;
        for (j, near) in nearest.iter_mut().enumerate() {
            *near = near.min(d.get(j, c));
        }
    }

    let mut cost = medoid_cost(d, &medoids);
    let mut swaps = 0;
    loop {
        // Nearest and second-nearest medoid distance per point.
        let mut first = vec![(usize::MAX, f64::INFINITY); n];
        let mut second = vec![f64::INFINITY; n];
        for j in 0..n {
            for (slot, &m) in medoids.iter().enumerate() {
                let dj = d.get(j, m);
                if dj < first[j].1 {
                    second[j] = first[j].1;
                    first[j] = (slot, dj);
                } else if dj < second[j] {
                    second[j] = dj;
                }
            }
        }
        let mut best: Option<(usize, usize, f64)> = None;
        let threshold = cost - 1e-12 * cost.max(1.0);
        for slot in 0..g {
            for &o in order.iter().filter(|&&o| !is_medoid[o]) {
                let trial: f64 = (0..n)
                    .map(|j| {
                        let keep = if first[j].0 == slot {
                            second[j]
                        } else {
                            first[j].1
                        };
                        keep.min(d.get(j, o))
                    })
                    .sum();
                if trial < threshold && best.is_none_or(|(_, _, c)| trial < c) {
                    best = Some((slot, o, trial));
                }
            }
        }
        let Some((slot, o, _)) = best else { break };
        is_medoid[medoids[slot]] = false;
        is_medoid[o] = true;
        medoids[slot] = o;
        let next = medoid_cost(d, &medoids);
        debug_assert!(next <= cost, "PAM cost rose from {cost} to {next}");
        cost = next;
        swaps += 1;
    }

    medoids.sort_unstable();
    let labels = (0..n)
        .map(|j| {
            (0..g)
                .min_by(|&a, &b| {
                    d.get(j, medoids[a])
                        .total_cmp(&d.get(j, medoids[b]))
                        .then(a.cmp(&b))
                })
                .unwrap()
        })
        .collect();
    Ok(Medoids {
        medoids,
        labels,
        cost,
        swaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub g: usize,
    /// Image path to group id.
    pub groups: BTreeMap<String, usize>,
    /// Medoid image path of each group.
    pub medoids: Vec<String>,
    pub total_cost: f64,
}

impl ClusterAssignment {
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.g];
        for &gid in self.groups.values() {
            sizes[gid] += 1;
        }
        sizes
    }
}

/// Groups ok records by palette similarity with PAM k-medoids.
pub fn cluster_corpus(records: &[ImageRecord], g: usize, seed: u64) -> Result<ClusterAssignment> {
    let ok: Vec<(&str, &Palette)> = records
        .iter()
        .filter_map(|r| {
            r.palette
                .as_ref()
                .filter(|_| r.is_ok())
                .map(|p| (r.path.as_str(), p))
        })
        .collect();
    if g == 0 {
        return Err(Error::InvalidConfig(
            "group count must be at least 1".into(),
        ));
    }
    if ok.len() < g {
        return Err(Error::TooFewImages {
            needed: g,
            found: ok.len(),
        });
    }
    let palettes: Vec<&Palette> = ok.iter().map(|(_, p)| *p).collect();
    let d = DistanceMatrix::palettes(&palettes);
    let fit = pam(&d, g, seed)?;
    Ok(ClusterAssignment {
        g,
        groups: ok
            .iter()
            .zip(&fit.labels)
            .map(|((p, _), &l)| (p.to_string(), l))
            .collect(),
        medoids: fit.medoids.iter().map(|&m| ok[m].0.to_string()).collect(),
        total_cost: fit.cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleStrategy {
    Uniform,
    StratifiedCluster,
    FlaggedOnly,
}

impl std::str::FromStr for SampleStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "stratified-cluster" => Ok(Self::StratifiedCluster),
            "flagged-only" => Ok(Self::FlaggedOnly),
            _ => Err(Error::Parse(format!("unknown sample strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sample {
    pub paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Integer quotas proportional to `sizes`, largest remainder first (ties by
/// lower index). Quotas never exceed their stratum; overflow moves to the
/// next stratum in remainder order that still has room.
pub fn proportional_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let n = n.min(total);
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| n * s / total).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        ((n * sizes[b]) % total)
            .cmp(&((n * sizes[a]) % total))
            .then(a.cmp(&b))
    });
    let mut left = n - quotas.iter().sum::<usize>();
    while left > 0 {
        let before = left;
        for &i in &order {
            if left == 0 {
                break;
            }
            if quotas[i] < sizes[i] {
                quotas[i] += 1;
                left -= 1;
            }
        }
        if before == left {
            break;
        }
    }
    quotas
}

pub fn sample(
    records: &[ImageRecord],
    assignment: Option<&ClusterAssignment>,
    n: usize,
    strategy: SampleStrategy,
    seed: u64,
) -> Result<Sample> {
    let ok: Vec<&ImageRecord> = records.iter().filter(|r| r.is_ok()).collect();
    if n > ok.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: ok.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Sample::default();
    match strategy {
        SampleStrategy::Uniform => {
            let mut paths: Vec<String> = ok.iter().map(|r| r.path.clone()).collect();
            paths.shuffle(&mut rng);
            paths.truncate(n);
            out.paths = paths;
        }
        SampleStrategy::FlaggedOnly => {
            let mut paths: Vec<String> = ok
                .iter()
                .filter(|r| r.skin_flagged() || r.symbol_flagged())
                .map(|r| r.path.clone())
                .collect();
            if paths.len() < n {
                out.warnings.push(format!(
                    "only {} flagged images available for a sample of {n}",
                    paths.len()
                ));
            }
            paths.shuffle(&mut rng);
            paths.truncate(n);
            out.paths = paths;
        }
        SampleStrategy::StratifiedCluster => {
            let assignment = assignment.ok_or_else(|| {
                Error::InvalidConfig(
                    "stratified-cluster sampling needs a cluster assignment".into(),
                )
            })?;
            let mut strata: Vec<Vec<String>> = vec![Vec::new(); assignment.g];
            for r in &ok {
                if let Some(&gid) = assignment.groups.get(&r.path) {
                    strata[gid].push(r.path.clone());
                }
            }
            let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
            let available: usize = sizes.iter().sum();
            if n > available {
                return Err(Error::SampleTooLarge {
                    requested: n,
                    available,
                });
            }
            let quotas = proportional_quotas(&sizes, n);
            for (mut members, quota) in strata.into_iter().zip(quotas) {
                members.shuffle(&mut rng);
                out.paths.extend(members.into_iter().take(quota));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Skin,
    Symbol,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub path: String,
    pub task: EvalTask,
    pub label: bool,
}

/// Reads a labels CSV with header `path,task,label`.
pub fn parse_labels(reader: impl Read) -> Result<Vec<LabelRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::ManifestParse(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "task", "label"] {
        return Err(Error::ManifestParse(format!(
            "expected header path,task,label, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::ManifestParse(e.to_string()))?;
        let line = i + 2;
        let task = match &rec[1] {
            "skin" => EvalTask::Skin,
            "symbol" => EvalTask::Symbol,
            other => {
                return Err(Error::ManifestParse(format!(
                    "line {line}: unknown task {other:?}"
                )))
            }
        };
        let label = match rec[2].to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => {
                return Err(Error::ManifestParse(format!(
                    "line {line}: bad label {other:?}"
                )))
            }
        };
        rows.push(LabelRow {
            path: rec[0].to_string(),
            task,
            label,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: EvalTask,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub n: usize,
    /// `(FP + FN) / N`.
    pub error_rate: f64,
    /// Ok records without a label for this task.
    pub unlabeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub results: Vec<EvalResult>,
    /// Manifest rows naming a path absent from the records.
    pub unmatched: usize,
    /// Manifest rows naming a record that failed analysis.
    pub skipped_failed: usize,
}

pub fn evaluate(records: &[ImageRecord], labels: &[LabelRow]) -> Evaluation {
    let by_path: HashMap<&str, &ImageRecord> =
        records.iter().map(|r| (r.path.as_str(), r)).collect();
    let mut per_task: BTreeMap<EvalTask, BTreeMap<&str, bool>> = BTreeMap::new();
    let mut unmatched = 0;
    let mut skipped_failed = 0;
    for row in labels {
        match by_path.get(row.path.as_str()) {
            None => unmatched += 1,
            Some(r) if !r.is_ok() => skipped_failed += 1,
            Some(r) => {
                per_task
                    .entry(row.task)
                    .or_default()
                    .insert(r.path.as_str(), row.label);
            }
        }
    }
    let n_ok = records.iter().filter(|r| r.is_ok()).count();
    let results = per_task
        .into_iter()
        .map(|(task, labelled)| {
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for (path, &truth) in &labelled {
                let r = by_path[path];
                let predicted = match task {
                    EvalTask::Skin => r.skin_flagged(),
                    EvalTask::Symbol => r.symbol_flagged(),
                };
                match (predicted, truth) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fn_ += 1,
                }
            }
            let n = labelled.len();
            EvalResult {
                task,
                true_positives: tp,
                false_positives: fp,
                true_negatives: tn,
                false_negatives: fn_,
                n,
                error_rate: if n == 0 {
                    0.0
                } else {
                    (fp + fn_) as f64 / n as f64
                },
                unlabeled: n_ok - n,
            }
        })
        .collect();
    Evaluation {
        results,
        unmatched,
        skipped_failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::Hsv;

    fn record(path: &str, palette: Option<Palette>, skin: bool) -> ImageRecord {
        let mut r = ImageRecord::failed(
            path.into(),
            String::new(),
            ImageStatus::DecodeFailed,
            "x".into(),
        );
        if let Some(p) = palette {
            r.status = ImageStatus::Ok;
            r.error = None;
            r.palette = Some(p);
            r.skin = Some(SkinFlagReport {
                per_tone_fraction: vec![],
                total_matched_fraction: if skin { 1.0 } else { 0.0 },
                flagged: skin,
                tau_used: 0.05,
            });
            r.symbol_flags = Some(BTreeMap::new());
        }
        r
    }

    fn solid(h: f64) -> Palette {
        Palette::from_weighted([(Hsv { h, s: 1.0, v: 1.0 }, 1.0)]).unwrap()
    }

    #[test]
    fn quotas_follow_largest_remainder() {
        assert_eq!(proportional_quotas(&[50, 30, 20], 10), vec![5, 3, 2]);
        assert_eq!(proportional_quotas(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(proportional_quotas(&[3, 3, 4], 10), vec![3, 3, 4]);
        let q = proportional_quotas(&[7, 2, 11, 5], 13);
        assert_eq!(q.iter().sum::<usize>(), 13);
    }

    #[test]
    fn red_blue_split() {
        let mut records: Vec<ImageRecord> = (0..20)
            .map(|i| record(&format!("r{i:02}"), Some(solid(0.0)), false))
            .collect();
        records.extend((0..20).map(|i| record(&format!("b{i:02}"), Some(solid(240.0)), false)));
        let a = cluster_corpus(&records, 2, 7).unwrap();
        assert_eq!(a.total_cost, 0.0);
        let red = a.groups["r00"];
        assert!(records
            .iter()
            .all(|r| (a.groups[&r.path] == red) == r.path.starts_with('r')));
        assert_eq!(a.group_sizes(), vec![20, 20]);
    }

    #[test]
    fn one_group_per_image() {
        let records: Vec<ImageRecord> = (0..6)
            .map(|i| record(&format!("p{i}"), Some(solid(i as f64 * 50.0)), false))
            .collect();
        let a = cluster_corpus(&records, 6, 0).unwrap();
        assert_eq!(a.total_cost, 0.0);
        assert_eq!(a.group_sizes(), vec![1; 6]);
        assert!(matches!(
            cluster_corpus(&records, 7, 0),
            Err(Error::TooFewImages { .. })
        ));
    }

    #[test]
    fn stratified_sampling() {
        let mut records = Vec::new();
        let mut groups = BTreeMap::new();
        for (gid, size) in [50, 30, 20].into_iter().enumerate() {
            for i in 0..size {
                let p = format!("g{gid}-{i:02}");
                groups.insert(p.clone(), gid);
                records.push(record(&p, Some(solid(0.0)), false));
            }
        }
        let a = ClusterAssignment {
            g: 3,
            groups,
            medoids: vec![],
            total_cost: 0.0,
        };
        let s = sample(&records, Some(&a), 10, SampleStrategy::StratifiedCluster, 1).unwrap();
        let count = |g: &str| s.paths.iter().filter(|p| p.starts_with(g)).count();
        assert_eq!((count("g0"), count("g1"), count("g2")), (5, 3, 2));
        assert!(matches!(
            sample(&records, None, 10, SampleStrategy::StratifiedCluster, 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn uniform_sampling_covers_everything() {
        let records: Vec<ImageRecord> = (0..12)
            .map(|i| record(&format!("p{i:02}"), Some(solid(0.0)), false))
            .collect();
        let s = sample(&records, None, 12, SampleStrategy::Uniform, 3).unwrap();
        let mut sorted = s.paths.clone();
        sorted.sort();
        assert_eq!(
            sorted,
            records.iter().map(|r| r.path.clone()).collect::<Vec<_>>()
        );
        assert_eq!(
            s,
            sample(&records, None, 12, SampleStrategy::Uniform, 3).unwrap()
        );
        assert!(matches!(
            sample(&records, None, 13, SampleStrategy::Uniform, 3),
            Err(Error::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn flagged_only_without_flags_warns() {
        let records: Vec<ImageRecord> = (0..4)
            .map(|i| record(&format!("p{i}"), Some(solid(0.0)), false))
            .collect();
        let s = sample(&records, None, 2, SampleStrategy::FlaggedOnly, 0).unwrap();
        assert!(s.paths.is_empty());
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn evaluation_counts() {
        let records = vec![
            record("a", Some(solid(0.0)), true),
            record("b", Some(solid(0.0)), false),
            record("c", Some(solid(0.0)), true),
            record("broken", None, false),
        ];
        let labels = parse_labels(
            "path,task,label\na,skin,true\nb,skin,false\nc,skin,1\nghost,skin,true\nbroken,skin,0\n"
                .as_bytes(),
        )
        .unwrap();
        let e = evaluate(&records, &labels);
        assert_eq!(e.unmatched, 1);
        assert_eq!(e.skipped_failed, 1);
        let r = &e.results[0];
        assert_eq!((r.true_positives, r.true_negatives, r.n), (2, 1, 3));
        assert_eq!(r.error_rate, 0.0);
        assert_eq!(
            r.true_positives + r.false_positives + r.true_negatives + r.false_negatives,
            r.n
        );
    }

    #[test]
    fn bad_manifests() {
        assert!(parse_labels("file,task,label\n".as_bytes()).is_err());
        assert!(parse_labels("path,task,label\na,face,true\n".as_bytes()).is_err());
        assert!(parse_labels("path,task,label\na,skin,maybe\n".as_bytes()).is_err());
    }

    #[test]
    fn summary_histogram_sums_to_ok_count() {
        let two = Palette::from_weighted([
            (
                Hsv {
                    h: 15.0,
                    s: 1.0,
                    v: 1.0,
                },
                0.25,
            ),
            (
                Hsv {
                    h: 359.0,
                    s: 0.5,
                    v: 0.5,
                },
                0.75,
            ),
        ])
        .unwrap();
        let records = vec![
            record("a", Some(two), true),
            record("b", Some(solid(200.0)), false),
            record("c", None, false),
        ];
        let s = summarize(&records);
        assert_eq!(
            (s.n_images, s.n_ok, s.n_failed, s.n_skin_flagged),
            (3, 2, 1, 1)
        );
        assert!((s.hue_histogram.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(s.hue_histogram[11], 0.75);
        assert_eq!(s.hue_histogram[6], 1.0);
        assert!(s.to_csv().starts_with("metric,value\nn_images,3\n"));
    }
}
