use std::hint::black_box;

use chromaq::colorspace::{rgb_to_hsv, Rgb8};
use chromaq::corpus::{analyze_bytes, AnalysisConfig};
use chromaq::quantize::{kmeans_palette, palette_distance, PixelCloud, QuantizeConfig};
use chromaq::symbol::{match_symbols_image, signature_from_image, SymbolConfig, SymbolSignature};
use chromaq::testkit::{clutter, encode_png, paste, synthetic_logos};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn signatures(n: usize) -> Vec<SymbolSignature> {
    let cfg = QuantizeConfig::default();
    synthetic_logos()
        .iter()
        .take(n)
        .map(|l| signature_from_image(&l.name, &encode_png(&l.image), &cfg).unwrap())
        .collect()
}

fn colorspace(c: &mut Criterion) {
    c.bench_function("rgb_to_hsv 64k colors", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 0..65_536u32 {
                let [r, g, bl, _] = (i * 257).to_le_bytes();
                acc += rgb_to_hsv(black_box(Rgb8::new(r, g, bl))).h;
            }
            acc
        })
    });
}

fn quantize(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cloud = PixelCloud::dense(&clutter(256, 256, &mut rng)).unwrap();
    let cfg = QuantizeConfig::default();
    c.bench_function("kmeans_palette 256x256 k=5", |b| {
        b.iter(|| kmeans_palette(black_box(&cloud), &cfg).unwrap())
    });

    let palettes: Vec<_> = (0..2)
        .map(|_| {
            kmeans_palette(
                &PixelCloud::dense(&clutter(64, 64, &mut rng)).unwrap(),
                &cfg,
            )
            .unwrap()
        })
        .collect();
    c.bench_function("palette_distance k=5", |b| {
        b.iter(|| palette_distance(black_box(&palettes[0]), black_box(&palettes[1])))
    });
}

fn symbols(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut img = clutter(512, 512, &mut rng);
    paste(&mut img, &synthetic_logos()[0].image, 192, 256);
    let sigs = signatures(5);
    let cfg = SymbolConfig::default();
    c.bench_function("match_symbols_image 512x512 x5", |b| {
        b.iter(|| match_symbols_image(black_box(&img), &sigs, &cfg))
    });
}

fn pipeline(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bytes = encode_png(&clutter(256, 256, &mut rng));
    let cfg = AnalysisConfig {
        signatures: signatures(3),
        ..Default::default()
    };
    c.bench_function("analyze_bytes 256x256", |b| {
        b.iter(|| analyze_bytes("bench.png", black_box(&bytes), &cfg))
    });
}

criterion_group!(benches, colorspace, quantize, symbols, pipeline);
criterion_main!(benches);
