use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chromaq::colorspace::Rgb8;
use chromaq::testkit::{clutter, encode_png, noisy_fill, paste, rgba, solid, synthetic_logos};
use image::RgbaImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn chromaq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chromaq"))
        .args(args)
        .env_remove("CHROMAQ_CONFIG")
        .output()
        .expect("spawn chromaq")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write_png(dir: &Path, name: &str, img: &RgbaImage) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, encode_png(img)).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn three_band_image() -> RgbaImage {
    let colors = [
        Rgb8::new(255, 0, 0),
        Rgb8::new(0, 0, 255),
        Rgb8::new(0, 200, 0),
    ];
    RgbaImage::from_fn(30, 30, |_, y| rgba(colors[(y / 10) as usize]))
}

#[test]
fn quantize_solid_red_writes_single_cell_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_png(dir.path(), "red.png", &solid(64, 64, Rgb8::new(255, 0, 0)));
    let out_dir = dir.path().join("out");
    let doc = stdout_json(&chromaq(&["quantize", s(&img), "--out-dir", s(&out_dir)]));
    assert_eq!(doc["effective_k"], 1);
    assert_eq!(doc["entries"][0]["hex"], "FF0000");
    assert_eq!(doc["entries"][0]["weight"], 1.0);

    let swatch = image::open(out_dir.join("red.swatch.png"))
        .unwrap()
        .to_rgba8();
    assert_eq!(swatch.width(), swatch.height(), "one swatch cell");
    assert_eq!(
        swatch.get_pixel(swatch.width() / 2, swatch.height() / 2).0,
        [255, 0, 0, 255]
    );

    let svg = std::fs::read_to_string(out_dir.join("red.scatter.svg")).unwrap();
    assert_eq!(svg.matches("class=\"centroid\"").count(), 1);
    let on_disk: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("red.palette.json")).unwrap()).unwrap();
    assert_eq!(on_disk, doc);
}

#[test]
fn quantize_format_selects_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_png(dir.path(), "bands.png", &three_band_image());
    let out_dir = dir.path().join("out");
    let out = chromaq(&[
        "quantize",
        s(&img),
        "--out-dir",
        s(&out_dir),
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("bands.palette.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "hex,h,s,v,weight,monk_tone");
    assert_eq!(lines.len(), 4);
    assert!(!out_dir.join("bands.palette.json").exists());
    assert!(!out_dir.join("bands.swatch.png").exists());
    assert!(!out_dir.join("bands.scatter.svg").exists());
}

#[test]
fn plot_space_changes_scatter_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = write_png(dir.path(), "scene.png", &clutter(64, 64, &mut rng));
    let (hsv, rgb) = (dir.path().join("hsv"), dir.path().join("rgb"));
    assert!(
        chromaq(&["quantize", s(&img), "--space", "hsv", "--out-dir", s(&hsv)])
            .status
            .success()
    );
    assert!(
        chromaq(&["quantize", s(&img), "--space", "rgb", "--out-dir", s(&rgb)])
            .status
            .success()
    );
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(
        read(&hsv, "scene.palette.json"),
        read(&rgb, "scene.palette.json")
    );
    assert_ne!(
        read(&hsv, "scene.scatter.svg"),
        read(&rgb, "scene.scatter.svg")
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    assert_eq!(chromaq(&["quantize", s(&missing)]).status.code(), Some(2));

    let garbage = dir.path().join("garbage.png");
    std::fs::write(&garbage, b"not an image").unwrap();
    assert_eq!(chromaq(&["flag-skin", s(&garbage)]).status.code(), Some(2));

    let img = write_png(dir.path(), "red.png", &solid(8, 8, Rgb8::new(255, 0, 0)));
    assert_eq!(
        chromaq(&["quantize", s(&img), "--k", "0"]).status.code(),
        Some(1)
    );
    assert_eq!(
        chromaq(&["flag-skin", s(&img), "--tau", "1.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        chromaq(&["quantize", s(&img), "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(
        chromaq(&["forensics", s(&img), "--region-a", "0,0,4"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(chromaq(&["--help"]).status.code(), Some(0));
}

#[test]
fn forensics_two_panel_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut img = noisy_fill(128, 64, Rgb8::new(200, 60, 40), 0.02, &mut rng);
    paste(
        &mut img,
        &noisy_fill(64, 64, Rgb8::new(40, 80, 220), 0.02, &mut rng),
        64,
        0,
    );
    let path = write_png(dir.path(), "panels.png", &img);
    let doc = stdout_json(&chromaq(&[
        "forensics",
        s(&path),
        "--region-a",
        "0,0,64,64",
        "--region-b",
        "64,0,64,64",
    ]));
    assert_eq!(doc["verdict"], "inconsistent");
    assert!(doc["distance"].as_f64().unwrap() > 0.25);

    let same = stdout_json(&chromaq(&[
        "forensics",
        s(&path),
        "--region-a",
        "0,0,32,64",
        "--region-b",
        "32,0,32,64",
    ]));
    assert_eq!(same["verdict"], "consistent");

    let outside = chromaq(&[
        "forensics",
        s(&path),
        "--region-a",
        "100,0,64,64",
        "--region-b",
        "0,0,16,16",
    ]);
    assert_eq!(outside.status.code(), Some(1));
}

#[test]
fn flag_skin_on_monk_reference_fill() {
    let dir = tempfile::tempdir().unwrap();
    let tone: Rgb8 = "D7BD96".parse().unwrap();
    let skin = write_png(dir.path(), "skin.png", &solid(40, 40, tone));
    let doc = stdout_json(&chromaq(&["flag-skin", s(&skin)]));
    assert_eq!(doc["flagged"], true);
    assert_eq!(doc["total_matched_fraction"], 1.0);

    let blue = write_png(dir.path(), "blue.png", &solid(40, 40, Rgb8::new(0, 0, 255)));
    let doc = stdout_json(&chromaq(&["flag-skin", s(&blue)]));
    assert_eq!(doc["flagged"], false);
}

fn symbol_database(dir: &Path) -> PathBuf {
    let db = dir.join("symbols");
    std::fs::create_dir_all(&db).unwrap();
    let logos = synthetic_logos();
    let mut manifest = String::from("version = 1\n");
    for logo in &logos[..2] {
        write_png(&db, &format!("{}.png", logo.name), &logo.image);
        manifest.push_str(&format!(
            "\n[[symbol]]\nfile = \"{0}.png\"\nname = \"{0}\"\n",
            logo.name
        ));
    }
    std::fs::write(db.join("symbols.toml"), manifest).unwrap();
    db
}

#[test]
fn match_symbol_finds_planted_logo() {
    let dir = tempfile::tempdir().unwrap();
    let db = symbol_database(dir.path());
    let logos = synthetic_logos();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut img = clutter(256, 256, &mut rng);
    paste(&mut img, &logos[0].image, 64, 128);
    let path = write_png(dir.path(), "scene.png", &img);
    let doc = stdout_json(&chromaq(&[
        "match-symbol",
        s(&path),
        "--symbols",
        s(&db),
        "--tile-size",
        "64",
    ]));
    assert_eq!(doc["flags"][&logos[0].name]["flagged"], true);
    assert_eq!(doc["flags"][&logos[1].name]["flagged"], false);

    let no_db = chromaq(&["match-symbol", s(&path)]);
    assert_eq!(no_db.status.code(), Some(1));
}

fn build_corpus(dir: &Path, n: usize) -> PathBuf {
    let root = dir.join("corpus");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let families = [
        Rgb8::new(220, 30, 30),
        Rgb8::new(30, 30, 220),
        Rgb8::new(30, 180, 30),
    ];
    for i in 0..n {
        let sub = root.join(format!("part{}", i % 3));
        std::fs::create_dir_all(&sub).unwrap();
        let mut img = noisy_fill(48, 48, families[i % 3], 0.01, &mut rng);
        if i % 4 == 0 {
            paste(&mut img, &solid(24, 48, "D7BD96".parse().unwrap()), 0, 0);
        }
        write_png(&sub, &format!("img{i:03}.png"), &img);
    }
    std::fs::write(root.join("broken.png"), b"\x89PNG truncated").unwrap();
    root
}

#[test]
fn corpus_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let root = build_corpus(dir.path(), 60);
    let report = dir.path().join("report.json");
    let scan = chromaq(&["corpus", "scan", s(&root), "--out", s(&report)]);
    assert!(
        scan.status.success(),
        "{}",
        String::from_utf8_lossy(&scan.stderr)
    );
    let doc: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    let records = doc["records"].as_array().unwrap();
    assert_eq!(records.len(), 61);
    assert_eq!(records.iter().filter(|r| r["status"] == "ok").count(), 60);

    let sample = stdout_json(&chromaq(&[
        "corpus",
        "sample",
        "--report",
        s(&report),
        "-n",
        "50",
        "--strategy",
        "stratified-cluster",
        "-g",
        "3",
    ]));
    let mut paths: Vec<&str> = sample["paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_str().unwrap())
        .collect();
    assert_eq!(paths.len(), 50);
    paths.sort_unstable();
    paths.dedup();
    assert_eq!(paths.len(), 50);

    let too_many = chromaq(&["corpus", "sample", "--report", s(&report), "-n", "500"]);
    assert_eq!(too_many.status.code(), Some(1));

    let clusters = dir.path().join("clusters.json");
    assert!(chromaq(&[
        "corpus",
        "cluster",
        "--report",
        s(&report),
        "-g",
        "3",
        "--out",
        s(&clusters)
    ])
    .status
    .success());
    let assignment: Value = serde_json::from_slice(&std::fs::read(&clusters).unwrap()).unwrap();
    assert_eq!(assignment["medoids"].as_array().unwrap().len(), 3);
    let from_file = stdout_json(&chromaq(&[
        "corpus",
        "sample",
        "--report",
        s(&report),
        "-n",
        "9",
        "--strategy",
        "stratified-cluster",
        "--clusters",
        s(&clusters),
    ]));
    assert_eq!(from_file["paths"].as_array().unwrap().len(), 9);

    let summary = stdout_json(&chromaq(&["corpus", "summarize", "--report", s(&report)]));
    assert_eq!(summary["n_images"], 61);
    let csv = chromaq(&[
        "corpus",
        "summarize",
        "--report",
        s(&report),
        "--format",
        "csv",
    ]);
    assert!(String::from_utf8(csv.stdout)
        .unwrap()
        .starts_with("metric,value\nn_images,61\n"));

    let labels = dir.path().join("labels.csv");
    let mut text = String::from("path,task,label\n");
    for r in records.iter().filter(|r| r["status"] == "ok") {
        let path = r["path"].as_str().unwrap();
        let index: usize = path[path.len() - 7..path.len() - 4].parse().unwrap();
        text.push_str(&format!("{path},skin,{}\n", index.is_multiple_of(4)));
    }
    std::fs::write(&labels, text).unwrap();
    let eval = stdout_json(&chromaq(&[
        "corpus",
        "evaluate",
        "--report",
        s(&report),
        "--labels",
        s(&labels),
    ]));
    let skin = &eval["results"][0];
    assert_eq!(skin["task"], "skin");
    assert_eq!(skin["n"], 60);
    assert_eq!(skin["true_positives"], 15);
    assert_eq!(skin["error_rate"], 0.0);
}

#[test]
fn corpus_scan_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let root = build_corpus(dir.path(), 12);
    let run = |workers: &str| {
        let out = chromaq(&["corpus", "scan", s(&root), "--workers", workers]);
        assert!(out.status.success());
        out.stdout
    };
    let first = run("1");
    assert_eq!(first, run("1"));
    assert_eq!(first, run("3"));
}

#[test]
fn settings_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_png(dir.path(), "bands.png", &three_band_image());
    let settings = dir.path().join("chromaq.toml");
    std::fs::write(&settings, "k = 2\nseed = 7\n").unwrap();
    let out_dir = dir.path().join("out");
    let quantize = |extra: &[&str], env: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_chromaq"));
        cmd.args([
            "quantize",
            s(&img),
            "--out-dir",
            s(&out_dir),
            "--format",
            "json",
        ])
        .args(extra);
        match env {
            Some(p) => cmd.env("CHROMAQ_CONFIG", p),
            None => cmd.env_remove("CHROMAQ_CONFIG"),
        };
        stdout_json(&cmd.output().unwrap())
    };
    assert_eq!(quantize(&[], None)["effective_k"], 3);
    let from_file = quantize(&["--config", s(&settings)], None);
    assert_eq!(
        (from_file["k"].clone(), from_file["seed"].clone()),
        (2.into(), 7.into())
    );
    assert_eq!(quantize(&[], Some(&settings)), from_file);
    assert_eq!(
        quantize(&["--config", s(&settings), "--k", "3"], None)["effective_k"],
        3
    );

    std::fs::write(&settings, "colours = 3\n").unwrap();
    assert_eq!(
        chromaq(&["quantize", s(&img), "--config", s(&settings)])
            .status
            .code(),
        Some(1)
    );
}
