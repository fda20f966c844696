#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use fda::image_io::write_png;
use fda::fda_core::RasterImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth colored scene with some pixel noise, values in `[0, 255]`.
pub fn scene(seed: u64, h: usize, w: usize) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 3] = [rng.random_range(40.0..200.0), rng.random_range(40.0..200.0), rng.random_range(40.0..200.0)];
    let fy = rng.random_range(2.0..9.0);
    let fx = rng.random_range(2.0..9.0);
    let noise: Vec<f64> = (0..h * w * 3).map(|_| rng.random_range(-6.0..6.0)).collect();
    RasterImage::from_fn(h, w, 3, |y, x, c| {
        let wave = (fy * y as f64 / h as f64 + c as f64).sin() * (fx * x as f64 / w as f64).cos();
        (base[c] + 45.0 * wave + noise[(y * w + x) * 3 + c]).clamp(0.0, 255.0).round()
    })
    .unwrap()
}

/// Writes `count` PNG scenes named `img_000.png`, ... and returns their paths.
pub fn write_scenes(dir: &Path, count: usize, h: usize, w: usize, seed: u64) -> Vec<PathBuf> {
    fs::create_dir_all(dir).unwrap();
    (0..count)
        .map(|i| {
            let path = dir.join(format!("img_{i:03}.png"));
            write_png(&scene(seed * 1000 + i as u64, h, w), &path).unwrap();
            path
        })
        .collect()
}

/// Every file under `dir` except the report, with contents, sorted by name.
pub fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = walkdir(dir)
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n != "report.json"))
        .map(|p| (p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn walkdir(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walkdir(&p));
        } else {
            out.push(p);
        }
    }
    out
}

pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["fda"];
    argv.extend_from_slice(args);
    let code = fda::cli::run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}
