#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use trapwsod::dataset_io::{write_idx, write_png, DigitSample};
use trapwsod::pipeline::MNIST_FILES;
use trapwsod::synthetic::{generate_burst, SyntheticBurstSpec};
use trapwsod::ImageBuffer;

/// One burst written to disk: camera, image ids in frame order, class label.
#[derive(Debug, Clone)]
pub struct FixtureBurst {
    pub camera: String,
    pub image_ids: Vec<String>,
    pub class_id: u32,
}

/// Writes `<root>/<camera>/<camera>_20240101_12MMSS.png` frames from seeded
/// synthetic bursts plus `mapping.csv` next to `root`. Bursts of one camera
/// are ten minutes apart; frames one second apart.
pub fn write_burst_fixture(
    root: &Path,
    mapping: &Path,
    cameras: &[&str],
    bursts_per_camera: usize,
    frames: usize,
) -> Vec<FixtureBurst> {
    let mut out = Vec::new();
    let mut csv = String::from("image_id,class_id,class_name\n");
    for (c, cam) in cameras.iter().enumerate() {
        let dir = root.join(cam);
        fs::create_dir_all(&dir).unwrap();
        for b in 0..bursts_per_camera {
            let spec = SyntheticBurstSpec {
                n_frames: frames,
                seed: (c * 100 + b) as u64,
                ..Default::default()
            };
            let burst = generate_burst(&spec, &mut spec.rng()).unwrap();
            // every camera gets one burst labeled empty so FP correction runs
            let class_id = if b == 1 { 0 } else { 1 + c as u32 };
            let mut ids = Vec::new();
            for (f, frame) in burst.burst.frames().iter().enumerate() {
                let id = format!("{cam}_20240101_12{:02}{:02}", b * 10, f);
                write_png(&frame.image, &dir.join(format!("{id}.png"))).unwrap();
                let name = if class_id == 0 {
                    "empty".to_string()
                } else {
                    format!("taxon{class_id}")
                };
                csv.push_str(&format!("{id},{class_id},{name}\n"));
                ids.push(id);
            }
            out.push(FixtureBurst {
                camera: cam.to_string(),
                image_ids: ids,
                class_id,
            });
        }
    }
    fs::write(mapping, csv).unwrap();
    out
}

/// Bar glyph whose width encodes the digit; `k` varies the intensity.
pub fn glyph(label: u8, k: usize) -> ImageBuffer {
    let mut img = ImageBuffer::filled(28, 28, 1, 0).unwrap();
    for y in 4..24 {
        for x in 4..(6 + 2 * label as u32) {
            img.pixel_mut(x, y)[0] = 120 + (k % 100) as u8 + label;
        }
    }
    img
}

pub fn glyph_pool(per_class: usize) -> Vec<DigitSample> {
    (0..per_class)
        .flat_map(|k| {
            (0..10u8).map(move |label| DigitSample {
                image: glyph(label, k),
                label,
            })
        })
        .collect()
}

/// Writes the four standard IDX file names into `dir`.
pub fn write_mnist_dir(dir: &Path, per_class: usize) {
    fs::create_dir_all(dir).unwrap();
    let pool = glyph_pool(per_class);
    write_idx(&pool, &dir.join(MNIST_FILES[0]), &dir.join(MNIST_FILES[1])).unwrap();
    write_idx(
        &pool[..pool.len() / 2],
        &dir.join(MNIST_FILES[2]),
        &dir.join(MNIST_FILES[3]),
    )
    .unwrap();
}

/// Every regular file under `dir`, keyed by its relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.unwrap();
        if entry.file_type().is_file() {
            let rel = entry
                .path()
                .strip_prefix(dir)
                .unwrap()
                .to_string_lossy()
                .into_owned();
            out.insert(rel, fs::read(entry.path()).unwrap());
        }
    }
    out
}
