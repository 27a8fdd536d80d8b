//! Procedural land-cover tiles: large irregular regions for background and
//! base classes, small compact objects for novel classes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use segland_core::data::{Split, TileSet, IMAGES_DIR, LABELS_DIR};
use segland_core::io::{write_image, write_json, write_label};
use segland_core::{ClassTaxonomy, Image, LabelMap, TaxonomyPhase, Tile};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Tile side in pixels; must be a multiple of 32.
    pub size: usize,
    pub num_base: u8,
    pub num_novel: u8,
    pub base_train: usize,
    /// Support tiles per novel class.
    pub shots: usize,
    /// Labeled held-out tiles containing every class.
    pub query: usize,
    /// Unlabeled tiles.
    pub test: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 64,
            num_base: 3,
            num_novel: 1,
            base_train: 48,
            shots: 5,
            query: 16,
            test: 0,
        }
    }
}

/// Taxonomy file written at the dataset root.
pub const TAXONOMY_FILE: &str = "taxonomy.json";

const BASE_NAMES: [&str; 7] = ["tree", "cropland", "water", "rangeland", "bareland", "developed", "road"];
const NOVEL_NAMES: [&str; 4] = ["vehicle", "boat", "sports-field", "greenhouse"];

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 32 != 0 {
            return Err(CliError::Invalid(format!("tile size {} is not a positive multiple of 32", self.size)));
        }
        if self.num_base == 0 || self.num_base as usize + self.num_novel as usize > 200 {
            return Err(CliError::Invalid("need 1..=200 classes with at least one base class".into()));
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> ClassTaxonomy {
        let mut names: Vec<(u8, String)> = vec![(0, "background".into())];
        for i in 0..self.num_base {
            let name = BASE_NAMES.get(i as usize).map_or(format!("base{}", i + 1), |s| s.to_string());
            names.push((i + 1, name));
        }
        for i in 0..self.num_novel {
            let name = NOVEL_NAMES.get(i as usize).map_or(format!("novel{}", i + 1), |s| s.to_string());
            names.push((self.num_base + 1 + i, name));
        }
        let phase = if self.num_novel == 0 {
            TaxonomyPhase::BaseOnly
        } else {
            TaxonomyPhase::Phase1
        };
        let refs: Vec<(u8, &str)> = names.iter().map(|(id, n)| (*id, n.as_str())).collect();
        ClassTaxonomy::with_novel(self.num_base, self.num_novel, phase).with_names(&refs)
    }
}

fn base_color(class: u8) -> [f64; 3] {
    match class {
        0 => [150.0, 128.0, 108.0],
        1 => [40.0, 112.0, 52.0],
        2 => [212.0, 192.0, 96.0],
        3 => [40.0, 78.0, 172.0],
        4 => [168.0, 176.0, 92.0],
        5 => [196.0, 168.0, 150.0],
        6 => [112.0, 112.0, 124.0],
        7 => [70.0, 66.0, 64.0],
        c => {
            let h = (c as f64 * 0.618_034).fract() * std::f64::consts::TAU;
            [128.0 + 90.0 * h.cos(), 128.0 + 90.0 * (h + 2.1).cos(), 128.0 + 90.0 * (h + 4.2).cos()]
        }
    }
}

fn novel_color(index: u8) -> [f64; 3] {
    match index {
        0 => [235.0, 30.0, 30.0],
        1 => [245.0, 245.0, 245.0],
        2 => [235.0, 20.0, 210.0],
        3 => [20.0, 230.0, 230.0],
        i => {
            let h = (i as f64 * 0.381_966).fract() * std::f64::consts::TAU;
            [128.0 + 120.0 * h.sin(), 128.0 + 120.0 * (h + 2.1).sin(), 128.0 + 120.0 * (h + 4.2).sin()]
        }
    }
}

/// One scene with full labels. `novel` lists the novel class indices
/// (0-based) whose objects are scattered over the scene.
fn scene(rng: &mut ChaCha8Rng, cfg: &SynthConfig, novel: &[u8]) -> (Image, LabelMap) {
    let n = cfg.size;
    let seeds: Vec<(f64, f64, u8, f64)> = (0..rng.random_range(3..=6))
        .map(|_| {
            (
                rng.random_range(0.0..n as f64),
                rng.random_range(0.0..n as f64),
                rng.random_range(0..=cfg.num_base),
                rng.random_range(-14.0..14.0),
            )
        })
        .collect();
    let (fx, fy, phase) = (
        rng.random_range(0.05..0.2),
        rng.random_range(0.05..0.2),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let wobble = 0.15 * n as f64;

    let mut label = LabelMap::filled(n, n, 0);
    let mut shade = vec![0.0f64; n * n];
    for r in 0..n {
        for c in 0..n {
            let (y, x) = (
                r as f64 + wobble * (fx * c as f64 + phase).sin(),
                c as f64 + wobble * (fy * r as f64 + phase).cos(),
            );
            let (_, class, offset) = seeds
                .iter()
                .map(|&(sy, sx, class, off)| ((y - sy).powi(2) + (x - sx).powi(2), class, off))
                .fold((f64::INFINITY, 0, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best });
            label.set(r, c, class);
            shade[r * n + c] = offset;
        }
    }

    let mut objects: Vec<(usize, usize, usize, usize, u8)> = Vec::new();
    for &k in novel {
        for _ in 0..rng.random_range(2..=4) {
            let (h, w) = (rng.random_range(8..=14), rng.random_range(8..=14));
            let (top, left) = (rng.random_range(0..=n - h), rng.random_range(0..=n - w));
            objects.push((top, left, h, w, k));
        }
    }
    for &(top, left, h, w, k) in &objects {
        for r in top..top + h {
            for c in left..left + w {
                label.set(r, c, cfg.num_base + 1 + k);
            }
        }
    }

    let noise = Normal::new(0.0, 10.0).expect("finite sigma");
    let mut image = Image::filled(n, n, [0; 3]);
    for r in 0..n {
        for c in 0..n {
            let id = label.get(r, c);
            let color = if id > cfg.num_base {
                novel_color(id - cfg.num_base - 1)
            } else {
                let b = base_color(id);
                let s = shade[r * n + c];
                [b[0] + s, b[1] + s, b[2] + s]
            };
            let px = color.map(|v| (v + noise.sample(rng)).round().clamp(0.0, 255.0) as u8);
            image.set_pixel(r, c, px);
        }
    }
    (image, label)
}

fn split_stream(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let code = match split {
        Split::BaseTrain => 1u64,
        Split::Support => 2,
        Split::Query => 3,
        Split::Test => 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((code << 40) | index as u64);
    rng
}

/// Generates one split in memory. Base-train tiles never contain novel
/// objects; support tiles contain one novel class each and are labeled with
/// that class over background only.
pub fn generate_split(cfg: &SynthConfig, split: Split, seed: u64) -> Result<TileSet> {
    cfg.validate()?;
    let all_novel: Vec<u8> = (0..cfg.num_novel).collect();
    let mut tiles = Vec::new();
    match split {
        Split::BaseTrain => {
            for i in 0..cfg.base_train {
                let (image, label) = scene(&mut split_stream(seed, split, i), cfg, &[]);
                tiles.push(Tile::new(format!("bt-{i:04}"), image, Some(label))?);
            }
        }
        Split::Support => {
            for k in 0..cfg.num_novel {
                for s in 0..cfg.shots {
                    let index = k as usize * cfg.shots + s;
                    let (image, full) = scene(&mut split_stream(seed, split, index), cfg, &[k]);
                    let novel_id = cfg.num_base + 1 + k;
                    let label = LabelMap {
                        data: full.data.iter().map(|&v| if v == novel_id { v } else { 0 }).collect(),
                        ..full
                    };
                    tiles.push(Tile::new(format!("sp-{novel_id}-{s:02}"), image, Some(label))?);
                }
            }
        }
        Split::Query | Split::Test => {
            let (count, prefix) = if split == Split::Query {
                (cfg.query, "q")
            } else {
                (cfg.test, "t")
            };
            for i in 0..count {
                let (image, label) = scene(&mut split_stream(seed, split, i), cfg, &all_novel);
                let label = (split == Split::Query).then_some(label);
                tiles.push(Tile::new(format!("{prefix}-{i:04}"), image, label)?);
            }
        }
    }
    Ok(TileSet::new(tiles, "", split)?)
}

pub const SPLITS: [Split; 4] = [Split::BaseTrain, Split::Support, Split::Query, Split::Test];

pub fn write_split(root: &Path, set: &TileSet) -> Result<()> {
    let dir = root.join(set.split.to_string());
    let images = dir.join(IMAGES_DIR);
    std::fs::create_dir_all(&images).map_err(|e| CliError::io(&images, e))?;
    let labels = dir.join(LABELS_DIR);
    if set.split.is_labeled() {
        std::fs::create_dir_all(&labels).map_err(|e| CliError::io(&labels, e))?;
    }
    for tile in set.iter() {
        write_image(images.join(format!("{}.png", tile.id)), &tile.image)?;
        if let Some(label) = &tile.label {
            write_label(labels.join(format!("{}.png", tile.id)), label)?;
        }
    }
    Ok(())
}

/// Writes every split plus the taxonomy under `root`.
pub fn write_dataset(root: &Path, cfg: &SynthConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    write_json(root.join(TAXONOMY_FILE), &cfg.taxonomy())?;
    for split in SPLITS {
        write_split(root, &generate_split(cfg, split, seed)?)?;
    }
    Ok(())
}
