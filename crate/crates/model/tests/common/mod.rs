#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segland_core::data::{Split, TileSet};
use segland_core::{ClassTaxonomy, Image, LabelMap, TaxonomyPhase, Tile};
use segland_model::TrainConfig;

pub const SIZE: usize = 32;
const COLORS: [[u8; 3]; 4] = [[150, 128, 108], [40, 112, 52], [212, 192, 96], [40, 78, 172]];
const NOVEL: [u8; 3] = [235, 30, 30];

pub fn taxonomy() -> ClassTaxonomy {
    ClassTaxonomy::with_novel(3, 1, TaxonomyPhase::Phase1)
}

/// Quadrant scene of background and base classes, optionally with one novel
/// square; labels are complete.
pub fn scene(rng: &mut ChaCha8Rng, with_novel: bool) -> (Image, LabelMap) {
    let (cy, cx) = (rng.random_range(8..24), rng.random_range(8..24));
    let classes: [u8; 4] = std::array::from_fn(|_| rng.random_range(0..4));
    let mut label = LabelMap::filled(SIZE, SIZE, 0);
    for r in 0..SIZE {
        for c in 0..SIZE {
            label.set(r, c, classes[usize::from(r >= cy) * 2 + usize::from(c >= cx)]);
        }
    }
    if with_novel {
        let (top, left) = (rng.random_range(0..SIZE - 8), rng.random_range(0..SIZE - 8));
        for r in top..top + 8 {
            for c in left..left + 8 {
                label.set(r, c, 4);
            }
        }
    }
    let mut image = Image::filled(SIZE, SIZE, [0; 3]);
    for r in 0..SIZE {
        for c in 0..SIZE {
            let id = label.get(r, c);
            let base = if id == 4 { NOVEL } else { COLORS[id as usize] };
            image.set_pixel(r, c, base.map(|v| v.saturating_add(rng.random_range(0..12))));
        }
    }
    (image, label)
}

pub fn base_set(n: usize, seed: u64) -> TileSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tiles = (0..n)
        .map(|i| {
            let (image, label) = scene(&mut rng, false);
            Tile::new(format!("b{i}"), image, Some(label)).unwrap()
        })
        .collect();
    TileSet::new(tiles, "", Split::BaseTrain).unwrap()
}

/// Support tiles labeled with the novel class over background only.
pub fn support_set(n: usize, seed: u64) -> TileSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tiles = (0..n)
        .map(|i| {
            let (image, label) = scene(&mut rng, true);
            let label = LabelMap {
                data: label.data.iter().map(|&v| if v == 4 { 4 } else { 0 }).collect(),
                ..label
            };
            Tile::new(format!("s{i}"), image, Some(label)).unwrap()
        })
        .collect();
    TileSet::new(tiles, "", Split::Support).unwrap()
}

pub fn held_out(n: usize, seed: u64) -> Vec<Tile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (image, label) = scene(&mut rng, true);
            Tile::new(format!("h{i}"), image, Some(label)).unwrap()
        })
        .collect()
}

pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 4,
        crop: SIZE,
        arch: "ref-tiny".into(),
        decoder_width: 8,
        embed_dim: 16,
        cutmix_copies: 1,
        ..TrainConfig::default()
    }
}
