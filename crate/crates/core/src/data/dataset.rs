use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{find_raster, read_image, read_label, RASTER_EXTENSIONS};
use crate::raster::Tile;
use crate::taxonomy::ClassTaxonomy;

pub const IMAGES_DIR: &str = "images";
pub const LABELS_DIR: &str = "labels";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    BaseTrain,
    Support,
    Query,
    Test,
}

impl Split {
    /// Every split except `Test` must carry labels.
    pub fn is_labeled(self) -> bool {
        !matches!(self, Split::Test)
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::BaseTrain => "base-train",
            Split::Support => "support",
            Split::Query => "query",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "base-train" => Ok(Split::BaseTrain),
            "support" => Ok(Split::Support),
            "query" => Ok(Split::Query),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileSet {
    pub tiles: Vec<Tile>,
    pub root: PathBuf,
    pub split: Split,
}

impl TileSet {
    /// Builds a set in memory, enforcing unique ids and labels on labeled splits.
    pub fn new(tiles: Vec<Tile>, root: impl Into<PathBuf>, split: Split) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &tiles {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::DuplicateId(t.id.clone()));
            }
            if split.is_labeled() && t.label.is_none() {
                return Err(Error::MissingLabel(t.id.clone()));
            }
        }
        Ok(TileSet {
            tiles,
            root: root.into(),
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tile> {
        self.tiles.iter()
    }
}

fn image_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| RASTER_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    for pair in stems.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::DuplicateId(pair[0].clone()));
        }
    }
    Ok(stems)
}

/// Loads `<root>/images/<id>.{png,tif}` paired by stem with
/// `<root>/labels/<id>.{png,tif}`. Tiles are ordered by id.
pub fn load_dataset(root: impl AsRef<Path>, split: Split, taxonomy: &ClassTaxonomy) -> Result<TileSet> {
    let root = root.as_ref();
    let images_dir = root.join(IMAGES_DIR);
    let labels_dir = root.join(LABELS_DIR);
    let stems = image_stems(&images_dir)?;
    let has_labels_dir = labels_dir.is_dir();

    let mut tiles = Vec::with_capacity(stems.len());
    for stem in stems {
        let image_path = find_raster(&images_dir, &stem).expect("stem came from a listed file");
        let image = read_image(&image_path)?;
        let label_path = if has_labels_dir {
            find_raster(&labels_dir, &stem)
        } else {
            None
        };
        let label = match label_path {
            Some(p) => Some(read_label(p)?),
            None if split.is_labeled() => return Err(Error::MissingLabel(stem)),
            None => None,
        };
        let tile = Tile::new(stem, image, label)?;
        tile.validate_labels(taxonomy)?;
        tiles.push(tile);
    }
    TileSet::new(tiles, root, split)
}
