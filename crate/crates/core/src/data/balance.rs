//! Class-frequency analysis and class-balanced loss weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::TileSet;
use crate::error::{Error, Result};
use crate::taxonomy::ClassTaxonomy;
use crate::IGNORE;

/// Pixel counts and normalized frequencies of the classes that occur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub pixel_counts: BTreeMap<u8, u64>,
    pub frequencies: BTreeMap<u8, f64>,
}

impl FrequencyTable {
    /// Builds the table from raw counts, dropping classes with zero pixels.
    pub fn from_counts(counts: BTreeMap<u8, u64>) -> Result<Self> {
        let pixel_counts: BTreeMap<u8, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total: u64 = pixel_counts.values().sum();
        if total == 0 {
            return Err(Error::Empty);
        }
        let frequencies = pixel_counts
            .iter()
            .map(|(id, c)| (*id, *c as f64 / total as f64))
            .collect();
        Ok(FrequencyTable {
            pixel_counts,
            frequencies,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// w ∝ 1/f
    Inverse,
    /// w ∝ 1/√f
    InverseSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: BTreeMap<u8, f64>,
    pub mode: Option<WeightMode>,
}

impl WeightVector {
    /// Unit weight for every id.
    pub fn uniform(ids: impl IntoIterator<Item = u8>) -> Self {
        WeightVector {
            weights: ids.into_iter().map(|id| (id, 1.0)).collect(),
            mode: None,
        }
    }

    /// Weight of a class; classes absent from the table weigh 1.
    pub fn get(&self, id: u8) -> f64 {
        self.weights.get(&id).copied().unwrap_or(1.0)
    }

    /// Dense weight vector over ids `0..k`.
    pub fn dense(&self, k: usize) -> Vec<f64> {
        (0..k).map(|id| self.get(id as u8)).collect()
    }
}

/// Counts every non-ignore label pixel of the set.
pub fn compute_class_frequencies(tiles: &TileSet, taxonomy: &ClassTaxonomy) -> Result<FrequencyTable> {
    let mut counts: BTreeMap<u8, u64> = BTreeMap::new();
    for tile in tiles.iter() {
        let label = tile.require_label()?;
        for &v in &label.data {
            if v == IGNORE {
                continue;
            }
            if !taxonomy.contains(v) {
                return Err(Error::BadValue {
                    tile: tile.id.clone(),
                    value: v,
                });
            }
            *counts.entry(v).or_default() += 1;
        }
    }
    FrequencyTable::from_counts(counts)
}

/// Raw weights 1/f or 1/√f, rescaled to mean 1 over the listed classes.
pub fn compute_class_weights(freqs: &FrequencyTable, mode: WeightMode) -> Result<WeightVector> {
    if freqs.frequencies.is_empty() {
        return Err(Error::Empty);
    }
    let mut raw = BTreeMap::new();
    for (&id, &f) in &freqs.frequencies {
        if !(f > 0.0) {
            return Err(Error::ZeroFrequency(id));
        }
        let w = match mode {
            WeightMode::Inverse => 1.0 / f,
            WeightMode::InverseSqrt => 1.0 / f.sqrt(),
        };
        raw.insert(id, w);
    }
    let mean = raw.values().sum::<f64>() / raw.len() as f64;
    Ok(WeightVector {
        weights: raw.into_iter().map(|(id, w)| (id, w / mean)).collect(),
        mode: Some(mode),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::raster::{Image, LabelMap, Tile};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn set(labels: Vec<LabelMap>) -> TileSet {
        let tiles = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| Tile::new(format!("t{i}"), Image::filled(l.height, l.width, [0; 3]), Some(l)).unwrap())
            .collect();
        TileSet::new(tiles, "", Split::BaseTrain).unwrap()
    }

    fn table(freqs: &[(u8, f64)]) -> FrequencyTable {
        FrequencyTable {
            pixel_counts: BTreeMap::new(),
            frequencies: freqs.iter().copied().collect(),
        }
    }

    #[test]
    fn hand_counted_tile() {
        let t = compute_class_frequencies(
            &set(vec![LabelMap::from_rows(&[[1u8, 1], [2, 255]])]),
            &ClassTaxonomy::base_only(2),
        )
        .unwrap();
        assert_eq!(t.pixel_counts, BTreeMap::from([(1, 2), (2, 1)]));
        assert_relative_eq!(t.frequencies[&1], 2.0 / 3.0);
        assert_relative_eq!(t.frequencies[&2], 1.0 / 3.0);
    }

    #[test]
    fn uniform_labels() {
        let t = compute_class_frequencies(
            &set(vec![LabelMap::from_rows(&[[0u8, 1, 2], [2, 1, 0]])]),
            &ClassTaxonomy::base_only(2),
        )
        .unwrap();
        for f in t.frequencies.values() {
            assert_relative_eq!(*f, 1.0 / 3.0);
        }
    }

    #[test]
    fn all_ignore_is_empty() {
        let err = compute_class_frequencies(&set(vec![LabelMap::filled(3, 3, 255)]), &ClassTaxonomy::base_only(2));
        assert!(matches!(err, Err(Error::Empty)));
    }

    #[test]
    fn uniform_frequencies_give_unit_weights() {
        let f = table(&[(0, 1.0 / 3.0), (1, 1.0 / 3.0), (2, 1.0 / 3.0)]);
        for mode in [WeightMode::Inverse, WeightMode::InverseSqrt] {
            let w = compute_class_weights(&f, mode).unwrap();
            for v in w.weights.values() {
                assert_relative_eq!(*v, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn skewed_inverse() {
        let w = compute_class_weights(&table(&[(0, 0.5), (1, 0.25), (2, 0.25)]), WeightMode::Inverse).unwrap();
        assert_relative_eq!(w.weights[&0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(w.weights[&1], 1.2, epsilon = 1e-12);
        assert_relative_eq!(w.weights[&2], 1.2, epsilon = 1e-12);
    }

    #[test]
    fn skewed_inverse_sqrt() {
        // raw = (√2, 2, 2), mean = (√2 + 4)/3
        let w = compute_class_weights(&table(&[(0, 0.5), (1, 0.25), (2, 0.25)]), WeightMode::InverseSqrt).unwrap();
        assert_relative_eq!(w.weights[&0], 0.78362, epsilon = 1e-5);
        assert_relative_eq!(w.weights[&1], 1.10819, epsilon = 1e-5);
        assert_relative_eq!(w.weights[&2], 1.10819, epsilon = 1e-5);
    }

    #[test]
    fn zero_frequency_is_rejected() {
        let err = compute_class_weights(&table(&[(0, 1.0), (1, 0.0)]), WeightMode::Inverse);
        assert!(matches!(err, Err(Error::ZeroFrequency(1))));
    }

    #[test]
    fn json_is_keyed_by_class_id() {
        let w = compute_class_weights(&table(&[(3, 0.5), (7, 0.5)]), WeightMode::Inverse).unwrap();
        let json = serde_json::to_value(&w).unwrap();
        assert_eq!(json["weights"]["3"], 1.0);
        assert_eq!(json["mode"], "inverse");
    }

    proptest! {
        #[test]
        fn weights_balance_frequencies(counts in proptest::collection::vec(1u64..10_000, 2..12)) {
            let f = FrequencyTable::from_counts(
                counts.iter().enumerate().map(|(i, c)| (i as u8, *c)).collect(),
            ).unwrap();
            let sum: f64 = f.frequencies.values().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for mode in [WeightMode::Inverse, WeightMode::InverseSqrt] {
                let w = compute_class_weights(&f, mode).unwrap();
                let mean = w.weights.values().sum::<f64>() / w.weights.len() as f64;
                prop_assert!((mean - 1.0).abs() < 1e-9);
                let products: Vec<f64> = f.frequencies.iter().map(|(id, fr)| match mode {
                    WeightMode::Inverse => w.weights[id] * fr,
                    WeightMode::InverseSqrt => w.weights[id] * fr.sqrt(),
                }).collect();
                for p in &products {
                    prop_assert!((p / products[0] - 1.0).abs() < 1e-9);
                    prop_assert!(*p > 0.0);
                }
            }
        }

        #[test]
        fn frequencies_follow_relabeling(
            values in proptest::collection::vec(0u8..4, 1..64),
            perm_seed in 0usize..24,
        ) {
            // every permutation of 4 ids, indexed by perm_seed
            let mut ids = vec![0u8, 1, 2, 3];
            let mut perm = Vec::new();
            let mut s = perm_seed;
            while !ids.is_empty() {
                let k = s % ids.len();
                s /= ids.len().max(1);
                perm.push(ids.remove(k));
            }
            let tax = ClassTaxonomy::base_only(3);
            let n = values.len();
            let a = compute_class_frequencies(&set(vec![LabelMap::new(1, n, values.clone()).unwrap()]), &tax).unwrap();
            let relabeled: Vec<u8> = values.iter().map(|&v| perm[v as usize]).collect();
            let b = compute_class_frequencies(&set(vec![LabelMap::new(1, n, relabeled).unwrap()]), &tax).unwrap();
            for (id, f) in &a.frequencies {
                prop_assert_eq!(b.frequencies[&perm[*id as usize]], *f);
            }
        }
    }
}
