//! Background / base / novel class partition.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::IGNORE;

/// Which class set is active: base classes only, or one of the two novel-class
/// rounds of the few-shot challenge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaxonomyPhase {
    BaseOnly,
    Phase1,
    Phase2,
}

impl std::fmt::Display for TaxonomyPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaxonomyPhase::BaseOnly => "base-only",
            TaxonomyPhase::Phase1 => "phase1",
            TaxonomyPhase::Phase2 => "phase2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    pub background_id: u8,
    pub base_ids: Vec<u8>,
    pub novel_ids: Vec<u8>,
    #[serde(default)]
    pub names: BTreeMap<u8, String>,
    pub phase: TaxonomyPhase,
}

impl ClassTaxonomy {
    /// Background 0 followed by `num_base` base classes, no novel classes.
    pub fn base_only(num_base: u8) -> Self {
        ClassTaxonomy {
            background_id: 0,
            base_ids: (1..=num_base).collect(),
            novel_ids: Vec::new(),
            names: BTreeMap::new(),
            phase: TaxonomyPhase::BaseOnly,
        }
    }

    /// Background, `num_base` base classes and `num_novel` novel classes appended after them.
    pub fn with_novel(num_base: u8, num_novel: u8, phase: TaxonomyPhase) -> Self {
        ClassTaxonomy {
            background_id: 0,
            base_ids: (1..=num_base).collect(),
            novel_ids: (num_base + 1..=num_base + num_novel).collect(),
            names: BTreeMap::new(),
            phase,
        }
    }

    pub fn with_names(mut self, names: &[(u8, &str)]) -> Self {
        self.names = names.iter().map(|(id, n)| (*id, n.to_string())).collect();
        self
    }

    /// Checks every structural invariant of the partition.
    ///
    /// Background must be 0 and unused elsewhere, base and novel sets must be
    /// disjoint, base ids must be exactly `1..=B` and novel ids `B+1..=B+N`.
    pub fn validate(&self) -> Result<()> {
        if self.background_id != 0 {
            return Err(Error::Background(self.background_id));
        }
        if self.base_ids.contains(&0) || self.novel_ids.contains(&0) {
            return Err(Error::Background(0));
        }
        let base: BTreeSet<u8> = self.base_ids.iter().copied().collect();
        let novel: BTreeSet<u8> = self.novel_ids.iter().copied().collect();
        let mut overlap: Vec<u8> = base.intersection(&novel).copied().collect();
        for ids in [&self.base_ids, &self.novel_ids] {
            let mut seen = BTreeSet::new();
            for id in ids.iter() {
                if !seen.insert(*id) {
                    overlap.push(*id);
                }
            }
        }
        if !overlap.is_empty() {
            overlap.sort_unstable();
            overlap.dedup();
            return Err(Error::Overlap(overlap));
        }
        if self.base_ids.iter().chain(&self.novel_ids).any(|&id| id == IGNORE) {
            return Err(Error::Gap {
                expected: Vec::new(),
                found: vec![IGNORE],
            });
        }

        let nb = self.base_ids.len() as u8;
        let expected_base: Vec<u8> = (1..=nb).collect();
        let found_base: Vec<u8> = base.iter().copied().collect();
        if found_base != expected_base {
            return Err(Error::Gap {
                expected: expected_base,
                found: found_base,
            });
        }
        let nn = self.novel_ids.len();
        let expected_novel: Vec<u8> = (0..nn).map(|i| nb + 1 + i as u8).collect();
        let found_novel: Vec<u8> = novel.iter().copied().collect();
        if found_novel != expected_novel {
            return Err(Error::Gap {
                expected: expected_novel,
                found: found_novel,
            });
        }
        if self.phase == TaxonomyPhase::BaseOnly && nn > 0 {
            return Err(Error::PhaseMismatch {
                phase: self.phase.to_string(),
                reason: "novel classes".into(),
            });
        }
        Ok(())
    }

    /// Total number of classes K, background included.
    pub fn num_classes(&self) -> usize {
        1 + self.base_ids.len() + self.novel_ids.len()
    }

    /// Number of classes known after base training: background plus base ids.
    pub fn num_base_classes(&self) -> usize {
        1 + self.base_ids.len()
    }

    /// All ids in row order: background, base, novel.
    pub fn ids(&self) -> Vec<u8> {
        std::iter::once(self.background_id)
            .chain(self.base_ids.iter().copied())
            .chain(self.novel_ids.iter().copied())
            .collect()
    }

    pub fn contains(&self, id: u8) -> bool {
        id == self.background_id || self.base_ids.contains(&id) || self.novel_ids.contains(&id)
    }

    pub fn is_base(&self, id: u8) -> bool {
        self.base_ids.contains(&id)
    }

    pub fn is_novel(&self, id: u8) -> bool {
        self.novel_ids.contains(&id)
    }

    /// The same taxonomy restricted to background + base classes.
    pub fn to_base_only(&self) -> Self {
        ClassTaxonomy {
            background_id: self.background_id,
            base_ids: self.base_ids.clone(),
            novel_ids: Vec::new(),
            names: self
                .names
                .iter()
                .filter(|(id, _)| !self.novel_ids.contains(id))
                .map(|(id, n)| (*id, n.clone()))
                .collect(),
            phase: TaxonomyPhase::BaseOnly,
        }
    }

    pub fn name(&self, id: u8) -> String {
        self.names
            .get(&id)
            .cloned()
            .unwrap_or_else(|| format!("class {id}"))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::digest::canonical_digest(self).expect("taxonomy serializes")
    }
}

/// Free-function form of [`ClassTaxonomy::validate`].
pub fn validate_taxonomy(taxonomy: &ClassTaxonomy) -> Result<()> {
    taxonomy.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taxonomy(base: &[u8], novel: &[u8]) -> ClassTaxonomy {
        ClassTaxonomy {
            background_id: 0,
            base_ids: base.to_vec(),
            novel_ids: novel.to_vec(),
            names: BTreeMap::new(),
            phase: if novel.is_empty() {
                TaxonomyPhase::BaseOnly
            } else {
                TaxonomyPhase::Phase1
            },
        }
    }

    #[test]
    fn base_only_seven_classes() {
        validate_taxonomy(&taxonomy(&[1, 2, 3, 4, 5, 6, 7], &[])).unwrap();
    }

    #[test]
    fn seven_base_four_novel() {
        let t = taxonomy(&[1, 2, 3, 4, 5, 6, 7], &[8, 9, 10, 11]);
        validate_taxonomy(&t).unwrap();
        assert_eq!(t.num_classes(), 12);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = validate_taxonomy(&taxonomy(&[1, 2], &[2, 3])).unwrap_err();
        assert!(matches!(err, Error::Overlap(ref ids) if ids == &vec![2]), "{err}");
    }

    #[test]
    fn gaps_are_rejected() {
        assert!(matches!(
            validate_taxonomy(&taxonomy(&[1, 3], &[])),
            Err(Error::Gap { .. })
        ));
        assert!(matches!(
            validate_taxonomy(&taxonomy(&[1, 2], &[4])),
            Err(Error::Gap { .. })
        ));
    }

    #[test]
    fn background_reuse_is_rejected() {
        assert!(matches!(
            validate_taxonomy(&taxonomy(&[0, 1], &[])),
            Err(Error::Background(0))
        ));
        let mut t = taxonomy(&[1], &[]);
        t.background_id = 3;
        assert!(matches!(validate_taxonomy(&t), Err(Error::Background(3))));
    }

    #[test]
    fn base_only_phase_rejects_novel_ids() {
        let mut t = taxonomy(&[1, 2], &[3]);
        t.phase = TaxonomyPhase::BaseOnly;
        assert!(matches!(validate_taxonomy(&t), Err(Error::PhaseMismatch { .. })));
    }

    #[test]
    fn novel_order_follows_support_order() {
        validate_taxonomy(&taxonomy(&[1, 2], &[4, 3])).unwrap();
    }

    #[test]
    fn serde_round_trip_keeps_digest() {
        let t = ClassTaxonomy::with_novel(3, 1, TaxonomyPhase::Phase1)
            .with_names(&[(0, "background"), (4, "vehicle")]);
        let json = serde_json::to_string(&t).unwrap();
        let back: ClassTaxonomy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.digest(), t.digest());
        assert!(json.contains("\"phase1\""));
    }
}
