//! Confusion-matrix accumulation, per-class IoU, base/novel mIoU and the
//! challenge total score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::LabelMap;
use crate::taxonomy::ClassTaxonomy;
use crate::IGNORE;

/// Weight of base-class mIoU in the challenge total.
pub const BASE_SCORE_WEIGHT: f64 = 0.4;
/// Weight of novel-class mIoU in the challenge total.
pub const NOVEL_SCORE_WEIGHT: f64 = 0.6;

/// K×K pixel counts, rows = truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    #[inline]
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        (0..self.k).map(|p| self.get(k, p)).sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, k)).sum()
    }

    /// Adds one tile. Pixels whose truth is the ignore value are skipped; a
    /// counted pixel must have both ids below K.
    pub fn accumulate(&mut self, pred: &LabelMap, truth: &LabelMap) -> Result<()> {
        if pred.dims() != truth.dims() {
            return Err(Error::Shape(format!(
                "prediction {:?} vs truth {:?}",
                pred.dims(),
                truth.dims()
            )));
        }
        let k = self.k;
        for (&p, &t) in pred.data.iter().zip(&truth.data) {
            if t == IGNORE {
                continue;
            }
            for id in [t, p] {
                if id as usize >= k {
                    return Err(Error::BadId { id, k });
                }
            }
            self.counts[t as usize * k + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::Shape(format!("K = {} vs K = {}", self.k, other.k)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

pub fn accumulate_confusion(pred: &LabelMap, truth: &LabelMap, k: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(k);
    cm.accumulate(pred, truth)?;
    Ok(cm)
}

/// IoU_k = TP / (row_k + col_k − TP); `None` when the class is absent from
/// both truth and prediction.
pub fn iou_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.k)
        .map(|k| {
            let tp = cm.get(k, k);
            let denom = cm.row_sum(k) + cm.col_sum(k) - tp;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect()
}

/// Mean of the defined IoUs over `subset` (ids index into `ious`).
pub fn miou(ious: &[Option<f64>], subset: &[u8]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let defined: Vec<f64> = subset
        .iter()
        .filter_map(|&id| ious.get(id as usize).copied().flatten())
        .collect();
    if defined.is_empty() {
        return Err(Error::NoDefinedIoU);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// `0.4 × base + 0.6 × novel`, all in percent.
pub fn challenge_score(base_miou: f64, novel_miou: f64) -> Result<f64> {
    for v in [base_miou, novel_miou] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::Range(v));
        }
    }
    Ok(BASE_SCORE_WEIGHT * base_miou + NOVEL_SCORE_WEIGHT * novel_miou)
}

/// Treatment of classes absent from both truth and prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbsentPolicy {
    #[default]
    Exclude,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassGroup {
    Background,
    Base,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub id: u8,
    pub name: String,
    pub group: ClassGroup,
    /// Percent; `None` when undefined.
    pub iou: Option<f64>,
}

/// Evaluation report; IoU-family numbers are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassIou>,
    pub base_miou: Option<f64>,
    pub novel_miou: Option<f64>,
    pub total_score: Option<f64>,
    pub absent_policy: AbsentPolicy,
    pub counted_pixels: u64,
    pub taxonomy_digest: String,
    pub confusion: ConfusionMatrix,
}

/// Builds the report; background is excluded from both mIoU subsets.
pub fn build_report(cm: &ConfusionMatrix, taxonomy: &ClassTaxonomy, policy: AbsentPolicy) -> Result<EvalReport> {
    if cm.k != taxonomy.num_classes() {
        return Err(Error::Shape(format!(
            "confusion matrix K = {} for {} classes",
            cm.k,
            taxonomy.num_classes()
        )));
    }
    let ious: Vec<Option<f64>> = iou_per_class(cm)
        .into_iter()
        .map(|v| match policy {
            AbsentPolicy::Exclude => v,
            AbsentPolicy::Zero => Some(v.unwrap_or(0.0)),
        })
        .collect();
    let group_miou = |ids: &[u8]| -> Result<Option<f64>> {
        match miou(&ious, ids) {
            Ok(v) => Ok(Some(100.0 * v)),
            Err(Error::EmptySubset | Error::NoDefinedIoU) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let base_miou = group_miou(&taxonomy.base_ids)?;
    let novel_miou = group_miou(&taxonomy.novel_ids)?;
    let total_score = match (base_miou, novel_miou) {
        (Some(b), Some(n)) => Some(challenge_score(b, n)?),
        _ => None,
    };
    let classes = taxonomy
        .ids()
        .into_iter()
        .map(|id| ClassIou {
            id,
            name: taxonomy.name(id),
            group: if id == taxonomy.background_id {
                ClassGroup::Background
            } else if taxonomy.is_base(id) {
                ClassGroup::Base
            } else {
                ClassGroup::Novel
            },
            iou: ious[id as usize].map(|v| 100.0 * v),
        })
        .collect();
    Ok(EvalReport {
        classes,
        base_miou,
        novel_miou,
        total_score,
        absent_policy: policy,
        counted_pixels: cm.total(),
        taxonomy_digest: taxonomy.digest(),
        confusion: cm.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let l = LabelMap::filled(2, 2, 1);
        let cm = accumulate_confusion(&l, &l, 3).unwrap();
        assert_eq!(cm.get(1, 1), 4);
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn hand_walk_with_ignore() {
        let truth = LabelMap::from_rows(&[[0u8, 1], [255, 1]]);
        let pred = LabelMap::from_rows(&[[0u8, 0], [1, 1]]);
        let cm = accumulate_confusion(&pred, &truth, 2).unwrap();
        assert_eq!(cm.counts, vec![1, 0, 1, 1]);
    }

    #[test]
    fn fully_ignored_is_zero() {
        let cm = accumulate_confusion(&LabelMap::filled(2, 2, 0), &LabelMap::filled(2, 2, 255), 2).unwrap();
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn bad_ids_and_shapes() {
        let ok = LabelMap::filled(1, 2, 0);
        assert!(matches!(
            accumulate_confusion(&LabelMap::filled(1, 2, 5), &ok, 3),
            Err(Error::BadId { id: 5, k: 3 })
        ));
        assert!(matches!(
            accumulate_confusion(&ok, &LabelMap::filled(1, 3, 0), 3),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn iou_from_two_by_two() {
        let cm = ConfusionMatrix {
            k: 2,
            counts: vec![3, 1, 2, 4],
        };
        let iou = iou_per_class(&cm);
        assert_relative_eq!(iou[0].unwrap(), 0.5);
        assert_relative_eq!(iou[1].unwrap(), 4.0 / 7.0);
    }

    #[test]
    fn absent_class_is_undefined() {
        let cm = ConfusionMatrix {
            k: 3,
            counts: vec![2, 0, 0, 0, 5, 0, 0, 0, 0],
        };
        let iou = iou_per_class(&cm);
        assert_eq!(iou, vec![Some(1.0), Some(1.0), None]);
        assert_relative_eq!(miou(&iou, &[1, 2]).unwrap(), 1.0);
        assert!(matches!(miou(&iou, &[2]), Err(Error::NoDefinedIoU)));
        assert!(matches!(miou(&iou, &[]), Err(Error::EmptySubset)));
    }

    #[test]
    fn reported_base_ious() {
        let ious: Vec<Option<f64>> = std::iter::once(None)
            .chain([69.18, 53.03, 30.92, 62.30, 63.74, 53.27, 61.74].map(Some))
            .collect();
        let m = miou(&ious, &[1, 2, 3, 4, 5, 6, 7]).unwrap();
        assert!((m - 56.31).abs() <= 0.05, "{m}");
        assert_relative_eq!(miou(&ious, &[3]).unwrap(), 30.92);
    }

    #[test]
    fn score_arithmetic() {
        assert!((challenge_score(56.27, 53.34).unwrap() - 54.51).abs() <= 0.02);
        assert_eq!(challenge_score(0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(challenge_score(100.0, 100.0).unwrap(), 100.0, epsilon = 1e-12);
        assert!(matches!(challenge_score(101.0, 3.0), Err(Error::Range(_))));
        assert!(matches!(challenge_score(1.0, -3.0), Err(Error::Range(_))));
    }

    #[test]
    fn report_excludes_background() {
        let tax = ClassTaxonomy::with_novel(2, 1, crate::TaxonomyPhase::Phase1);
        // background perfect, class 1 perfect, class 2 half, class 3 absent
        let truth = LabelMap::from_rows(&[[0u8, 1, 2, 2]]);
        let pred = LabelMap::from_rows(&[[0u8, 1, 2, 1]]);
        let cm = accumulate_confusion(&pred, &truth, 4).unwrap();
        let r = build_report(&cm, &tax, AbsentPolicy::Exclude).unwrap();
        // IoU1 = 1/2, IoU2 = 1/2
        assert_relative_eq!(r.base_miou.unwrap(), 50.0);
        assert_eq!(r.novel_miou, None);
        assert_eq!(r.total_score, None);
        let r = build_report(&cm, &tax, AbsentPolicy::Zero).unwrap();
        assert_eq!(r.novel_miou, Some(0.0));
        assert_relative_eq!(r.total_score.unwrap(), 20.0);
    }

    proptest! {
        #[test]
        fn accumulation_is_additive(
            a in proptest::collection::vec((0u8..5, 0u8..5), 16),
            b in proptest::collection::vec((0u8..5, 0u8..5), 16),
        ) {
            let split = |v: &Vec<(u8, u8)>| {
                let p: Vec<u8> = v.iter().map(|x| x.0).collect();
                let t: Vec<u8> = v.iter().map(|x| if x.1 == 4 { 255 } else { x.1 }).collect();
                (LabelMap::new(4, 4, p).unwrap(), LabelMap::new(4, 4, t).unwrap())
            };
            let (pa, ta) = split(&a);
            let (pb, tb) = split(&b);
            let mut ab = ConfusionMatrix::new(5);
            ab.accumulate(&pa, &ta).unwrap();
            ab.accumulate(&pb, &tb).unwrap();
            let mut ba = accumulate_confusion(&pb, &tb, 5).unwrap();
            ba.merge(&accumulate_confusion(&pa, &ta, 5).unwrap()).unwrap();
            prop_assert_eq!(&ab, &ba);

            let ious = iou_per_class(&ab);
            for (k, v) in ious.iter().enumerate() {
                if let Some(v) = v {
                    prop_assert!((0.0..=1.0).contains(v));
                    let perfect = ab.row_sum(k) == ab.get(k, k) && ab.col_sum(k) == ab.get(k, k);
                    prop_assert_eq!(*v == 1.0, perfect);
                }
            }
            let subset = [1u8, 2, 3];
            if let Ok(m) = miou(&ious, &subset) {
                let defined: Vec<f64> = subset.iter().filter_map(|&i| ious[i as usize]).collect();
                let lo = defined.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = defined.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
            }
        }

        #[test]
        fn iou_is_relabeling_equivariant(
            px in proptest::collection::vec((0u8..4, 0u8..4), 1..40),
            rot in 0u8..4,
        ) {
            let n = px.len();
            let pred = LabelMap::new(1, n, px.iter().map(|x| x.0).collect()).unwrap();
            let truth = LabelMap::new(1, n, px.iter().map(|x| x.1).collect()).unwrap();
            let relabel = |l: &LabelMap| LabelMap::new(1, n, l.data.iter().map(|v| (v + rot) % 4).collect()).unwrap();
            let a = iou_per_class(&accumulate_confusion(&pred, &truth, 4).unwrap());
            let b = iou_per_class(&accumulate_confusion(&relabel(&pred), &relabel(&truth), 4).unwrap());
            for k in 0..4u8 {
                prop_assert_eq!(a[k as usize], b[((k + rot) % 4) as usize]);
            }
        }
    }
}
