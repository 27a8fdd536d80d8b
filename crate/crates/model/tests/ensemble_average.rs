//! Probability averaging against a brute-force mean, with its symmetry
//! properties.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segland_core::ProbabilityMap;
use segland_model::average_fusion;

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, k: usize) -> ProbabilityMap {
    let mut data = Vec::with_capacity(h * w * k);
    for _ in 0..h * w {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        data.extend(raw.iter().map(|v| (v / sum) as f32));
    }
    ProbabilityMap::new(h, w, k, data).unwrap()
}

fn random_set(rng: &mut ChaCha8Rng) -> Vec<ProbabilityMap> {
    let (n, h, w, k) = (
        rng.random_range(1..6),
        rng.random_range(1..9),
        rng.random_range(1..9),
        rng.random_range(2..8),
    );
    (0..n).map(|_| random_map(rng, h, w, k)).collect()
}

#[test]
fn matches_brute_force_mean_on_100_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let maps = random_set(&mut rng);
        let fused = average_fusion(&maps).unwrap();
        let (h, w, k) = maps[0].dims();
        for r in 0..h {
            for c in 0..w {
                for class in 0..k {
                    let mean = maps.iter().map(|m| m.pixel(r, c)[class] as f64).sum::<f64>() / maps.len() as f64;
                    assert!((fused.pixel(r, c)[class] as f64 - mean).abs() <= 1e-7);
                }
            }
        }
        assert!(fused.satisfies_simplex());
    }
}

#[test]
fn examples_and_errors() {
    let a = ProbabilityMap::new(1, 1, 2, vec![0.8, 0.2]).unwrap();
    let b = ProbabilityMap::new(1, 1, 2, vec![0.6, 0.4]).unwrap();
    let fused = average_fusion(&[a.clone(), b]).unwrap();
    assert!((fused.data[0] - 0.7).abs() < 1e-7 && (fused.data[1] - 0.3).abs() < 1e-7);
    assert_eq!(average_fusion(std::slice::from_ref(&a)).unwrap(), a);
    assert_eq!(average_fusion(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
    assert!(average_fusion(&[]).is_err());
    let other = ProbabilityMap::new(1, 1, 3, vec![0.2, 0.3, 0.5]).unwrap();
    assert!(average_fusion(&[a, other]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let maps = random_set(&mut rng);
        let mut shuffled = maps.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = average_fusion(&maps).unwrap();
        let b = average_fusion(&shuffled).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() <= 1e-7);
        }
    }

    #[test]
    fn commutes_with_cropping(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let maps = random_set(&mut rng);
        let (h, w, _) = maps[0].dims();
        let (top, left) = (rng.random_range(0..h), rng.random_range(0..w));
        let (ch, cw) = (rng.random_range(1..=h - top), rng.random_range(1..=w - left));
        let crops: Vec<_> = maps.iter().map(|m| m.crop(top, left, ch, cw)).collect();
        prop_assert_eq!(
            average_fusion(&maps).unwrap().crop(top, left, ch, cw),
            average_fusion(&crops).unwrap()
        );
    }
}
