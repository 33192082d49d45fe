//! MinHash sketches of active-sample index sets.
//!
//! Coordinate `t` of a sketch is `min_{s in S} h_t(s)` with
//! `h_t(s) = (a_t (s + 1) + b_t) mod (2^61 - 1)`. The fraction of coordinates
//! on which two sketches disagree estimates the Jaccard distance of the sets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::signatures::{NeuronFilterReport, SignatureMatrix};

pub const MERSENNE_61: u64 = (1 << 61) - 1;
pub const DEFAULT_MASTER_SEED: u64 = 42;

/// `x mod (2^61 - 1)` for any `x < 2^128`.
#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let mut r = (x & p) + (x >> 61);
    r = (r & p) + (r >> 61);
    let mut r = r as u64;
    if r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

/// Identity of a hash family; sketches are only comparable within one family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FamilyId {
    pub k: usize,
    pub master_seed: u64,
}

/// A bank of `num_hashes()` hash functions over sample indices.
pub trait IndexHasher: Sync {
    fn num_hashes(&self) -> usize;
    fn hash(&self, t: usize, index: u64) -> u64;
    fn id(&self) -> FamilyId;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    master_seed: u64,
    params: Vec<(u64, u64)>,
}

impl HashFamily {
    pub fn k(&self) -> usize {
        self.params.len()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// The `(a_t, b_t)` pairs.
    pub fn params(&self) -> &[(u64, u64)] {
        &self.params
    }
}

impl IndexHasher for HashFamily {
    fn num_hashes(&self) -> usize {
        self.params.len()
    }

    #[inline]
    fn hash(&self, t: usize, index: u64) -> u64 {
        let (a, b) = self.params[t];
        mod_mersenne(a as u128 * (index as u128 + 1) + b as u128)
    }

    fn id(&self) -> FamilyId {
        FamilyId {
            k: self.params.len(),
            master_seed: self.master_seed,
        }
    }
}

/// Draws `k` pairs from one SplitMix64 stream: `a_t` uniform in `[1, p-1]`,
/// then `b_t` uniform in `[0, p-1]`.
pub fn build_hash_family(k: usize, master_seed: u64) -> Result<HashFamily> {
    if k == 0 {
        return Err(Error::Domain("a hash family needs at least one function".into()));
    }
    let mut rng = SplitMix64::new(master_seed);
    let params = (0..k)
        .map(|_| {
            let a = 1 + rng.below(MERSENNE_61 - 1);
            let b = rng.below(MERSENNE_61);
            (a, b)
        })
        .collect();
    Ok(HashFamily { master_seed, params })
}

/// Smallest `K` with `2 exp(-K delta^2 / 2) <= alpha`.
pub fn required_hashes(alpha: f64, delta: f64) -> Result<u64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok((2.0 * (2.0 / alpha).ln() / (delta * delta)).ceil() as u64)
}

/// Warning text when `delta` is finer than the sample resolution `1/n_samples`.
pub fn resolution_warning(delta: f64, n_samples: usize) -> Option<String> {
    let resolution = 1.0 / n_samples as f64;
    (delta < resolution).then(|| {
        format!("distance gap {delta} is below the sample resolution 1/{n_samples} = {resolution:.3e}")
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSketch {
    pub values: Vec<u64>,
    pub family: FamilyId,
}

impl MinHashSketch {
    pub fn k(&self) -> usize {
        self.values.len()
    }
}

pub fn sketch<H: IndexHasher + ?Sized>(active: &[u64], family: &H) -> Result<MinHashSketch> {
    if active.is_empty() {
        return Err(Error::EmptySet);
    }
    let k = family.num_hashes();
    let mut values = vec![u64::MAX; k];
    for &s in active {
        for (t, v) in values.iter_mut().enumerate() {
            let h = family.hash(t, s);
            if h < *v {
                *v = h;
            }
        }
    }
    Ok(MinHashSketch {
        values,
        family: family.id(),
    })
}

fn check_family(a: FamilyId, b: FamilyId) -> Result<()> {
    if a != b {
        return Err(Error::FamilyMismatch(format!(
            "k={} seed={} vs k={} seed={}",
            a.k, a.master_seed, b.k, b.master_seed
        )));
    }
    Ok(())
}

/// Fraction of sketch coordinates that differ.
pub fn estimate_distance(a: &MinHashSketch, b: &MinHashSketch) -> Result<f64> {
    check_family(a.family, b.family)?;
    if a.values.len() != b.values.len() || a.values.is_empty() {
        return Err(Error::FamilyMismatch(format!(
            "sketch lengths {} and {}",
            a.values.len(),
            b.values.len()
        )));
    }
    let differ = a.values.iter().zip(&b.values).filter(|(x, y)| x != y).count();
    Ok(differ as f64 / a.values.len() as f64)
}

/// Sketches of one layer's representative neurons, keyed by neuron index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSketches {
    pub family: FamilyId,
    pub sketches: BTreeMap<usize, MinHashSketch>,
}

#[derive(Serialize, Deserialize)]
struct SketchFile {
    k: usize,
    master_seed: u64,
    sketches: BTreeMap<usize, Vec<u64>>,
}

impl LayerSketches {
    pub fn len(&self) -> usize {
        self.sketches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sketches.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SketchFile {
            k: self.family.k,
            master_seed: self.family.master_seed,
            sketches: self
                .sketches
                .iter()
                .map(|(&j, s)| (j, s.values.clone()))
                .collect(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SketchFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let family = FamilyId {
            k: file.k,
            master_seed: file.master_seed,
        };
        let mut sketches = BTreeMap::new();
        for (j, values) in file.sketches {
            if values.len() != file.k {
                return Err(Error::Parse(format!(
                    "sketch {j} has {} values, header says k={}",
                    values.len(),
                    file.k
                )));
            }
            sketches.insert(j, MinHashSketch { values, family });
        }
        Ok(Self { family, sketches })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Sketches every representative listed in `report`.
pub fn sketch_layer<H: IndexHasher + ?Sized>(
    m: &SignatureMatrix,
    report: &NeuronFilterReport,
    family: &H,
) -> Result<LayerSketches> {
    if report.n_neurons != m.n_neurons() {
        return Err(Error::Shape(format!(
            "filter report covers {} neurons, matrix has {}",
            report.n_neurons,
            m.n_neurons()
        )));
    }
    if let Some(&j) = report.representatives.iter().find(|&&j| j >= m.n_neurons()) {
        return Err(Error::Index {
            index: j,
            len: m.n_neurons(),
        });
    }
    let sketches = report
        .representatives
        .par_iter()
        .map(|&j| sketch(&m.active_indices(j), family).map(|s| (j, s)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(LayerSketches {
        family: family.id(),
        sketches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signatures::classify_neurons;

    #[test]
    fn mersenne_reduction() {
        let p = MERSENNE_61 as u128;
        for x in [0u128, 1, p - 1, p, p + 1, 2 * p, p * p - 1, u128::from(u64::MAX) * p + 12345] {
            assert_eq!(mod_mersenne(x) as u128, x % p, "x = {x}");
        }
    }

    #[test]
    fn k_calculator() {
        assert_eq!(required_hashes(0.05, 0.1).unwrap(), 738);
        assert_eq!(required_hashes(0.05, 0.05).unwrap(), 2952);
        // ln(2/alpha) = 2 gives K = 4; ln(2/alpha) = 1 gives K = 2
        let alpha = 2.0 / std::f64::consts::E.powi(2);
        assert_eq!(required_hashes(alpha, 1.0).unwrap(), 4);
        assert_eq!(required_hashes(2.0 / std::f64::consts::E, 1.0).unwrap(), 2);
        assert!(required_hashes(0.0, 0.1).is_err());
        assert!(required_hashes(0.05, 0.0).is_err());
        assert!(required_hashes(0.05, 1.5).is_err());
    }

    #[test]
    fn warns_below_resolution() {
        assert!(resolution_warning(0.0001, 1000).is_some());
        assert!(resolution_warning(0.1, 1000).is_none());
    }

    #[test]
    fn family_is_deterministic() {
        let a = build_hash_family(512, 42).unwrap();
        assert_eq!(a, build_hash_family(512, 42).unwrap());
        assert_ne!(a, build_hash_family(512, 43).unwrap());
        let mut pairs = a.params().to_vec();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), 512);
        assert!(a.params().iter().all(|&(a, b)| (1..MERSENNE_61).contains(&a) && b < MERSENNE_61));
        assert!(build_hash_family(0, 1).is_err());
    }

    #[test]
    fn singleton_sketch_is_hash() {
        let f = build_hash_family(16, 7).unwrap();
        let s = sketch(&[5], &f).unwrap();
        for t in 0..16 {
            assert_eq!(s.values[t], f.hash(t, 5));
        }
    }

    #[test]
    fn superset_is_coordinatewise_smaller() {
        let f = build_hash_family(64, 1).unwrap();
        let a = sketch(&[1, 4, 9], &f).unwrap();
        let ab = sketch(&[1, 2, 4, 9, 30], &f).unwrap();
        assert!(ab.values.iter().zip(&a.values).all(|(x, y)| x <= y));
    }

    #[test]
    fn empty_set_rejected() {
        let f = build_hash_family(4, 1).unwrap();
        assert!(matches!(sketch(&[], &f), Err(Error::EmptySet)));
    }

    #[test]
    fn estimator_edges() {
        let f = build_hash_family(32, 3).unwrap();
        let a = sketch(&[0, 1, 2], &f).unwrap();
        assert_eq!(estimate_distance(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.values.iter_mut().for_each(|v| *v += 1);
        assert_eq!(estimate_distance(&a, &b).unwrap(), 1.0);
        let other = sketch(&[0, 1, 2], &build_hash_family(32, 4).unwrap()).unwrap();
        assert!(matches!(estimate_distance(&a, &other), Err(Error::FamilyMismatch(_))));
    }

    #[test]
    fn layer_sketch_counts() {
        let m = SignatureMatrix::from_bools(&[
            vec![false, false, false],
            vec![true, false, false],
            vec![false, true, true],
            vec![true, false, false],
        ])
        .unwrap();
        let report = classify_neurons(&m);
        let f = build_hash_family(8, 42).unwrap();
        let ls = sketch_layer(&m, &report, &f).unwrap();
        assert_eq!(ls.sketches.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert!(ls.sketches.values().all(|s| s.k() == 8));

        let back = LayerSketches::from_json(&ls.to_json().unwrap()).unwrap();
        assert_eq!(back, ls);
    }

    #[test]
    fn sketch_file_shape() {
        let m = SignatureMatrix::from_bools(&[vec![true, false]]).unwrap();
        let ls = sketch_layer(&m, &classify_neurons(&m), &build_hash_family(2, 42).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&ls.to_json().unwrap()).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["master_seed"], 42);
        assert_eq!(v["sketches"]["0"].as_array().unwrap().len(), 2);
    }
}
