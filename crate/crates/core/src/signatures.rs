//! Sampled activation signatures, packed one row per neuron.
//!
//! Bit `s` of row `j` is set iff neuron `j` has a strictly positive
//! pre-activation on sample `s`. Rows are stored in 64-bit words with
//! little-endian bit order (sample `s` lives in word `s / 64`, bit `s % 64`),
//! and the padding bits of each row's last word are always zero.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Layer, Network};
use crate::sampling::SampleSet;
use crate::scalar::{dot, Real};

pub const SASM_MAGIC: &[u8; 4] = b"SASM";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureMatrix {
    n_neurons: usize,
    n_samples: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

fn words_for(n_samples: usize) -> usize {
    n_samples.div_ceil(64)
}

fn tail_mask(n_samples: usize) -> u64 {
    match n_samples % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl SignatureMatrix {
    pub fn zeros(n_neurons: usize, n_samples: usize) -> Self {
        let words_per_row = words_for(n_samples);
        Self {
            n_neurons,
            n_samples,
            words_per_row,
            bits: vec![0; n_neurons * words_per_row],
        }
    }

    pub fn from_bools(rows: &[Vec<bool>]) -> Result<Self> {
        let n_samples = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), n_samples);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n_samples {
                return Err(Error::Shape(format!("row {j} has {} bits, expected {n_samples}", row.len())));
            }
            for (s, &b) in row.iter().enumerate() {
                if b {
                    m.set(j, s, true);
                }
            }
        }
        Ok(m)
    }

    /// Builds a matrix from packed rows; padding bits must already be zero.
    pub fn from_words(n_neurons: usize, n_samples: usize, bits: Vec<u64>) -> Result<Self> {
        let words_per_row = words_for(n_samples);
        if bits.len() != n_neurons * words_per_row {
            return Err(Error::Shape(format!(
                "{} words given, {n_neurons} x {n_samples} needs {}",
                bits.len(),
                n_neurons * words_per_row
            )));
        }
        let m = Self {
            n_neurons,
            n_samples,
            words_per_row,
            bits,
        };
        if words_per_row > 0 {
            let mask = !tail_mask(n_samples);
            for j in 0..n_neurons {
                if m.row(j)[words_per_row - 1] & mask != 0 {
                    return Err(Error::Parse(format!("row {j} has non-zero padding bits")));
                }
            }
        }
        Ok(m)
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    pub fn row(&self, j: usize) -> &[u64] {
        &self.bits[j * self.words_per_row..(j + 1) * self.words_per_row]
    }

    pub fn checked_row(&self, j: usize) -> Result<&[u64]> {
        if j >= self.n_neurons {
            return Err(Error::Index {
                index: j,
                len: self.n_neurons,
            });
        }
        Ok(self.row(j))
    }

    pub fn get(&self, j: usize, s: usize) -> bool {
        assert!(s < self.n_samples, "sample {s} out of range");
        self.row(j)[s / 64] >> (s % 64) & 1 == 1
    }

    pub fn set(&mut self, j: usize, s: usize, value: bool) {
        assert!(j < self.n_neurons && s < self.n_samples, "({j}, {s}) out of range");
        let w = &mut self.bits[j * self.words_per_row + s / 64];
        if value {
            *w |= 1 << (s % 64);
        } else {
            *w &= !(1 << (s % 64));
        }
    }

    pub fn popcount(&self, j: usize) -> u64 {
        popcount(self.row(j))
    }

    /// Ascending indices of the samples that activate neuron `j`.
    pub fn active_indices(&self, j: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.popcount(j) as usize);
        for (w, &word) in self.row(j).iter().enumerate() {
            let mut word = word;
            while word != 0 {
                let b = word.trailing_zeros() as u64;
                out.push(w as u64 * 64 + b);
                word &= word - 1;
            }
        }
        out
    }

    /// Rows `rows` of this matrix, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut bits = Vec::with_capacity(rows.len() * self.words_per_row);
        for &j in rows {
            bits.extend_from_slice(self.row(j));
        }
        Self {
            n_neurons: rows.len(),
            n_samples: self.n_samples,
            words_per_row: self.words_per_row,
            bits,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = u32::try_from(self.n_neurons)
            .map_err(|_| Error::Shape(format!("{} neurons do not fit a u32 header", self.n_neurons)))?;
        let mut out = Vec::with_capacity(16 + self.bits.len() * 8);
        out.extend_from_slice(SASM_MAGIC);
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&(self.n_samples as u64).to_le_bytes());
        for w in &self.bits {
            out.extend_from_slice(&w.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != SASM_MAGIC {
            return Err(Error::Parse("not a SASM signature file".into()));
        }
        let n_neurons = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let n_samples = usize::try_from(u64::from_le_bytes(bytes[8..16].try_into().unwrap()))
            .map_err(|_| Error::Parse("sample count overflows usize".into()))?;
        let body = &bytes[16..];
        let expected = n_neurons
            .checked_mul(words_for(n_samples))
            .and_then(|w| w.checked_mul(8))
            .ok_or_else(|| Error::Parse("header dimensions overflow".into()))?;
        if body.len() != expected {
            return Err(Error::Parse(format!(
                "SASM body has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let bits = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_words(n_neurons, n_samples, bits)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn popcount(words: &[u64]) -> u64 {
    words.iter().map(|w| w.count_ones() as u64).sum()
}

/// `(|A ∩ B|, |A ∪ B|)` of two packed rows of equal length.
pub fn intersection_union(a: &[u64], b: &[u64]) -> (u64, u64) {
    a.iter().zip(b).fold((0, 0), |(i, u), (&x, &y)| {
        (i + (x & y).count_ones() as u64, u + (x | y).count_ones() as u64)
    })
}

/// Jaccard distance of two packed rows. Two empty rows are at distance 0.
pub fn jaccard_distance_words(a: &[u64], b: &[u64]) -> f64 {
    let (inter, union) = intersection_union(a, b);
    if union == 0 {
        0.0
    } else {
        (union - inter) as f64 / union as f64
    }
}

pub fn exact_jaccard_distance(m: &SignatureMatrix, j: usize, l: usize) -> Result<f64> {
    Ok(jaccard_distance_words(m.checked_row(j)?, m.checked_row(l)?))
}

/// Signature matrix of `layer` on `samples`.
pub fn compute_signature_matrix<T: Real>(layer: &Layer<T>, samples: &SampleSet<T>) -> Result<SignatureMatrix> {
    layer.validate()?;
    if samples.dim() != layer.input_dim() {
        return Err(Error::Shape(format!(
            "samples have {} dimensions, layer expects {}",
            samples.dim(),
            layer.input_dim()
        )));
    }
    signatures_from_inputs(layer, &samples.points)
}

fn signatures_from_inputs<T: Real>(layer: &Layer<T>, inputs: &[Vec<T>]) -> Result<SignatureMatrix> {
    let d = layer.input_dim();
    if let Some(s) = inputs.iter().position(|x| x.len() != d) {
        return Err(Error::Shape(format!("sample {s} has {} coordinates, expected {d}", inputs[s].len())));
    }
    let mut m = SignatureMatrix::zeros(layer.width(), inputs.len());
    let wpr = m.words_per_row;
    if wpr == 0 {
        return Ok(m);
    }
    m.bits
        .par_chunks_mut(wpr)
        .zip(layer.weights.par_iter().zip(layer.bias.par_iter()))
        .for_each(|(row, (w, &b))| {
            for (s, x) in inputs.iter().enumerate() {
                if dot(w, x) + b > T::zero() {
                    row[s / 64] |= 1 << (s % 64);
                }
            }
        });
    Ok(m)
}

/// Signatures of layer `layer_index`, with `samples` given in the network's
/// input space and propagated through the preceding layers.
pub fn network_layer_signatures<T: Real>(
    network: &Network<T>,
    layer_index: usize,
    samples: &SampleSet<T>,
) -> Result<SignatureMatrix> {
    let layer = network.layers.get(layer_index).ok_or(Error::Index {
        index: layer_index,
        len: network.layers.len(),
    })?;
    if samples.dim() != network.input_dim() {
        return Err(Error::Shape(format!(
            "samples have {} dimensions, network expects {}",
            samples.dim(),
            network.input_dim()
        )));
    }
    if layer_index == 0 {
        return compute_signature_matrix(layer, samples);
    }
    let inputs = samples
        .points
        .par_iter()
        .map(|x| network.forward_through(layer_index, x))
        .collect::<Result<Vec<_>>>()?;
    signatures_from_inputs(layer, &inputs)
}

pub fn activation_frequency(m: &SignatureMatrix) -> Vec<f64> {
    (0..m.n_neurons)
        .map(|j| {
            if m.n_samples == 0 {
                0.0
            } else {
                m.popcount(j) as f64 / m.n_samples as f64
            }
        })
        .collect()
}

/// Trivial and duplicate neurons of one layer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronFilterReport {
    pub n_neurons: usize,
    pub dead: Vec<usize>,
    pub always_active: Vec<usize>,
    /// Groups of two or more identical signatures, each sorted ascending.
    pub duplicate_groups: Vec<Vec<usize>>,
    /// Smallest index of every distinct non-trivial signature, ascending.
    pub representatives: Vec<usize>,
}

impl NeuronFilterReport {
    pub fn n_unique(&self) -> usize {
        self.representatives.len()
    }
}

pub fn classify_neurons(m: &SignatureMatrix) -> NeuronFilterReport {
    let mut report = NeuronFilterReport {
        n_neurons: m.n_neurons,
        ..Default::default()
    };
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut seen: HashMap<&[u64], usize> = HashMap::new();
    for j in 0..m.n_neurons {
        let ones = m.popcount(j);
        if ones == 0 {
            report.dead.push(j);
        } else if ones == m.n_samples as u64 {
            report.always_active.push(j);
        } else if let Some(&g) = seen.get(m.row(j)) {
            groups[g].push(j);
        } else {
            seen.insert(m.row(j), groups.len());
            groups.push(vec![j]);
        }
    }
    // groups are created in ascending order of their smallest member
    for g in groups {
        report.representatives.push(g[0]);
        if g.len() > 1 {
            report.duplicate_groups.push(g);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;

    fn rows(r: &[&[u8]]) -> SignatureMatrix {
        let b: Vec<Vec<bool>> = r.iter().map(|row| row.iter().map(|&x| x == 1).collect()).collect();
        SignatureMatrix::from_bools(&b).unwrap()
    }

    fn points(p: &[[f64; 2]]) -> SampleSet<f64> {
        SampleSet::from_points(p.iter().map(|x| x.to_vec()).collect()).unwrap()
    }

    #[test]
    fn half_plane_test() {
        let layer = Layer::new(vec![vec![1.0, 0.0]], vec![0.0], Activation::Relu).unwrap();
        let m = compute_signature_matrix(&layer, &points(&[[1.0, 0.0], [-1.0, 0.0]])).unwrap();
        assert!(m.get(0, 0));
        assert!(!m.get(0, 1));
    }

    #[test]
    fn constant_negative_is_dead() {
        let layer = Layer::new(vec![vec![0.0, 0.0]], vec![-1.0], Activation::Relu).unwrap();
        let m = compute_signature_matrix(&layer, &points(&[[1.0, 0.0], [-1.0, 5.0], [3.0, 3.0]])).unwrap();
        assert_eq!(m.popcount(0), 0);
    }

    #[test]
    fn on_hyperplane_is_inactive() {
        let layer = Layer::new(vec![vec![1.0, -1.0]], vec![0.0], Activation::Relu).unwrap();
        let m = compute_signature_matrix(&layer, &points(&[[2.0, 2.0]])).unwrap();
        assert!(!m.get(0, 0));
    }

    #[test]
    fn sample_dimension_mismatch() {
        let layer = Layer::new(vec![vec![1.0, 0.0, 0.0]], vec![0.0], Activation::Relu).unwrap();
        assert!(matches!(
            compute_signature_matrix(&layer, &points(&[[1.0, 0.0]])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn frequencies() {
        let m = rows(&[&[1, 1, 1, 1], &[1, 0, 0, 1]]);
        assert_eq!(activation_frequency(&m), vec![1.0, 0.5]);
    }

    #[test]
    fn classify_by_definition() {
        let m = rows(&[&[0, 0], &[1, 1], &[1, 0], &[1, 0]]);
        let r = classify_neurons(&m);
        assert_eq!(r.dead, vec![0]);
        assert_eq!(r.always_active, vec![1]);
        assert_eq!(r.duplicate_groups, vec![vec![2, 3]]);
        assert_eq!(r.representatives, vec![2]);
    }

    #[test]
    fn classify_all_distinct() {
        let m = rows(&[&[1, 0, 0], &[0, 1, 0], &[1, 1, 0]]);
        let r = classify_neurons(&m);
        assert!(r.dead.is_empty() && r.always_active.is_empty() && r.duplicate_groups.is_empty());
        assert_eq!(r.representatives, vec![0, 1, 2]);
    }

    #[test]
    fn stacked_copies_pair_up() {
        let layer = Layer::new(
            vec![vec![1.0, 0.3], vec![-0.2, 1.0], vec![0.7, -0.7]],
            vec![0.1, -0.4, 0.2],
            Activation::Relu,
        )
        .unwrap();
        let mut w = layer.weights.clone();
        w.extend(layer.weights.clone());
        let mut b = layer.bias.clone();
        b.extend(layer.bias.clone());
        let stacked = Layer::new(w, b, Activation::Relu).unwrap();
        let samples = crate::sampling::generate_uniform(500, &[(-2.0, 2.0), (-2.0, 2.0)], 3).unwrap();
        let r = classify_neurons(&compute_signature_matrix(&stacked, &samples).unwrap());
        assert_eq!(r.duplicate_groups, vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
        assert_eq!(r.representatives, vec![0, 1, 2]);
    }

    #[test]
    fn jaccard_cases() {
        let m = rows(&[&[1, 1, 0], &[0, 1, 1], &[1, 1, 0], &[0, 0, 1], &[0, 0, 0], &[0, 0, 0]]);
        assert_eq!(exact_jaccard_distance(&m, 0, 2).unwrap(), 0.0);
        assert_eq!(exact_jaccard_distance(&m, 0, 3).unwrap(), 1.0);
        assert!((exact_jaccard_distance(&m, 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(exact_jaccard_distance(&m, 4, 5).unwrap(), 0.0);
        assert_eq!(exact_jaccard_distance(&m, 0, 4).unwrap(), 1.0);
        assert!(matches!(exact_jaccard_distance(&m, 0, 6), Err(Error::Index { .. })));
    }

    #[test]
    fn active_indices_cross_word_boundary() {
        let mut m = SignatureMatrix::zeros(1, 130);
        for s in [0, 63, 64, 129] {
            m.set(0, s, true);
        }
        assert_eq!(m.active_indices(0), vec![0, 63, 64, 129]);
        assert_eq!(m.popcount(0), 4);
    }

    #[test]
    fn sasm_layout() {
        let mut m = SignatureMatrix::zeros(2, 3);
        m.set(0, 0, true);
        m.set(1, 2, true);
        let bytes = m.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"SASM");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &3u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &4u64.to_le_bytes());
        assert_eq!(SignatureMatrix::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn sasm_rejects_bad_input() {
        assert!(SignatureMatrix::from_bytes(b"NOPE0000000000000000").is_err());
        let mut bytes = SignatureMatrix::zeros(1, 3).to_bytes().unwrap();
        bytes[16] = 0b1000; // padding bit
        assert!(matches!(SignatureMatrix::from_bytes(&bytes), Err(Error::Parse(_))));
        let bytes = SignatureMatrix::zeros(1, 3).to_bytes().unwrap();
        assert!(SignatureMatrix::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn deeper_layer_uses_propagated_inputs() {
        let net = Network::new(vec![
            Layer::new(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0], Activation::Relu).unwrap(),
            Layer::new(vec![vec![1.0, -1.0]], vec![0.0], Activation::Linear).unwrap(),
        ])
        .unwrap();
        let samples = SampleSet::from_points(vec![vec![2.0], vec![-3.0]]).unwrap();
        let m = network_layer_signatures(&net, 1, &samples).unwrap();
        assert!(m.get(0, 0));
        assert!(!m.get(0, 1));
    }
}
