//! Cost matrices, optimal assignment and the layer distance.

use std::collections::BTreeSet;
use std::fmt::Debug;

use num_traits::{Bounded, Num, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonicalize::canonicalize_network;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::sampling::{SampleSet, Strategy};
use crate::signatures::{classify_neurons, network_layer_signatures, NeuronFilterReport};
use crate::sketching::{estimate_distance, sketch_layer, HashFamily, IndexHasher, LayerSketches};
use crate::validation::{approximation_errors, exact_cost_matrix, matching_agreement, ValidationSummary};

/// Scalars the assignment solver accepts: any signed ordered ring with bounds,
/// e.g. `f64`, `f32`, `i64`.
pub trait AssignmentCost: Copy + PartialOrd + Num + Bounded + Debug + Send + Sync {}

impl<T> AssignmentCost for T where T: Copy + PartialOrd + Num + Bounded + Debug + Send + Sync {}

/// Dense row-major cost matrix between representatives of two layers.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    costs: Vec<T>,
    pub row_ids: Vec<usize>,
    pub col_ids: Vec<usize>,
}

impl<T: AssignmentCost> CostMatrix<T> {
    pub fn new(rows: usize, cols: usize, costs: Vec<T>, row_ids: Vec<usize>, col_ids: Vec<usize>) -> Result<Self> {
        if costs.len() != rows * cols || row_ids.len() != rows || col_ids.len() != cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix with {} costs, {} row ids, {} col ids",
                costs.len(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            costs,
            row_ids,
            col_ids,
        })
    }

    /// Matrix with ids `0..rows` and `0..cols`.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged cost matrix".into()));
        }
        Self::new(r, c, rows.into_iter().flatten().collect(), (0..r).collect(), (0..c).collect())
    }

}

impl<T: Copy> CostMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, u: usize, v: usize) -> T {
        self.costs[u * self.cols + v]
    }

    pub fn costs(&self) -> &[T] {
        &self.costs
    }

    pub fn transpose(&self) -> Self {
        let mut costs = Vec::with_capacity(self.costs.len());
        for v in 0..self.cols {
            for u in 0..self.rows {
                costs.push(self.get(u, v));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            costs,
            row_ids: self.col_ids.clone(),
            col_ids: self.row_ids.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair<T> {
    pub a: usize,
    pub b: usize,
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching<T> {
    /// Sorted by `a`.
    pub pairs: Vec<MatchedPair<T>>,
    pub total_cost: T,
}

/// Kuhn-Munkres with potentials on an `n x m` matrix, `n <= m`.
/// Returns the column assigned to each row.
fn hungarian<T: AssignmentCost>(n: usize, m: usize, cost: impl Fn(usize, usize) -> T) -> Vec<usize> {
    debug_assert!(n <= m);
    let inf = T::max_value();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    // row_of[j]: 1-based row matched to 1-based column j, 0 when free
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] = u[row_of[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Minimum-cost assignment of `min(rows, cols)` pairs.
pub fn solve_assignment<T: AssignmentCost>(c: &CostMatrix<T>) -> Result<Matching<T>> {
    if c.rows == 0 || c.cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    let (lo, hi) = (T::min_value(), T::max_value());
    if let Some(i) = c.costs.iter().position(|&x| !(x > lo && x < hi)) {
        return Err(Error::Domain(format!("cost entry {i} is not finite")));
    }

    let mut index_pairs: Vec<(usize, usize)> = if c.rows <= c.cols {
        hungarian(c.rows, c.cols, |i, j| c.get(i, j))
            .into_iter()
            .enumerate()
            .collect()
    } else {
        hungarian(c.cols, c.rows, |i, j| c.get(j, i))
            .into_iter()
            .enumerate()
            .map(|(col, row)| (row, col))
            .collect()
    };
    index_pairs.sort_unstable();

    let mut total = T::zero();
    let pairs = index_pairs
        .into_iter()
        .map(|(u, v)| {
            let cost = c.get(u, v);
            total = total + cost;
            MatchedPair {
                a: c.row_ids[u],
                b: c.col_ids[v],
                cost,
            }
        })
        .collect();
    Ok(Matching {
        pairs,
        total_cost: total,
    })
}

/// Mean cost of the matched pairs.
pub fn layer_distance<T: AssignmentCost + ToPrimitive>(matching: &Matching<T>) -> Result<f64> {
    if matching.pairs.is_empty() {
        return Err(Error::EmptyMatching);
    }
    let total = matching
        .total_cost
        .to_f64()
        .ok_or_else(|| Error::Domain("total cost not representable as f64".into()))?;
    Ok(total / matching.pairs.len() as f64)
}

/// Estimated-distance matrix between two sketched layers.
pub fn build_cost_matrix(a: &LayerSketches, b: &LayerSketches) -> Result<CostMatrix<f64>> {
    if a.family != b.family {
        return Err(Error::FamilyMismatch(format!(
            "k={} seed={} vs k={} seed={}",
            a.family.k, a.family.master_seed, b.family.k, b.family.master_seed
        )));
    }
    let row_ids: Vec<usize> = a.sketches.keys().copied().collect();
    let col_ids: Vec<usize> = b.sketches.keys().copied().collect();
    let rows: Vec<Vec<f64>> = a
        .sketches
        .par_iter()
        .map(|(_, sa)| b.sketches.values().map(|sb| estimate_distance(sa, sb)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    CostMatrix::new(
        row_ids.len(),
        col_ids.len(),
        rows.into_iter().flatten().collect(),
        row_ids,
        col_ids,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub a: NeuronFilterReport,
    pub b: NeuronFilterReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonParams {
    pub layer: usize,
    pub n_samples: usize,
    pub sample_dim: usize,
    pub sample_strategy: Strategy,
    pub sample_seed: Option<u64>,
    pub k: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerComparisonReport {
    pub layer_distance: f64,
    #[serde(flatten)]
    pub matching: Matching<f64>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    pub filters: FilterSummary,
    pub params: ComparisonParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSummary>,
}

impl LayerComparisonReport {
    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Full pipeline: canonicalize, signatures, filtering, sketches, assignment.
pub fn compare_layers(
    net_a: &Network<f64>,
    net_b: &Network<f64>,
    layer_index: usize,
    samples: &SampleSet<f64>,
    family: &HashFamily,
) -> Result<LayerComparisonReport> {
    compare_layers_with(net_a, net_b, layer_index, samples, family, false)
}

/// As [`compare_layers`], additionally running the exact-Jaccard reference
/// path when `exact` is set.
pub fn compare_layers_with(
    net_a: &Network<f64>,
    net_b: &Network<f64>,
    layer_index: usize,
    samples: &SampleSet<f64>,
    family: &HashFamily,
    exact: bool,
) -> Result<LayerComparisonReport> {
    if net_a.input_dim() != net_b.input_dim() {
        return Err(Error::Shape(format!(
            "networks take {} and {} inputs",
            net_a.input_dim(),
            net_b.input_dim()
        )));
    }
    let (canon_a, canon_b) = rayon::join(|| canonicalize_network(net_a), || canonicalize_network(net_b));
    let (canon_a, canon_b) = (canon_a?.0, canon_b?.0);

    let (sig_a, sig_b) = rayon::join(
        || network_layer_signatures(&canon_a, layer_index, samples),
        || network_layer_signatures(&canon_b, layer_index, samples),
    );
    let (sig_a, sig_b) = (sig_a?, sig_b?);
    let filter_a = classify_neurons(&sig_a);
    let filter_b = classify_neurons(&sig_b);

    let sk_a = sketch_layer(&sig_a, &filter_a, family)?;
    let sk_b = sketch_layer(&sig_b, &filter_b, family)?;
    let costs = build_cost_matrix(&sk_a, &sk_b)?;
    let matching = solve_assignment(&costs)?;
    let distance = layer_distance(&matching)?;

    let validation = if exact {
        let exact_costs = exact_cost_matrix(&sig_a, &sig_b, &filter_a.representatives, &filter_b.representatives)?;
        let exact_matching = solve_assignment(&exact_costs)?;
        let (mae, rmse) = approximation_errors(&exact_costs, &costs)?;
        Some(ValidationSummary {
            mae,
            rmse,
            exact_layer_distance: layer_distance(&exact_matching)?,
            agreement: matching_agreement(&matching, &exact_matching),
            exact_pairs: exact_matching.pairs,
        })
    } else {
        None
    };

    let matched_a: BTreeSet<usize> = matching.pairs.iter().map(|p| p.a).collect();
    let matched_b: BTreeSet<usize> = matching.pairs.iter().map(|p| p.b).collect();
    let unmatched_a = filter_a
        .representatives
        .iter()
        .copied()
        .filter(|j| !matched_a.contains(j))
        .collect();
    let unmatched_b = filter_b
        .representatives
        .iter()
        .copied()
        .filter(|j| !matched_b.contains(j))
        .collect();

    let id = family.id();
    Ok(LayerComparisonReport {
        layer_distance: distance,
        matching,
        unmatched_a,
        unmatched_b,
        filters: FilterSummary { a: filter_a, b: filter_b },
        params: ComparisonParams {
            layer: layer_index,
            n_samples: samples.len(),
            sample_dim: samples.dim(),
            sample_strategy: samples.strategy,
            sample_seed: samples.seed,
            k: id.k,
            master_seed: id.master_seed,
        },
        validation,
    })
}
