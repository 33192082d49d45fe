//! Probe-sample sizing and generation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Real;

/// Step budget shared by the fixed-point iteration and the integer refinement.
pub const MAX_VC_ITERATIONS: usize = 10_000;

/// Inputs of the uniform-convergence bound for a layer of `n_neurons`
/// half-space indicators over `d_in` inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcQuery {
    pub d_in: usize,
    pub n_neurons: usize,
    pub epsilon: f64,
    pub delta: f64,
}

impl VcQuery {
    pub fn new(d_in: usize, n_neurons: usize, epsilon: f64, delta: f64) -> Result<Self> {
        if d_in == 0 || n_neurons == 0 {
            return Err(Error::Domain("d_in and n_neurons must be positive".into()));
        }
        for (name, v) in [("epsilon", epsilon), ("delta", delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(Self {
            d_in,
            n_neurons,
            epsilon,
            delta,
        })
    }

    /// `(1/eps^2) * ((d+1) ln(2 e N / (d+1)) + ln(2 N_k / delta))`.
    pub fn rhs(&self, n: f64) -> f64 {
        let vc = (self.d_in + 1) as f64;
        let complexity = vc * (2.0 * std::f64::consts::E * n / vc).ln();
        let confidence = (2.0 * self.n_neurons as f64 / self.delta).ln();
        (complexity + confidence) / (self.epsilon * self.epsilon)
    }

    pub fn is_satisfied(&self, n: u64) -> bool {
        n as f64 >= self.rhs(n as f64)
    }
}

/// Smallest sample count at the upper crossing of the bound: the returned `N`
/// satisfies `N >= rhs(N)` while `N - 1` does not.
pub fn solve_min_samples(q: &VcQuery) -> Result<u64> {
    let mut n = ((q.d_in + 1) as f64 / (q.epsilon * q.epsilon)).ceil();
    let mut steps = 0;
    loop {
        steps += 1;
        if steps > MAX_VC_ITERATIONS {
            return Err(Error::NonConvergence(MAX_VC_ITERATIONS));
        }
        let next = q.rhs(n).ceil().max(1.0);
        if !next.is_finite() {
            return Err(Error::NonConvergence(steps));
        }
        let diff = (next - n).abs();
        n = next;
        if diff <= 1.0 {
            break;
        }
    }

    // The ceiling iteration can stop one short of (or one past) the crossing.
    let mut n = n as u64;
    while !q.is_satisfied(n) {
        n += 1;
        steps += 1;
        if steps > MAX_VC_ITERATIONS {
            return Err(Error::NonConvergence(MAX_VC_ITERATIONS));
        }
    }
    while n > 1 && q.is_satisfied(n - 1) {
        n -= 1;
        steps += 1;
        if steps > MAX_VC_ITERATIONS {
            return Err(Error::NonConvergence(MAX_VC_ITERATIONS));
        }
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Lhs,
    External,
}

/// The probe sample: one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    pub points: Vec<Vec<T>>,
    pub bounds: Vec<(T, T)>,
    pub seed: Option<u64>,
    pub strategy: Strategy,
}

impl<T: Real> SampleSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Builds an external sample from explicit points; bounds are the per-column extremes.
    pub fn from_points(points: Vec<Vec<T>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Shape("sample set has no points".into()))?;
        if dim == 0 {
            return Err(Error::Shape("sample points have zero dimensions".into()));
        }
        let mut bounds = vec![(T::infinity(), T::neg_infinity()); dim];
        for (s, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Shape(format!("point {s} has {} coordinates, expected {dim}", p.len())));
            }
            for (d, &x) in p.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!("point {s} coordinate {d}")));
                }
                bounds[d].0 = bounds[d].0.min(x);
                bounds[d].1 = bounds[d].1.max(x);
            }
        }
        Ok(Self {
            points,
            bounds,
            seed: None,
            strategy: Strategy::External,
        })
    }
}

impl SampleSet<f64> {
    /// Converts the points to another scalar type.
    pub fn cast<U: Real>(&self) -> SampleSet<U> {
        let c = |x: f64| U::from_f64(x).unwrap_or_else(U::nan);
        SampleSet {
            points: self.points.iter().map(|p| p.iter().map(|&x| c(x)).collect()).collect(),
            bounds: self.bounds.iter().map(|&(l, h)| (c(l), c(h))).collect(),
            seed: self.seed,
            strategy: self.strategy,
        }
    }
}

fn check_bounds(n: usize, bounds: &[(f64, f64)]) -> Result<()> {
    if n == 0 {
        return Err(Error::Bounds("sample count must be at least 1".into()));
    }
    if bounds.is_empty() {
        return Err(Error::Bounds("no dimensions given".into()));
    }
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Bounds(format!("dimension {d}: need finite low < high, got {lo}:{hi}")));
        }
    }
    Ok(())
}

fn scale(u: f64, (lo, hi): (f64, f64)) -> f64 {
    (lo + u * (hi - lo)).clamp(lo, hi)
}

/// `n` i.i.d. uniform points; dimension `d` draws from stream `d` of `seed`.
pub fn generate_uniform(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<SampleSet<f64>> {
    check_bounds(n, bounds)?;
    let mut points = vec![vec![0.0; bounds.len()]; n];
    for (d, &b) in bounds.iter().enumerate() {
        let mut rng = SplitMix64::with_stream(seed, d as u64);
        for p in points.iter_mut() {
            p[d] = scale(rng.next_f64(), b);
        }
    }
    Ok(SampleSet {
        points,
        bounds: bounds.to_vec(),
        seed: Some(seed),
        strategy: Strategy::Uniform,
    })
}

/// Latin hypercube points in the unit cube, before scaling.
///
/// For every dimension, point `s` lies in stratum `perm_d[s]` of width `1/n`,
/// where `perm_d` is a seeded permutation of `0..n`, with uniform jitter inside
/// the stratum.
pub fn lhs_unit(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    let nf = n as f64;
    for d in 0..dim {
        let mut rng = SplitMix64::with_stream(seed, d as u64);
        let strata = rng.permutation(n);
        for (p, &stratum) in points.iter_mut().zip(&strata) {
            let mut u = (stratum as f64 + rng.next_f64()) / nf;
            // rounding may push the jitter onto the next stratum's lower edge
            while (u * nf).floor() as usize > stratum {
                u = f64::from_bits(u.to_bits() - 1);
            }
            p[d] = u;
        }
    }
    points
}

pub fn generate_lhs(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<SampleSet<f64>> {
    check_bounds(n, bounds)?;
    let mut points = lhs_unit(n, bounds.len(), seed);
    for p in points.iter_mut() {
        for (x, &b) in p.iter_mut().zip(bounds) {
            *x = scale(*x, b);
        }
    }
    Ok(SampleSet {
        points,
        bounds: bounds.to_vec(),
        seed: Some(seed),
        strategy: Strategy::Lhs,
    })
}

/// Reads a headerless CSV of numeric rows with constant width.
pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleSet<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_samples(&text)
}

pub fn parse_samples(text: &str) -> Result<SampleSet<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("sample row {}: {e}", i + 1)))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("sample row {}: `{field}`: {e}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(row);
    }
    if points.is_empty() {
        return Err(Error::Parse("sample file has no rows".into()));
    }
    SampleSet::from_points(points).map_err(|e| match e {
        Error::Shape(m) | Error::NonFinite(m) => Error::Parse(m),
        other => other,
    })
}

/// One point per line, comma separated, shortest round-trip decimal text.
pub fn samples_to_csv(samples: &SampleSet<f64>) -> String {
    let mut out = String::with_capacity(samples.len() * 24 * samples.dim().max(1));
    for p in &samples.points {
        for (d, x) in p.iter().enumerate() {
            if d > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x:?}");
        }
        out.push('\n');
    }
    out
}

pub fn save_samples(samples: &SampleSet<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, samples_to_csv(samples)).map_err(|e| Error::io(path, e))
}
