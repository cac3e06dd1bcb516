//! One-parameter exponential-family noise, signal planting and the
//! standardization every statistic builds on.
//!
//! Gaussian draws use `rand_distr::StandardNormal` (ziggurat) on a ChaCha8
//! stream; Poisson draws use `rand_distr::Poisson`; Bernoulli draws compare a
//! uniform `f64` against `p`. These are fixed within this implementation.

use crate::cluster::{Cluster, NodeId};
use crate::error::{Result, ScanError};
use crate::growth::ClusterSequence;
use crate::rng::{rng_from_seed, SimRng};
use crate::scalar::Scalar;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// Below this many anomalous values the normal approximation for Bernoulli and
/// Poisson sums is flagged as unreliable.
pub const MIN_NORMAL_APPROX_SIZE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// `N(θ, 1)`; null `N(0, 1)`.
    #[default]
    Gaussian,
    /// `Bernoulli(e^θ/(1+e^θ))`; null `p = 1/2`.
    Bernoulli,
    /// `Poisson(e^θ)`; null mean 1.
    Poisson,
}

impl NoiseModel {
    pub fn name(self) -> &'static str {
        match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::Bernoulli => "bernoulli",
            NoiseModel::Poisson => "poisson",
        }
    }

    /// Null variance `σ²`.
    pub fn sigma2(self) -> f64 {
        match self {
            NoiseModel::Gaussian | NoiseModel::Poisson => 1.0,
            NoiseModel::Bernoulli => 0.25,
        }
    }

    pub fn sigma(self) -> f64 {
        self.sigma2().sqrt()
    }

    pub fn null_mean(self) -> f64 {
        match self {
            NoiseModel::Gaussian => 0.0,
            NoiseModel::Bernoulli => 0.5,
            NoiseModel::Poisson => 1.0,
        }
    }

    /// Mean of `F_θ`.
    pub fn mean_at(self, theta: f64) -> f64 {
        match self {
            NoiseModel::Gaussian => theta,
            NoiseModel::Bernoulli => 1.0 / (1.0 + (-theta).exp()),
            NoiseModel::Poisson => theta.exp(),
        }
    }

    /// Natural parameter of `F` with the given mean (inverse of [`mean_at`](Self::mean_at)).
    pub fn theta_for_mean(self, mean: f64) -> f64 {
        match self {
            NoiseModel::Gaussian => mean,
            NoiseModel::Bernoulli => (mean / (1.0 - mean)).ln(),
            NoiseModel::Poisson => mean.ln(),
        }
    }

    /// `θ_K = σ Λ |K|^{−1/2}`.
    pub fn natural_param(self, lambda: f64, k: usize) -> f64 {
        self.sigma() * lambda / (k as f64).sqrt()
    }

    /// Signal strength whose per-node natural parameter is `theta` on `k` values.
    pub fn lambda_for_theta(self, theta: f64, k: usize) -> f64 {
        theta * (k as f64).sqrt() / self.sigma()
    }

    fn check_theta(self, theta: f64) -> Result<()> {
        if !theta.is_finite() {
            return Err(ScanError::param("lambda", "natural parameter is not finite"));
        }
        if self == NoiseModel::Bernoulli && self.mean_at(theta) >= 1.0 {
            return Err(ScanError::param("lambda", "bernoulli success probability reaches 1"));
        }
        Ok(())
    }

    /// One draw from `F_θ`.
    pub fn draw<R: Rng + ?Sized>(self, theta: f64, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z + theta
            }
            NoiseModel::Bernoulli => {
                if rng.random::<f64>() < self.mean_at(theta) {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::Poisson => Poisson::new(theta.exp()).expect("positive mean").sample(rng),
        }
    }

    /// Maps a raw sum over `k` values to a mean-0, variance-1 score under the null.
    #[inline]
    pub fn standardize<S: Scalar>(self, sum: S, k: usize) -> S {
        let kf = S::from_count(k);
        match self {
            NoiseModel::Gaussian => sum / kf.sqrt(),
            _ => (sum - kf * S::lit(self.null_mean())) / (S::lit(self.sigma()) * kf.sqrt()),
        }
    }

    pub fn normal_approx_ok(self, k: usize) -> bool {
        self == NoiseModel::Gaussian || k >= MIN_NORMAL_APPROX_SIZE
    }
}

/// Observed values on `V_m × {0,…,t_m}`, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<S> {
    nodes: usize,
    steps: usize,
    values: Vec<S>,
}

impl<S: Scalar> Field<S> {
    pub fn from_values(nodes: usize, t_max: usize, values: Vec<S>) -> Result<Self> {
        if nodes == 0 || values.len() != nodes * (t_max + 1) {
            return Err(ScanError::domain("field must hold a value for every (node, time) pair"));
        }
        Ok(Field {
            nodes,
            steps: t_max + 1,
            values,
        })
    }

    pub fn constant(nodes: usize, t_max: usize, value: S) -> Self {
        Field {
            nodes,
            steps: t_max + 1,
            values: vec![value; nodes * (t_max + 1)],
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Last time index `t_m` (0 for a static field).
    pub fn t_max(&self) -> usize {
        self.steps - 1
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn slice(&self, t: usize) -> &[S] {
        &self.values[t * self.nodes..(t + 1) * self.nodes]
    }

    #[inline]
    pub fn get(&self, v: NodeId, t: usize) -> S {
        self.values[t * self.nodes + v as usize]
    }

    fn set(&mut self, v: NodeId, t: usize, x: S) {
        self.values[t * self.nodes + v as usize] = x;
    }

    /// Raw sum of `cluster` at time `t`.
    #[inline]
    pub fn sum_at(&self, cluster: &Cluster, t: usize) -> S {
        let slice = self.slice(t);
        cluster.ids().iter().map(|&v| slice[v as usize]).sum()
    }

    /// CSV `node,t,value`.
    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "node,t,value")?;
        for t in 0..self.steps {
            for v in 0..self.nodes {
                writeln!(w, "{v},{t},{}", self.values[t * self.nodes + v])?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 {
                if line != "node,t,value" {
                    return Err(ScanError::Parse(format!("unexpected field header `{line}`")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || ScanError::Parse(format!("bad field row `{line}`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            rows.push((
                parts[0].parse().map_err(|_| bad())?,
                parts[1].parse().map_err(|_| bad())?,
                parts[2].parse().map_err(|_| bad())?,
            ));
        }
        let nodes = rows.iter().map(|r| r.0).max().map_or(0, |x| x + 1);
        let steps = rows.iter().map(|r| r.1).max().map_or(0, |x| x + 1);
        if nodes == 0 || rows.len() != nodes * steps {
            return Err(ScanError::Parse("field csv is not a complete node × time table".into()));
        }
        let mut values = vec![S::nan(); nodes * steps];
        for (v, t, x) in rows {
            values[t * nodes + v] = S::lit(x);
        }
        if values.iter().any(|x| x.is_nan()) {
            return Err(ScanError::Parse("duplicate or missing (node, t) rows".into()));
        }
        Field::from_values(nodes, steps - 1, values)
    }
}

/// Signal strength `Λ` with optional per-node natural parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalSpec {
    pub lambda: f64,
    /// Node-specific natural parameters; each must be at least the implied `θ_K`.
    pub overrides: BTreeMap<NodeId, f64>,
}

impl SignalSpec {
    pub fn new(lambda: f64) -> Self {
        SignalSpec {
            lambda,
            overrides: BTreeMap::new(),
        }
    }
}

/// I.i.d. null draws at every `(node, time)`.
pub fn sample_null<S: Scalar>(nodes: usize, model: NoiseModel, t_max: usize, seed: u64) -> Field<S> {
    let mut rng = rng_from_seed(seed);
    sample_null_with(nodes, model, t_max, &mut rng)
}

pub(crate) fn sample_null_with<S: Scalar>(nodes: usize, model: NoiseModel, t_max: usize, rng: &mut SimRng) -> Field<S> {
    let n = nodes * (t_max + 1);
    let values = (0..n).map(|_| S::lit(model.draw(0.0, rng))).collect();
    Field {
        nodes,
        steps: t_max + 1,
        values,
    }
}

fn planted_thetas(sig: &SignalSpec, model: NoiseModel, k: usize) -> Result<f64> {
    if !(sig.lambda >= 0.0) {
        return Err(ScanError::param("lambda", "signal strength must be nonnegative"));
    }
    let theta = model.natural_param(sig.lambda, k);
    model.check_theta(theta)?;
    for (&v, &t) in &sig.overrides {
        if !(t >= theta) {
            return Err(ScanError::param(
                "overrides",
                format!("node {v} parameter {t} below θ_K = {theta}"),
            ));
        }
        model.check_theta(t)?;
    }
    Ok(theta)
}

/// Redraws the values on `cluster` (every time step) from `F_{θ_K}`; other values are untouched.
pub fn plant<S: Scalar>(
    field: &Field<S>,
    cluster: &Cluster,
    sig: &SignalSpec,
    model: NoiseModel,
    seed: u64,
) -> Result<Field<S>> {
    let mut out = field.clone();
    plant_in_place(&mut out, cluster, sig, model, &mut rng_from_seed(seed))?;
    Ok(out)
}

pub(crate) fn plant_in_place<S: Scalar>(
    field: &mut Field<S>,
    cluster: &Cluster,
    sig: &SignalSpec,
    model: NoiseModel,
    rng: &mut SimRng,
) -> Result<()> {
    if cluster.is_empty() {
        return Err(ScanError::domain("cannot plant on an empty cluster"));
    }
    if !cluster.valid_for(field.nodes) {
        return Err(ScanError::domain("cluster ids exceed the field"));
    }
    let theta = planted_thetas(sig, model, cluster.len() * field.steps)?;
    for t in 0..field.steps {
        for &v in cluster.ids() {
            let th = sig.overrides.get(&v).copied().unwrap_or(theta);
            field.set(v, t, S::lit(model.draw(th, rng)));
        }
    }
    Ok(())
}

/// Plants a cluster sequence; `|K|` is the total number of anomalous `(node, time)` pairs.
pub fn plant_sequence<S: Scalar>(
    field: &Field<S>,
    seq: &ClusterSequence,
    sig: &SignalSpec,
    model: NoiseModel,
    seed: u64,
) -> Result<Field<S>> {
    let mut out = field.clone();
    plant_sequence_in_place(&mut out, seq, sig, model, &mut rng_from_seed(seed))?;
    Ok(out)
}

pub(crate) fn plant_sequence_in_place<S: Scalar>(
    field: &mut Field<S>,
    seq: &ClusterSequence,
    sig: &SignalSpec,
    model: NoiseModel,
    rng: &mut SimRng,
) -> Result<()> {
    let total = seq.total_pairs();
    if total == 0 {
        return Err(ScanError::domain("cannot plant an empty cluster sequence"));
    }
    if seq.t_max() > field.t_max() {
        return Err(ScanError::domain("sequence is longer than the field"));
    }
    let theta = planted_thetas(sig, model, total)?;
    for (t, slice) in seq.slices().iter().enumerate() {
        if !slice.valid_for(field.nodes) {
            return Err(ScanError::domain("cluster ids exceed the field"));
        }
        for &v in slice.ids() {
            let th = sig.overrides.get(&v).copied().unwrap_or(theta);
            field.set(v, t, S::lit(model.draw(th, rng)));
        }
    }
    Ok(())
}

/// Consistency constant `Φ⁻¹(3/4)`.
pub const MAD_NORMAL_QUARTILE: f64 = 0.674_489_750_196_081_7;

fn median_in_place(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    let mid = n / 2;
    let (_, &mut upper, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = xs[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

/// `(MAD / Φ⁻¹(3/4))²` over every value of the field.
pub fn mad_variance<S: Scalar>(field: &Field<S>) -> Result<S> {
    if field.values.len() < 2 {
        return Err(ScanError::domain("MAD needs at least two values"));
    }
    let mut xs: Vec<f64> = field.values.iter().map(|x| x.as_f64()).collect();
    let med = median_in_place(&mut xs);
    for x in xs.iter_mut() {
        *x = (*x - med).abs();
    }
    let mad = median_in_place(&mut xs);
    Ok(S::lit((mad / MAD_NORMAL_QUARTILE).powi(2)))
}

/// Standardized sum of `cluster` over every time step of the field.
pub fn standardized_sum<S: Scalar>(field: &Field<S>, cluster: &Cluster, model: NoiseModel) -> Result<S> {
    if cluster.is_empty() {
        return Err(ScanError::domain("standardized sum of an empty cluster"));
    }
    let sum = (0..field.steps).map(|t| field.sum_at(cluster, t)).sum();
    Ok(model.standardize(sum, cluster.len() * field.steps))
}

/// Standardized sum over the `(node, time)` pairs of a cluster sequence.
pub fn sequence_standardized_sum<S: Scalar>(field: &Field<S>, seq: &ClusterSequence, model: NoiseModel) -> Result<S> {
    let total = seq.total_pairs();
    if total == 0 {
        return Err(ScanError::domain("standardized sum of an empty sequence"));
    }
    let sum = seq
        .slices()
        .iter()
        .enumerate()
        .filter(|(t, _)| *t <= field.t_max())
        .map(|(t, c)| field.sum_at(c, t))
        .sum();
    Ok(model.standardize(sum, total))
}
