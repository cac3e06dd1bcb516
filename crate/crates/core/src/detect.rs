//! Scan statistics, derived tests, Monte Carlo calibration and the closed-form
//! detection thresholds.

use crate::cluster::Cluster;
use crate::error::{Result, ScanError};
use crate::metric::EpsNet;
use crate::models::{sample_null_with, standardized_sum, Field, NoiseModel};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::E;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Reject,
    Accept,
}

impl Decision {
    pub fn rejects(self) -> bool {
        self == Decision::Reject
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::Accept => "accept",
        }
    }
}

/// Maximum of a statistic over an indexed search set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOutcome<S> {
    pub statistic: S,
    /// Index of the first maximizer in enumeration order.
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDetail<S> {
    pub scale: usize,
    pub statistic: S,
    pub threshold: S,
    pub argmax: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult<S> {
    pub statistic: S,
    pub threshold: S,
    pub decision: Decision,
    pub argmax: Option<usize>,
    /// Size of the maximizing cluster (number of anomalous pairs for space–time scans).
    pub argmax_size: Option<usize>,
    pub scales: Vec<ScaleDetail<S>>,
}

impl<S: Scalar> TestResult<S> {
    pub fn new(statistic: S, threshold: S) -> Self {
        TestResult {
            statistic,
            threshold,
            decision: decide(statistic, threshold),
            argmax: None,
            argmax_size: None,
            scales: Vec::new(),
        }
    }

    /// Re-thresholds the same statistic (e.g. with a calibrated value).
    pub fn with_threshold(mut self, threshold: S) -> Self {
        self.threshold = threshold;
        self.decision = decide(self.statistic, threshold);
        self
    }
}

#[inline]
pub fn decide<S: Scalar>(statistic: S, threshold: S) -> Decision {
    if statistic > threshold {
        Decision::Reject
    } else {
        Decision::Accept
    }
}

#[inline]
fn better<S: Scalar>(a: (S, usize), b: (S, usize)) -> (S, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) || (a.0.is_nan() && !b.0.is_nan()) {
        b
    } else {
        a
    }
}

/// Parallel argmax of `f(i)` over `0..n`, ties resolved to the smallest index.
pub fn par_argmax<S: Scalar>(n: usize, f: impl Fn(usize) -> S + Sync) -> Option<ScanOutcome<S>> {
    if n == 0 {
        return None;
    }
    let (statistic, argmax) = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| (f(i), i))
        .reduce(|| (S::neg_infinity(), usize::MAX), better);
    Some(ScanOutcome { statistic, argmax })
}

/// Sum of `field` over all time steps, one entry per node.
fn node_totals<S: Scalar>(field: &Field<S>) -> Vec<S> {
    if field.t_max() == 0 {
        return field.values().to_vec();
    }
    let mut acc = field.slice(0).to_vec();
    for t in 1..=field.t_max() {
        for (a, &x) in acc.iter_mut().zip(field.slice(t)) {
            *a = *a + x;
        }
    }
    acc
}

/// Maximum standardized sum over `clusters`.
pub fn scan<S: Scalar>(field: &Field<S>, clusters: &[Cluster], model: NoiseModel) -> Result<ScanOutcome<S>> {
    if clusters.iter().any(|c| !c.valid_for(field.nodes())) {
        return Err(ScanError::domain("cluster ids exceed the field"));
    }
    if clusters.iter().any(Cluster::is_empty) {
        return Err(ScanError::domain("stream contains an empty cluster"));
    }
    let totals = node_totals(field);
    let steps = field.t_max() + 1;
    par_argmax(clusters.len(), |i| {
        let c = &clusters[i];
        let sum: S = c.ids().iter().map(|&v| totals[v as usize]).sum();
        model.standardize(sum, c.len() * steps)
    })
    .ok_or_else(|| ScanError::domain("scan over an empty stream"))
}

/// Sequential scan over an arbitrary iterator of clusters.
pub fn scan_iter<S: Scalar, I>(field: &Field<S>, clusters: I, model: NoiseModel) -> Result<ScanOutcome<S>>
where
    I: IntoIterator<Item = Cluster>,
{
    let mut best: Option<(S, usize)> = None;
    for (i, c) in clusters.into_iter().enumerate() {
        if !c.valid_for(field.nodes()) {
            return Err(ScanError::domain("cluster ids exceed the field"));
        }
        let s = standardized_sum(field, &c, model)?;
        best = Some(match best {
            None => (s, i),
            Some(b) => better(b, (s, i)),
        });
    }
    best.map(|(statistic, argmax)| ScanOutcome { statistic, argmax })
        .ok_or_else(|| ScanError::domain("scan over an empty stream"))
}

/// Scan restricted to the members of an ε-net.
pub fn eps_scan<S: Scalar>(field: &Field<S>, net: &EpsNet<S>, model: NoiseModel) -> Result<ScanOutcome<S>> {
    scan(field, &net.members, model)
}

/// Scan as a test with a fixed threshold.
pub fn scan_test<S: Scalar>(
    field: &Field<S>,
    clusters: &[Cluster],
    model: NoiseModel,
    threshold: S,
) -> Result<TestResult<S>> {
    let out = scan(field, clusters, model)?;
    let mut r = TestResult::new(out.statistic, threshold);
    r.argmax = Some(out.argmax);
    r.argmax_size = Some(clusters[out.argmax].len());
    Ok(r)
}

/// Default per-scale threshold `√(2 log(c·2^{ℓd})) + √(2 log(ℓ² + e))`.
///
/// The first term is the null scan level of roughly `c·2^{ℓd}` effectively
/// distinct clusters at scale `2^{−ℓ}`; the second pays for the union over
/// scales.
pub fn default_scale_threshold<S: Scalar>(scale: usize, d: usize, c: f64) -> S {
    let count = c * 2f64.powi((scale * d) as i32);
    let base = (2.0 * count.ln().max(0.0)).sqrt();
    let l = scale as f64;
    S::lit(base + (2.0 * (l * l + E).ln()).sqrt())
}

/// A scale-indexed ε-net; scale `ℓ` holds clusters at radius scale `2^{−ℓ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleNet<S> {
    pub scale: usize,
    pub net: EpsNet<S>,
    pub threshold: S,
}

/// Statistic `max_ℓ (T_ℓ − τ_ℓ)`; the fixed test rejects iff it exceeds 0,
/// i.e. iff some scale's ε-scan exceeds its own threshold.
pub fn multiscale_test<S: Scalar>(field: &Field<S>, nets: &[ScaleNet<S>], model: NoiseModel) -> Result<TestResult<S>> {
    let mut scales = Vec::with_capacity(nets.len());
    let mut best: Option<(S, usize)> = None;
    for (k, sn) in nets.iter().enumerate() {
        if sn.net.is_empty() {
            continue;
        }
        let out = eps_scan(field, &sn.net, model)?;
        scales.push(ScaleDetail {
            scale: sn.scale,
            statistic: out.statistic,
            threshold: sn.threshold,
            argmax: Some(out.argmax),
        });
        let excess = out.statistic - sn.threshold;
        best = Some(match best {
            None => (excess, k),
            Some(b) => better(b, (excess, k)),
        });
    }
    let (stat, k) = best.ok_or_else(|| ScanError::domain("every scale net is empty"))?;
    let mut r = TestResult::new(stat, S::zero());
    let detail = scales.iter().find(|s| s.scale == nets[k].scale).expect("recorded");
    r.argmax = detail.argmax;
    r.argmax_size = detail.argmax.map(|i| nets[k].net.members[i].len());
    r.scales = scales;
    Ok(r)
}

/// Standardized sum over every node (and time step).
pub fn average_test<S: Scalar>(field: &Field<S>, model: NoiseModel, threshold: S) -> TestResult<S> {
    let sum: S = field.values().iter().copied().sum();
    let stat = model.standardize(sum, field.values().len());
    TestResult::new(stat, threshold)
}

/// Likelihood-ratio test for a known cluster: reject iff its standardized sum exceeds `Λ/2`.
///
/// Exact for the gaussian family; a normal approximation for the others.
pub fn oracle_test<S: Scalar>(
    field: &Field<S>,
    cluster: &Cluster,
    lambda: f64,
    model: NoiseModel,
) -> Result<TestResult<S>> {
    let stat = standardized_sum(field, cluster, model)?;
    let mut r = TestResult::new(stat, S::lit(lambda / 2.0));
    r.argmax_size = Some(cluster.len() * (field.t_max() + 1));
    Ok(r)
}

/// Standard normal upper tail `P(N(0,1) > x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Risk `2·P(N(0,1) > Λ/2)` of the oracle test in the gaussian model.
pub fn oracle_risk(lambda: f64) -> f64 {
    2.0 * normal_sf(lambda / 2.0)
}

/// Monte Carlo null calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<S> {
    pub alpha: f64,
    pub draws: usize,
    pub threshold: S,
    pub seed: u64,
    /// Null statistic values in trial order.
    pub null_stats: Vec<S>,
}

/// Rank (1-based) of the conservative `(1−α)` empirical quantile among `b` draws.
pub fn quantile_rank(alpha: f64, b: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScanError::param("alpha", "must lie in (0, 1)"));
    }
    let rank = ((1.0 - alpha) * (b as f64 + 1.0) - 1e-9).ceil().max(1.0) as usize;
    if rank > b {
        return Err(ScanError::param(
            "draws",
            format!("{b} null draws cannot resolve alpha = {alpha}"),
        ));
    }
    Ok(rank)
}

/// Calibrates from precomputed null statistics.
pub fn calibrate_from<S: Scalar>(null_stats: Vec<S>, alpha: f64, seed: u64) -> Result<Calibration<S>> {
    let b = null_stats.len();
    if b < 99 {
        return Err(ScanError::param("draws", "calibration needs at least 99 null draws"));
    }
    let rank = quantile_rank(alpha, b)?;
    let mut sorted = null_stats.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Calibration {
        alpha,
        draws: b,
        threshold: sorted[rank - 1],
        seed,
        null_stats,
    })
}

/// Runs `statistic` on `b` null fields; trial `i` uses seed `derive_seed(seed, [i])`.
pub fn calibrate<S, F>(
    statistic: F,
    nodes: usize,
    t_max: usize,
    model: NoiseModel,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<Calibration<S>>
where
    S: Scalar,
    F: Fn(&Field<S>) -> Result<S> + Sync,
{
    quantile_rank(alpha, b.max(99))?;
    let stats = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
            let field = sample_null_with(nodes, model, t_max, &mut rng);
            statistic(&field)
        })
        .collect::<Result<Vec<S>>>()?;
    calibrate_from(stats, alpha, seed)
}

/// `log†(x)`: `log x` for `x ≥ e`, else 1.
pub fn log_dagger(x: f64) -> f64 {
    if x >= E {
        x.ln()
    } else {
        1.0
    }
}

/// Closed-form detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "kebab-case")]
pub enum Rate {
    /// `√(2 log(m/k))`.
    Thick { m: f64, k: f64 },
    /// `√(2d log(1/λ))`.
    ThickScale { d: f64, lambda: f64 },
    /// `(1+ε²)√(2 log N + 2d log(1/λ))`.
    EpsScan { n: f64, d: f64, lambda: f64, eps: f64 },
    /// `√(2(d−p) log(1/r) + 2p log(1/λ))`.
    Thin { d: f64, p: f64, r: f64, lambda: f64 },
    /// `√(ℓ/h)`.
    Band { ell: f64, h: f64 },
    /// `√(ℓ/h + log(m/h^d) + log†(log ℓ))`.
    BandFull { ell: f64, h: f64, m: f64, d: f64 },
    /// `√(2 log m)`.
    Path { m: f64 },
    /// `p_K = 1/2 + √(2 log(m/k)) / (8√k)`.
    Bernoulli { m: f64, k: f64 },
    /// `μ_K = 1 + √(2 log(m/k)) / √k`.
    Poisson { m: f64, k: f64 },
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(ScanError::domain(format!("`{name}` must be positive, got {x}")))
    }
}

fn unit_open(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(ScanError::domain(format!("`{name}` must lie in (0, 1), got {x}")))
    }
}

fn size_ratio(m: f64, k: f64) -> Result<f64> {
    positive("m", m)?;
    positive("k", k)?;
    if k > m {
        return Err(ScanError::domain("cluster size exceeds m"));
    }
    Ok(m / k)
}

pub const RATE_NAMES: [&str; 9] = [
    "thick",
    "thick-scale",
    "eps-scan",
    "thin",
    "band",
    "band-full",
    "path",
    "bernoulli",
    "poisson",
];

impl Rate {
    pub fn name(&self) -> &'static str {
        match self {
            Rate::Thick { .. } => "thick",
            Rate::ThickScale { .. } => "thick-scale",
            Rate::EpsScan { .. } => "eps-scan",
            Rate::Thin { .. } => "thin",
            Rate::Band { .. } => "band",
            Rate::BandFull { .. } => "band-full",
            Rate::Path { .. } => "path",
            Rate::Bernoulli { .. } => "bernoulli",
            Rate::Poisson { .. } => "poisson",
        }
    }

    /// Builds a formula from named parameters (as given on the command line).
    pub fn from_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Rate> {
        let get = |key: &str| {
            params.get(key).copied().ok_or_else(|| ScanError::Config {
                key: key.to_string(),
                reason: format!("formula `{name}` requires it"),
            })
        };
        let rate = match name {
            "thick" => Rate::Thick {
                m: get("m")?,
                k: get("k")?,
            },
            "thick-scale" => Rate::ThickScale {
                d: get("d")?,
                lambda: get("lambda")?,
            },
            "eps-scan" => Rate::EpsScan {
                n: get("n")?,
                d: get("d")?,
                lambda: get("lambda")?,
                eps: get("eps")?,
            },
            "thin" => Rate::Thin {
                d: get("d")?,
                p: get("p")?,
                r: get("r")?,
                lambda: get("lambda")?,
            },
            "band" => Rate::Band {
                ell: get("ell")?,
                h: get("h")?,
            },
            "band-full" => Rate::BandFull {
                ell: get("ell")?,
                h: get("h")?,
                m: get("m")?,
                d: get("d")?,
            },
            "path" => Rate::Path { m: get("m")? },
            "bernoulli" => Rate::Bernoulli {
                m: get("m")?,
                k: get("k")?,
            },
            "poisson" => Rate::Poisson {
                m: get("m")?,
                k: get("k")?,
            },
            other => {
                return Err(ScanError::Config {
                    key: "formula".into(),
                    reason: format!("unknown formula `{other}`; expected one of {}", RATE_NAMES.join(", ")),
                })
            }
        };
        Ok(rate)
    }

    pub fn eval(&self) -> Result<f64> {
        match *self {
            Rate::Thick { m, k } => Ok((2.0 * size_ratio(m, k)?.ln()).sqrt()),
            Rate::ThickScale { d, lambda } => {
                positive("d", d)?;
                unit_open("lambda", lambda)?;
                Ok((2.0 * d * (1.0 / lambda).ln()).sqrt())
            }
            Rate::EpsScan { n, d, lambda, eps } => {
                positive("n", n)?;
                positive("d", d)?;
                unit_open("lambda", lambda)?;
                if !(eps >= 0.0) {
                    return Err(ScanError::domain("`eps` must be nonnegative"));
                }
                Ok((1.0 + eps * eps) * (2.0 * n.ln().max(0.0) + 2.0 * d * (1.0 / lambda).ln()).sqrt())
            }
            Rate::Thin { d, p, r, lambda } => {
                positive("d", d)?;
                if !(p >= 0.0 && p <= d) {
                    return Err(ScanError::domain("`p` must lie in [0, d]"));
                }
                unit_open("r", r)?;
                unit_open("lambda", lambda)?;
                Ok((2.0 * (d - p) * (1.0 / r).ln() + 2.0 * p * (1.0 / lambda).ln()).sqrt())
            }
            Rate::Band { ell, h } => Ok((positive("ell", ell)? / positive("h", h)?).sqrt()),
            Rate::BandFull { ell, h, m, d } => {
                positive("ell", ell)?;
                positive("h", h)?;
                positive("d", d)?;
                let ratio = positive("m", m)? / h.powf(d);
                if ratio < 1.0 {
                    return Err(ScanError::domain("band volume h^d exceeds m"));
                }
                if ell < 1.0 {
                    return Err(ScanError::domain("`ell` must be at least 1"));
                }
                Ok((ell / h + ratio.ln() + log_dagger(ell.ln())).sqrt())
            }
            Rate::Path { m } => {
                if !(m >= 1.0) {
                    return Err(ScanError::domain("`m` must be at least 1"));
                }
                Ok((2.0 * m.ln()).sqrt())
            }
            Rate::Bernoulli { m, k } => {
                let r = size_ratio(m, k)?;
                Ok(0.5 + (2.0 * r.ln()).sqrt() / (8.0 * k.sqrt()))
            }
            Rate::Poisson { m, k } => {
                let r = size_ratio(m, k)?;
                Ok(1.0 + (2.0 * r.ln()).sqrt() / k.sqrt())
            }
        }
    }
}

/// Named-parameter entry point.
pub fn rate(name: &str, params: &BTreeMap<String, f64>) -> Result<f64> {
    Rate::from_params(name, params)?.eval()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{plant, sample_null, SignalSpec};

    fn line_field(values: &[f64]) -> Field<f64> {
        Field::from_values(values.len(), 0, values.to_vec()).unwrap()
    }

    #[test]
    fn scan_prefix_example() {
        let f = line_field(&[1.0, 2.0, 3.0]);
        let stream = vec![
            Cluster::from_ids(vec![0]),
            Cluster::from_ids(vec![0, 1]),
            Cluster::from_ids(vec![0, 1, 2]),
        ];
        let out = scan(&f, &stream, NoiseModel::Gaussian).unwrap();
        let oracle = [1.0, 3.0 / 2f64.sqrt(), 6.0 / 3f64.sqrt()];
        let best = oracle.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(out.argmax, 2);
        assert!((out.statistic - best).abs() < 1e-12);
        assert!((out.statistic - 3.4641).abs() < 1e-4);
        let seq = scan_iter(&f, stream.clone(), NoiseModel::Gaussian).unwrap();
        assert_eq!(seq, out);
    }

    #[test]
    fn scan_single_and_empty() {
        let f: Field<f64> = sample_null(20, NoiseModel::Gaussian, 0, 4);
        let k = Cluster::from_ids(vec![2, 5, 11]);
        let out = scan(&f, std::slice::from_ref(&k), NoiseModel::Gaussian).unwrap();
        assert_eq!(out.statistic, standardized_sum(&f, &k, NoiseModel::Gaussian).unwrap());
        assert!(matches!(scan(&f, &[], NoiseModel::Gaussian), Err(ScanError::Domain(_))));
    }

    #[test]
    fn ties_go_to_first() {
        let f = line_field(&[1.0, 1.0, 1.0, 1.0]);
        let stream: Vec<Cluster> = (0..4).map(|i| Cluster::from_ids(vec![i])).collect();
        assert_eq!(scan(&f, &stream, NoiseModel::Gaussian).unwrap().argmax, 0);
        let big: Vec<Cluster> = (0..5000).map(|i| Cluster::from_ids(vec![i % 4])).collect();
        assert_eq!(scan(&f, &big, NoiseModel::Gaussian).unwrap().argmax, 0);
    }

    #[test]
    fn null_max_of_disjoint_clusters() {
        // Median over trials of the max of N i.i.d. normals is near √(2 log N).
        let n = 10_000usize;
        let stream: Vec<Cluster> = (0..n as u32).map(|i| Cluster::from_ids(vec![i])).collect();
        let mut maxima: Vec<f64> = (0..100)
            .map(|s| {
                let f: Field<f64> = sample_null(n, NoiseModel::Gaussian, 0, 1000 + s);
                scan(&f, &stream, NoiseModel::Gaussian).unwrap().statistic
            })
            .collect();
        maxima.sort_by(f64::total_cmp);
        let median = (maxima[49] + maxima[50]) / 2.0;
        assert!((median - (2.0 * (n as f64).ln()).sqrt()).abs() < 0.5, "median {median}");
    }

    #[test]
    fn multiscale_single_scale_reduces_to_eps_scan() {
        let f: Field<f64> = sample_null(30, NoiseModel::Gaussian, 0, 5);
        let members: Vec<Cluster> = (0..10u32).map(|i| Cluster::from_ids(vec![i, i + 10])).collect();
        let nets = vec![
            ScaleNet {
                scale: 0,
                net: EpsNet::from_members(0.5, vec![], "balls"),
                threshold: 1.0,
            },
            ScaleNet {
                scale: 1,
                net: EpsNet::from_members(0.5, members.clone(), "balls"),
                threshold: 1.5,
            },
        ];
        let r = multiscale_test(&f, &nets, NoiseModel::Gaussian).unwrap();
        let direct = scan(&f, &members, NoiseModel::Gaussian).unwrap();
        assert_eq!(r.statistic, direct.statistic - 1.5);
        assert_eq!(r.decision, decide(direct.statistic, 1.5));
        assert_eq!(r.scales.len(), 1);
        assert_eq!(r.argmax, Some(direct.argmax));
    }

    #[test]
    fn default_thresholds_increase_with_scale() {
        let t: Vec<f64> = (0..6).map(|l| default_scale_threshold(l, 2, 1.0)).collect();
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        let expect = (2.0 * (4.0f64.powi(3)).ln()).sqrt() + (2.0 * (9.0 + E).ln()).sqrt();
        assert!((t[3] - expect).abs() < 1e-12);
    }

    #[test]
    fn average_test_examples() {
        let z = Field::<f64>::constant(16, 0, 0.0);
        assert_eq!(average_test(&z, NoiseModel::Gaussian, 1.0).statistic, 0.0);
        // Linearity: planted shift Λ/√k on k of m nodes gives mean Λ√(k/m).
        let (m, k, lambda) = (1024usize, 256usize, 20.0);
        let cluster = Cluster::from_ids((0..k as u32).collect());
        let reps = 200;
        let mut sum = 0.0;
        let mut rejects = 0;
        for s in 0..reps {
            let f: Field<f64> = sample_null(m, NoiseModel::Gaussian, 0, s);
            let g = plant(&f, &cluster, &SignalSpec::new(lambda), NoiseModel::Gaussian, 10_000 + s).unwrap();
            let r = average_test(&g, NoiseModel::Gaussian, 3.0);
            sum += r.statistic;
            rejects += r.decision.rejects() as usize;
        }
        let mean = sum / reps as f64;
        assert!((mean - lambda * (k as f64 / m as f64).sqrt()).abs() < 4.0 / (reps as f64).sqrt());
        assert!(rejects as f64 / reps as f64 >= 0.99);
    }

    #[test]
    fn oracle_examples() {
        assert!((oracle_risk(0.0) - 1.0).abs() < 1e-15);
        assert!((oracle_risk(2.0) - 0.31731).abs() < 1e-5);
        assert!((oracle_risk(6.0) - 0.0027).abs() < 1e-4);
        let f = line_field(&[0.3, 0.1]);
        let r = oracle_test(&f, &Cluster::from_ids(vec![0, 1]), 2.0, NoiseModel::Gaussian).unwrap();
        assert_eq!(r.threshold, 1.0);
        assert_eq!(r.decision, Decision::Accept);
    }

    #[test]
    fn normal_tail_values() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_sf(1.959_963_984_540_054) - 0.025).abs() < 1e-10);
        assert!((normal_sf(-1.0) + normal_sf(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn calibration_order_statistic() {
        assert_eq!(quantile_rank(0.01, 99).unwrap(), 99);
        assert_eq!(quantile_rank(0.05, 399).unwrap(), 380);
        assert!(quantile_rank(0.001, 99).is_err());
        assert!(quantile_rank(0.0, 99).is_err());
        let stats: Vec<f64> = (0..99).map(|i| ((i * 37) % 99) as f64).collect();
        let cal = calibrate_from(stats, 0.01, 0).unwrap();
        assert_eq!(cal.threshold, 98.0);
        assert!(calibrate_from(vec![0.0; 50], 0.05, 0).is_err());
    }

    #[test]
    fn degenerate_statistic_calibrates_to_zero() {
        let cal = calibrate(|_: &Field<f64>| Ok(0.0), 4, 0, NoiseModel::Gaussian, 0.05, 99, 3).unwrap();
        assert_eq!(cal.threshold, 0.0);
        assert!(decide(1e-12, cal.threshold).rejects());
        assert!(!decide(0.0, cal.threshold).rejects());
    }

    #[test]
    fn calibration_is_deterministic() {
        let stat = |f: &Field<f64>| Ok(f.values()[0]);
        let a = calibrate(stat, 3, 0, NoiseModel::Gaussian, 0.05, 200, 7).unwrap();
        let b = calibrate(stat, 3, 0, NoiseModel::Gaussian, 0.05, 200, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rate_examples() {
        let r = |name: &str, kv: &[(&str, f64)]| {
            rate(name, &kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()).unwrap()
        };
        assert_eq!(r("thick", &[("m", 10.0), ("k", 10.0)]), 0.0);
        assert!((r("thick", &[("m", E * 3.0), ("k", 3.0)]) - 2f64.sqrt()).abs() < 1e-12);
        assert!((r("bernoulli", &[("m", 2.0 * E), ("k", 2.0)]) - 0.625).abs() < 1e-12);
        let oracle = (2.0 * (16384f64 / 49.0).ln()).sqrt();
        assert!((r("thick", &[("m", 16384.0), ("k", 49.0)]) - oracle).abs() < 1e-12);
        assert!((r("band", &[("ell", 32.0), ("h", 4.0)]) - 8f64.sqrt()).abs() < 1e-12);
        assert!((r("path", &[("m", E * E)]) - 2.0).abs() < 1e-12);
        assert!((r("poisson", &[("m", E), ("k", 1.0)]) - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((r("thick-scale", &[("d", 2.0), ("lambda", 1.0 / E)]) - 2.0).abs() < 1e-12);
        assert!((r("thin", &[("d", 2.0), ("p", 1.0), ("r", 1.0 / E), ("lambda", 1.0 / E)]) - 2.0).abs() < 1e-12);
        assert!(
            (r("eps-scan", &[("n", 1.0), ("d", 1.0), ("lambda", 1.0 / E), ("eps", 1.0)]) - 2.0 * 2f64.sqrt()).abs()
                < 1e-12
        );
        // ell = e^e: log†(log ℓ) = log e = 1; h = 1, m = 1 → √(e^e + 0 + 1).
        let ell = E.powf(E);
        let full = r("band-full", &[("ell", ell), ("h", 1.0), ("m", 1.0), ("d", 2.0)]);
        assert!((full - (ell + 1.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rate_errors() {
        let p = |kv: &[(&str, f64)]| kv.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>();
        assert!(matches!(
            rate("thick", &p(&[("m", 10.0), ("k", 0.0)])),
            Err(ScanError::Domain(_))
        ));
        assert!(matches!(
            rate("thick", &p(&[("m", 1.0), ("k", 2.0)])),
            Err(ScanError::Domain(_))
        ));
        assert!(matches!(
            rate("thick-scale", &p(&[("d", 2.0), ("lambda", 1.0)])),
            Err(ScanError::Domain(_))
        ));
        assert!(matches!(rate("thick", &p(&[("m", 10.0)])), Err(ScanError::Config { key, .. }) if key == "k"));
        assert!(matches!(rate("nope", &p(&[])), Err(ScanError::Config { .. })));
    }

    #[test]
    fn log_dagger_branches() {
        assert_eq!(log_dagger(1.0), 1.0);
        assert_eq!(log_dagger(0.0), 1.0);
        assert!((log_dagger(E) - 1.0).abs() < 1e-15);
        assert!((log_dagger(100.0) - 100f64.ln()).abs() < 1e-15);
    }
}
