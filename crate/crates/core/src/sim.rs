//! Monte Carlo risk estimation and signal-strength sweeps.
//!
//! Seeds: calibration trial `i` uses `[master, 0, i]`; fresh null trial `i`
//! uses `[master, 1, i]`; H₁ trial `k` of truth `j` at grid point `p` uses
//! `[master, 2, p, j, k]`; truth sampling uses `[master, 3, …]`.

use crate::cluster::Cluster;
use crate::clusters::{ClassSpec, ThickParams};
use crate::detect::{
    calibrate_from, decide, default_scale_threshold, multiscale_test, scan, Calibration, Rate, ScaleNet,
};
use crate::error::{Result, ScanError};
use crate::growth::{
    richardson_grow_with, scan_sequences, scan_spacetime_cylinders, trajectory_sequences, ClusterSequence,
    TrajectoryClass,
};
use crate::metric::build_net;
use crate::models::{
    plant_in_place, plant_sequence_in_place, sample_null_with, sequence_standardized_sum, standardized_sum, Field,
    NoiseModel, SignalSpec,
};
use crate::network::{make_grid_cloud, make_lattice, make_uniform_cloud, NodeSet};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Truth classes at or below this size are used exhaustively.
pub const EXHAUSTIVE_TRUTH_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetSpec {
    /// `{0, …, side−1}^d` with the ℓ1 metric.
    Lattice { d: usize, side: usize },
    /// `m` uniform points in `[0,1]^d`, Euclidean.
    Cloud {
        d: usize,
        m: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Cell centers of a `side^d` grid in `[0,1]^d`, Euclidean.
    Grid { d: usize, side: usize },
}

impl NetSpec {
    pub fn build<S: Scalar>(&self) -> Result<NodeSet<S>> {
        match *self {
            NetSpec::Lattice { d, side } => make_lattice(d, side),
            NetSpec::Cloud { d, m, seed } => make_uniform_cloud(d, m, seed),
            NetSpec::Grid { d, side } => make_grid_cloud(d, side),
        }
    }
}

fn default_onset_max() -> Option<usize> {
    None
}

/// The H₁ family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthSpec<S> {
    /// Static clusters from a class, planted at every time step.
    Class { class: ClassSpec<S> },
    /// Richardson growth from a uniform lattice node, confined to the closed
    /// ℓ1 ball of `limit_radius`, with onset uniform in `[onset_min, onset_max]`.
    Richardson {
        p: f64,
        limit_radius: S,
        #[serde(default)]
        onset_min: usize,
        /// Defaults to `t_max / 2`.
        #[serde(default = "default_onset_max")]
        onset_max: Option<usize>,
    },
}

/// The test under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestSpec<S> {
    /// Scan over the whole class.
    Scan {
        class: ClassSpec<S>,
    },
    /// Scan over a greedy ε-net of the class.
    EpsScan {
        class: ClassSpec<S>,
        epsilon: S,
    },
    /// Ball ε-nets at radii `radius_factor · 2^{−ℓ} · unit` for each listed `ℓ`.
    Multiscale {
        scales: Vec<usize>,
        epsilon: S,
        #[serde(default = "one")]
        radius_factor: S,
        /// Constant `c` in the default per-scale thresholds.
        #[serde(default = "one_f64")]
        c: f64,
        /// Calibrate `max_ℓ (T_ℓ − τ_ℓ)`; otherwise reject iff it exceeds 0.
        #[serde(default = "yes")]
        calibrated: bool,
    },
    Average,
    /// Likelihood-ratio test for the planted cluster itself, threshold `Λ/2`.
    Oracle,
    /// Space–time cylinders over (an ε-net of) the class with dyadic windows.
    Cylinders {
        class: ClassSpec<S>,
        #[serde(default)]
        epsilon: Option<S>,
    },
    /// Moving-ball trajectory class.
    Trajectories {
        class: TrajectoryClass<S>,
    },
}

fn one<S: Scalar>() -> S {
    S::one()
}

fn one_f64() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_alpha() -> f64 {
    0.05
}

fn default_draws() -> usize {
    399
}

fn default_truth_samples() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig<S> {
    pub net: NetSpec,
    pub truth: TruthSpec<S>,
    pub test: TestSpec<S>,
    #[serde(default)]
    pub model: NoiseModel,
    /// Last time step; 0 for a static experiment.
    #[serde(default)]
    pub t_max: usize,
    pub lambdas: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Null draws `B` for calibration.
    #[serde(default = "default_draws")]
    pub calibration_draws: usize,
    #[serde(default = "default_truth_samples")]
    pub truth_samples: usize,
    /// Reported alongside each row; defaults to the thick-cluster rate at the mean truth size.
    #[serde(default)]
    pub theory: Option<Rate>,
    #[serde(default)]
    pub seed: u64,
}

impl<S: Scalar> ExperimentConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| ScanError::Config {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        if self.trials < 50 {
            return Err(bad("trials", "must be at least 50"));
        }
        if self.lambdas.is_empty() {
            return Err(bad("lambdas", "grid is empty"));
        }
        if self.lambdas.windows(2).any(|w| !(w[0] < w[1])) || self.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(bad("lambdas", "grid must be nonnegative and strictly increasing"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(bad("alpha", "must lie in (0, 1)"));
        }
        if self.calibration_draws < 99 {
            return Err(bad("calibration_draws", "must be at least 99"));
        }
        if self.truth_samples == 0 {
            return Err(bad("truth_samples", "must be positive"));
        }
        Ok(())
    }
}

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    pub lambda: f64,
    pub theory_threshold: f64,
    pub threshold: f64,
    pub type1: f64,
    pub type1_se: f64,
    pub type2_worst: f64,
    pub type2_se: f64,
    /// Index into [`Sweep::truths`] of the worst truth.
    pub worst_truth: usize,
    pub risk: f64,
    pub se: f64,
    pub trials: usize,
    pub seed: u64,
    pub wallclock_ms: u128,
}

/// A planted anomaly.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Static(Cluster),
    Sequence(ClusterSequence),
}

impl Truth {
    /// Anomalous `(node, time)` pairs once planted on a field with `t_max`.
    pub fn pairs(&self, t_max: usize) -> usize {
        match self {
            Truth::Static(c) => c.len() * (t_max + 1),
            Truth::Sequence(s) => s.total_pairs(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub rows: Vec<RiskEstimate>,
    pub truths: Vec<Truth>,
    /// Whether the truth class was used in full.
    pub exhaustive_truth: bool,
    pub calibration: Option<Calibration<f64>>,
    /// Number of clusters (or cylinders, sequences) searched by the test.
    pub search_size: usize,
    pub warnings: Vec<String>,
}

pub const SWEEP_CSV_HEADER: &str = "lambda,theory_threshold,type1,type2_worst,risk,se,trials,seed";

impl Sweep {
    pub fn write_csv<W: std::io::Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                r.lambda, r.theory_threshold, r.type1, r.type2_worst, r.risk, r.se, r.trials, r.seed
            )?;
        }
        Ok(())
    }
}

/// A test ready to evaluate on fields.
pub enum PreparedTest<S> {
    Scan(Vec<Cluster>),
    Multiscale { nets: Vec<ScaleNet<S>>, calibrated: bool },
    Average,
    Oracle,
    Cylinders(Vec<Cluster>),
    Sequences(Vec<ClusterSequence>),
}

impl<S: Scalar> PreparedTest<S> {
    pub fn prepare(spec: &TestSpec<S>, net: &NodeSet<S>, t_max: usize) -> Result<Self> {
        let nonempty = |v: Vec<Cluster>, key: &str| {
            if v.is_empty() {
                Err(ScanError::Config {
                    key: key.to_string(),
                    reason: "the class holds no cluster".into(),
                })
            } else {
                Ok(v)
            }
        };
        Ok(match spec {
            TestSpec::Scan { class } => PreparedTest::Scan(nonempty(class.clusters(net)?, "test.class")?),
            TestSpec::EpsScan { class, epsilon } => {
                let eps = build_net(class.clusters(net)?, *epsilon, class.family())?;
                PreparedTest::Scan(nonempty(eps.members, "test.class")?)
            }
            TestSpec::Multiscale {
                scales,
                epsilon,
                radius_factor,
                c,
                calibrated,
            } => {
                if scales.is_empty() {
                    return Err(ScanError::Config {
                        key: "test.scales".into(),
                        reason: "no scale given".into(),
                    });
                }
                let mut nets = Vec::new();
                for &l in scales {
                    let radius = *radius_factor * net.unit_scale() / S::lit(2f64.powi(l as i32));
                    let stream = ClassSpec::Thick(ThickParams::balls(radius)).clusters(net)?;
                    nets.push(ScaleNet {
                        scale: l,
                        net: build_net(stream, *epsilon, "balls")?,
                        threshold: default_scale_threshold(l, net.dim(), *c),
                    });
                }
                PreparedTest::Multiscale {
                    nets,
                    calibrated: *calibrated,
                }
            }
            TestSpec::Average => PreparedTest::Average,
            TestSpec::Oracle => PreparedTest::Oracle,
            TestSpec::Cylinders { class, epsilon } => {
                let stream = class.clusters(net)?;
                let bases = match epsilon {
                    Some(e) => build_net(stream, *e, class.family())?.members,
                    None => stream,
                };
                PreparedTest::Cylinders(nonempty(bases, "test.class")?)
            }
            TestSpec::Trajectories { class } => {
                let seqs = trajectory_sequences(net, class, t_max)?;
                if seqs.is_empty() {
                    return Err(ScanError::Config {
                        key: "test.class".into(),
                        reason: "no admissible trajectory".into(),
                    });
                }
                PreparedTest::Sequences(seqs)
            }
        })
    }

    pub fn search_size(&self) -> usize {
        match self {
            PreparedTest::Scan(c) => c.len(),
            PreparedTest::Multiscale { nets, .. } => nets.iter().map(|n| n.net.len()).sum(),
            PreparedTest::Average | PreparedTest::Oracle => 1,
            PreparedTest::Cylinders(c) => c.len(),
            PreparedTest::Sequences(s) => s.len(),
        }
    }

    /// Whether the rejection threshold comes from null calibration.
    pub fn calibrated(&self) -> bool {
        match self {
            PreparedTest::Oracle => false,
            PreparedTest::Multiscale { calibrated, .. } => *calibrated,
            _ => true,
        }
    }

    /// Threshold for uncalibrated tests at signal strength `lambda`.
    pub fn fixed_threshold(&self, lambda: f64) -> S {
        match self {
            PreparedTest::Oracle => S::lit(lambda / 2.0),
            _ => S::zero(),
        }
    }

    /// Statistic on `field`; the oracle reads the planted `truth`.
    pub fn statistic(&self, field: &Field<S>, truth: &Truth, model: NoiseModel) -> Result<S> {
        match self {
            PreparedTest::Scan(c) => Ok(scan(field, c, model)?.statistic),
            PreparedTest::Multiscale { nets, .. } => Ok(multiscale_test(field, nets, model)?.statistic),
            PreparedTest::Average => Ok(crate::detect::average_test(field, model, S::zero()).statistic),
            PreparedTest::Oracle => match truth {
                Truth::Static(c) => standardized_sum(field, c, model),
                Truth::Sequence(s) => sequence_standardized_sum(field, s, model),
            },
            PreparedTest::Cylinders(b) => Ok(scan_spacetime_cylinders(field, b, model)?.statistic),
            PreparedTest::Sequences(s) => Ok(scan_sequences(field, s, model)?.statistic),
        }
    }
}

/// Draws the truth set: the whole class when small, else `samples` members.
pub fn sample_truths<S: Scalar>(
    spec: &TruthSpec<S>,
    net: &NodeSet<S>,
    t_max: usize,
    samples: usize,
    master: u64,
) -> Result<(Vec<Truth>, bool)> {
    let empty = || ScanError::Config {
        key: "truth".into(),
        reason: "truth class is empty".into(),
    };
    match spec {
        TruthSpec::Class { class } => {
            let all = class.clusters(net)?;
            if all.is_empty() {
                return Err(empty());
            }
            if all.len() <= EXHAUSTIVE_TRUTH_LIMIT.max(samples) {
                let exhaustive = all.len() <= EXHAUSTIVE_TRUTH_LIMIT || all.len() <= samples;
                return Ok((all.into_iter().map(Truth::Static).collect(), exhaustive));
            }
            let mut rng = rng_from_seed(derive_seed(master, &[3]));
            let mut idx = rand::seq::index::sample(&mut rng, all.len(), samples).into_vec();
            idx.sort_unstable();
            Ok((idx.into_iter().map(|i| Truth::Static(all[i].clone())).collect(), false))
        }
        TruthSpec::Richardson {
            p,
            limit_radius,
            onset_min,
            onset_max,
        } => {
            let side = net
                .side()
                .ok_or_else(|| ScanError::param("net.mode", "Richardson truths need a lattice"))?;
            let onset_max = onset_max.unwrap_or(t_max / 2);
            if *onset_min > onset_max || onset_max > t_max {
                return Err(ScanError::Config {
                    key: "truth.onset_max".into(),
                    reason: "need onset_min <= onset_max <= t_max".into(),
                });
            }
            let margin = limit_radius.ceil().to_usize().unwrap_or(usize::MAX);
            if 2 * margin >= side {
                return Err(empty());
            }
            let d = net.dim();
            (0..samples)
                .map(|j| {
                    let mut rng = rng_from_seed(derive_seed(master, &[3, j as u64]));
                    let coords: Vec<usize> = (0..d).map(|_| rng.random_range(margin..side - margin)).collect();
                    let onset = rng.random_range(*onset_min..=onset_max);
                    let x0 = net.lattice_id(&coords).expect("in range");
                    let confine = net.closed_ball_nodes(net.coord(x0), *limit_radius)?;
                    let seq = richardson_grow_with(net, x0, *p, onset, t_max, Some(&confine), &mut rng)?;
                    Ok(Truth::Sequence(seq))
                })
                .collect::<Result<Vec<_>>>()
                .map(|v| (v, false))
        }
    }
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Risk estimates over the Λ grid with one shared calibration.
pub fn sweep<S: Scalar>(cfg: &ExperimentConfig<S>) -> Result<Sweep> {
    cfg.validate()?;
    let net: NodeSet<S> = cfg.net.build()?;
    let m = net.len();
    let t_max = cfg.t_max;
    let model = cfg.model;
    let master = cfg.seed;
    let test = PreparedTest::prepare(&cfg.test, &net, t_max)?;
    let (truths, exhaustive_truth) = sample_truths(&cfg.truth, &net, t_max, cfg.truth_samples, master)?;

    let mut warnings = Vec::new();
    let min_pairs = truths.iter().map(|t| t.pairs(t_max)).min().unwrap_or(0);
    if !model.normal_approx_ok(min_pairs) {
        warnings.push(format!(
            "smallest truth has {min_pairs} anomalous values; the normal approximation for {} sums is rough below {}",
            model.name(),
            crate::models::MIN_NORMAL_APPROX_SIZE
        ));
    }
    let theory = match cfg.theory {
        Some(r) => r.eval()?,
        None => {
            let mean = truths.iter().map(|t| t.pairs(t_max) as f64).sum::<f64>() / truths.len() as f64;
            Rate::Thick {
                m: (m * (t_max + 1)) as f64,
                k: mean,
            }
            .eval()
            .unwrap_or(f64::NAN)
        }
    };

    let null_stat = |path: &[u64]| -> Result<S> {
        let mut rng = rng_from_seed(derive_seed(master, path));
        let field = sample_null_with(m, model, t_max, &mut rng);
        test.statistic(&field, &truths[0], model)
    };
    let calibration = if test.calibrated() {
        let stats = (0..cfg.calibration_draws)
            .into_par_iter()
            .map(|i| null_stat(&[0, i as u64]).map(|s| s.as_f64()))
            .collect::<Result<Vec<f64>>>()?;
        Some(
            calibrate_from(stats, cfg.alpha, derive_seed(master, &[0])).map_err(|e| match e {
                ScanError::Parameter { reason, .. } => ScanError::Config {
                    key: "calibration_draws".into(),
                    reason,
                },
                other => other,
            })?,
        )
    } else {
        None
    };
    let fresh_null: Vec<S> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| null_stat(&[1, i as u64]))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.lambdas.len());
    for (point, &lambda) in cfg.lambdas.iter().enumerate() {
        let start = Instant::now();
        let threshold = match &calibration {
            Some(c) => S::lit(c.threshold),
            None => test.fixed_threshold(lambda),
        };
        let false_alarms = fresh_null.iter().filter(|&&s| decide(s, threshold).rejects()).count();
        let sig = SignalSpec::new(lambda);
        let n_truth = truths.len();
        let misses: Vec<bool> = (0..n_truth * cfg.trials)
            .into_par_iter()
            .map(|idx| {
                let (j, k) = (idx / cfg.trials, idx % cfg.trials);
                let mut rng = rng_from_seed(derive_seed(master, &[2, point as u64, j as u64, k as u64]));
                let mut field = sample_null_with(m, model, t_max, &mut rng);
                match &truths[j] {
                    Truth::Static(c) => plant_in_place(&mut field, c, &sig, model, &mut rng)?,
                    Truth::Sequence(s) => plant_sequence_in_place(&mut field, s, &sig, model, &mut rng)?,
                }
                let stat = test.statistic(&field, &truths[j], model)?;
                Ok(!decide(stat, threshold).rejects())
            })
            .collect::<Result<_>>()?;
        let counts: Vec<usize> = misses
            .chunks(cfg.trials)
            .map(|c| c.iter().filter(|&&x| x).count())
            .collect();
        let mut worst = 0;
        for j in 1..n_truth {
            if counts[j] > counts[worst] {
                worst = j;
            }
        }
        let type1 = false_alarms as f64 / cfg.trials as f64;
        let type2 = counts[worst] as f64 / cfg.trials as f64;
        let (se1, se2) = (binomial_se(type1, cfg.trials), binomial_se(type2, cfg.trials));
        rows.push(RiskEstimate {
            lambda,
            theory_threshold: theory,
            threshold: threshold.as_f64(),
            type1,
            type1_se: se1,
            type2_worst: type2,
            type2_se: se2,
            worst_truth: worst,
            risk: type1 + type2,
            se: (se1 * se1 + se2 * se2).sqrt(),
            trials: cfg.trials,
            seed: master,
            wallclock_ms: start.elapsed().as_millis(),
        });
    }
    Ok(Sweep {
        rows,
        truths,
        exhaustive_truth,
        calibration,
        search_size: test.search_size(),
        warnings,
    })
}

/// Risk at a single signal strength (the first grid point).
pub fn estimate_risk<S: Scalar>(cfg: &ExperimentConfig<S>) -> Result<RiskEstimate> {
    let mut one = cfg.clone();
    one.lambdas.truncate(1);
    Ok(sweep(&one)?.rows.remove(0))
}
