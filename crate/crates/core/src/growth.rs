//! Cluster sequences over time: cylinders, cones, Hölder trajectories and
//! Richardson growth, their verifiers, and space–time scans.

use crate::cluster::{parse_ids, Cluster, Metadata, NodeId};
use crate::clusters::{check_holder, holder_sequences};
use crate::detect::{par_argmax, ScanOutcome};
use crate::error::{Result, ScanError};
use crate::metric::delta;
use crate::models::{Field, NoiseModel};
use crate::network::{for_each_box_point, Mode, NodeSet};
use crate::rng::{rng_from_seed, SimRng};
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Clusters `K_0, …, K_{t_m}`; slices may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterSequence {
    slices: Vec<Cluster>,
}

impl ClusterSequence {
    pub fn new(slices: Vec<Cluster>) -> Result<Self> {
        if slices.is_empty() {
            return Err(ScanError::domain("a sequence needs at least one time step"));
        }
        Ok(ClusterSequence { slices })
    }

    /// The same cluster at every step `0..=t_max`.
    pub fn constant(cluster: Cluster, t_max: usize) -> Self {
        ClusterSequence {
            slices: vec![cluster; t_max + 1],
        }
    }

    pub fn t_max(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn slices(&self) -> &[Cluster] {
        &self.slices
    }

    pub fn slice(&self, t: usize) -> &Cluster {
        &self.slices[t]
    }

    /// `t_K`, the first nonempty step.
    pub fn onset(&self) -> Option<usize> {
        self.slices.iter().position(|c| !c.is_empty())
    }

    /// `t_K⁺`, the last nonempty step.
    pub fn last_active(&self) -> Option<usize> {
        self.slices.iter().rposition(|c| !c.is_empty())
    }

    /// Number of anomalous `(node, time)` pairs.
    pub fn total_pairs(&self) -> usize {
        self.slices.iter().map(Cluster::len).sum()
    }

    /// Whether `K_t ⊆ K_{t+1}` for every `t`.
    pub fn is_nested(&self) -> bool {
        self.slices.windows(2).all(|w| w[0].is_subset(&w[1]))
    }

    /// Lines `t: id id …`, one per step including empty ones.
    pub fn write<W: Write + ?Sized>(&self, w: &mut W, meta: &Metadata) -> Result<()> {
        meta.write_header(w)?;
        for (t, c) in self.slices.iter().enumerate() {
            write!(w, "{t}:")?;
            for id in c.ids() {
                write!(w, " {id}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<(Metadata, Self)> {
        let mut meta = Metadata::new();
        let mut slices: Vec<Cluster> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                meta.parse_line(line);
                continue;
            }
            let (t, rest) = line
                .split_once(':')
                .ok_or_else(|| ScanError::Parse(format!("expected `t: ids`, got `{line}`")))?;
            let t: usize = t
                .trim()
                .parse()
                .map_err(|_| ScanError::Parse(format!("bad time index in `{line}`")))?;
            if t != slices.len() {
                return Err(ScanError::Parse(format!("time {t} out of order")));
            }
            slices.push(Cluster::from_ids(parse_ids(rest)?));
        }
        Ok((meta, ClusterSequence::new(slices)?))
    }
}

fn check_times(t0: usize, t_max: usize) -> Result<()> {
    if t0 > t_max {
        return Err(ScanError::param("onset", format!("onset {t0} exceeds t_max {t_max}")));
    }
    Ok(())
}

/// `K_t = B(x₀, r₀) ∩ V` for `t ≥ t₀`, empty before.
pub fn make_cylinder<S: Scalar>(net: &NodeSet<S>, x0: &[S], r0: S, t0: usize, t_max: usize) -> Result<ClusterSequence> {
    check_times(t0, t_max)?;
    let base = net.ball_nodes(x0, r0)?;
    if base.is_empty() {
        return Err(ScanError::domain("cylinder base ball holds no node"));
    }
    let slices = (0..=t_max)
        .map(|t| if t >= t0 { base.clone() } else { Cluster::empty() })
        .collect();
    ClusterSequence::new(slices)
}

/// Closed balls of radius `C(t − t₀)` around `x₀`.
pub fn make_cone<S: Scalar>(net: &NodeSet<S>, x0: &[S], speed: S, t0: usize, t_max: usize) -> Result<ClusterSequence> {
    check_times(t0, t_max)?;
    if !(speed > S::zero()) {
        return Err(ScanError::param("speed", "must be positive"));
    }
    let slices = (0..=t_max)
        .map(|t| {
            if t < t0 {
                Ok(Cluster::empty())
            } else {
                net.closed_ball_nodes(x0, speed * S::from_count(t - t0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ClusterSequence::new(slices)
}

/// Piecewise-linear `g: [0, ∞) → ℝ^d` through control points, constant past the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct HolderTrajectory<S> {
    /// Increasing control times, in rescaled time `t/ξ`.
    pub times: Vec<S>,
    /// One d-vector per control time.
    pub points: Vec<Vec<S>>,
    pub alpha: S,
    pub kappa: S,
}

impl<S: Scalar> HolderTrajectory<S> {
    /// Checks every coordinate against `|g(x) − g(y)| ≤ κ|x − y|^α` at the control times.
    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.points.len() {
            return Err(ScanError::param("points", "need one control point per control time"));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ScanError::param("times", "control times must increase"));
        }
        if !(self.alpha > S::zero() && self.alpha <= S::one()) {
            return Err(ScanError::param("alpha", "must lie in (0, 1]"));
        }
        if !(self.kappa >= S::zero()) {
            return Err(ScanError::param("kappa", "must be nonnegative"));
        }
        let d = self.points[0].len();
        if self.points.iter().any(|p| p.len() != d) {
            return Err(ScanError::param("points", "control points differ in dimension"));
        }
        for j in 0..d {
            let values: Vec<S> = self.points.iter().map(|p| p[j]).collect();
            if let Err((a, b)) = check_holder(&self.times, &values, self.alpha, self.kappa) {
                return Err(ScanError::param(
                    "points",
                    format!("Hölder condition fails between control points {a} and {b} (coordinate {j})"),
                ));
            }
        }
        Ok(())
    }

    pub fn eval(&self, u: S) -> Vec<S> {
        let n = self.times.len();
        if u <= self.times[0] {
            return self.points[0].clone();
        }
        if u >= self.times[n - 1] {
            return self.points[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= u) - 1;
        let w = (u - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.points[i]
            .iter()
            .zip(&self.points[i + 1])
            .map(|(&a, &b)| a + w * (b - a))
            .collect()
    }
}

/// Time layout and tube radius for a moving ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct TrajectoryWindow<S> {
    /// Ball radius `r_m`, native units.
    pub radius: S,
    /// Time scale `ξ_m`; step `t` maps to `g((t − onset)/ξ)`.
    pub xi: S,
    pub onset: usize,
    /// Last active step; defaults to `t_max`.
    #[serde(default)]
    pub end: Option<usize>,
    pub t_max: usize,
    /// Spread resolution of the node set; `radius ≥ 2 r_star` is required.
    #[serde(default)]
    pub r_star: S,
}

/// `K_t = B(g((t − onset)/ξ), r) ∩ V` between onset and end.
pub fn make_holder_trajectory<S: Scalar>(
    net: &NodeSet<S>,
    g: &HolderTrajectory<S>,
    w: &TrajectoryWindow<S>,
) -> Result<ClusterSequence> {
    g.validate()?;
    if g.points[0].len() != net.dim() {
        return Err(ScanError::param(
            "points",
            "trajectory dimension differs from the node set",
        ));
    }
    if !(w.radius > S::zero()) || w.radius < S::lit(2.0) * w.r_star {
        return Err(ScanError::param("radius", "need radius > 0 and radius >= 2 r_star"));
    }
    if !(w.xi > S::zero()) {
        return Err(ScanError::param("xi", "must be positive"));
    }
    let end = w.end.unwrap_or(w.t_max);
    check_times(w.onset, end)?;
    check_times(end, w.t_max)?;
    let slices = (0..=w.t_max)
        .map(|t| {
            if t < w.onset || t > end {
                return Ok(Cluster::empty());
            }
            let center = g.eval(S::from_count(t - w.onset) / w.xi);
            net.ball_nodes(&center, w.radius)
        })
        .collect::<Result<Vec<_>>>()?;
    ClusterSequence::new(slices)
}

/// Richardson growth from the single node `x0`.
pub fn richardson_grow<S: Scalar>(
    net: &NodeSet<S>,
    x0: NodeId,
    p: f64,
    t0: usize,
    t_max: usize,
    seed: u64,
) -> Result<ClusterSequence> {
    richardson_grow_with(net, x0, p, t0, t_max, None, &mut rng_from_seed(seed))
}

/// Richardson growth whose occupied set never leaves `confine` (when given).
///
/// At each step every vacant neighbor of the occupied set, visited in id
/// order, is occupied with probability `p` (one uniform draw each).
pub fn richardson_grow_with<S: Scalar>(
    net: &NodeSet<S>,
    x0: NodeId,
    p: f64,
    t0: usize,
    t_max: usize,
    confine: Option<&Cluster>,
    rng: &mut SimRng,
) -> Result<ClusterSequence> {
    if net.mode() != Mode::LatticeL1 {
        return Err(ScanError::param("mode", "Richardson growth needs a lattice node set"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(ScanError::param("p", "infection probability must lie in (0, 1]"));
    }
    check_times(t0, t_max)?;
    if x0 as usize >= net.len() {
        return Err(ScanError::domain("seed node is not in the node set"));
    }
    if confine.is_some_and(|c| !c.contains(x0)) {
        return Err(ScanError::domain("seed node lies outside the confining set"));
    }
    let mut occupied = vec![false; net.len()];
    occupied[x0 as usize] = true;
    let mut members = vec![x0];
    let mut slices = vec![Cluster::empty(); t0];
    slices.push(Cluster::from_sorted(members.clone()));
    let mut candidates = Vec::new();
    for _ in t0 + 1..=t_max {
        candidates.clear();
        for &v in &members {
            for u in net.neighbors(v) {
                if !occupied[u as usize] && confine.is_none_or(|c| c.contains(u)) {
                    candidates.push(u);
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        for &u in &candidates {
            if rng.random::<f64>() < p {
                occupied[u as usize] = true;
                members.push(u);
            }
        }
        members.sort_unstable();
        slices.push(Cluster::from_sorted(members.clone()));
    }
    ClusterSequence::new(slices)
}

/// A parametrized growth model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GrowthSpec<S> {
    Cylinder {
        center: Vec<S>,
        radius: S,
        onset: usize,
    },
    Cone {
        center: Vec<S>,
        speed: S,
        onset: usize,
    },
    HolderTrajectory {
        trajectory: HolderTrajectory<S>,
        radius: S,
        xi: S,
        onset: usize,
        #[serde(default)]
        end: Option<usize>,
        #[serde(default)]
        r_star: S,
    },
    Richardson {
        /// Lattice coordinates of the seed node.
        center: Vec<usize>,
        p: f64,
        onset: usize,
        /// Confine growth to the closed ℓ1 ball of this radius around the seed.
        #[serde(default)]
        limit_radius: Option<S>,
        #[serde(default)]
        seed: u64,
    },
}

impl<S: Scalar> GrowthSpec<S> {
    pub fn kind(&self) -> &'static str {
        match self {
            GrowthSpec::Cylinder { .. } => "cylinder",
            GrowthSpec::Cone { .. } => "cone",
            GrowthSpec::HolderTrajectory { .. } => "holder-trajectory",
            GrowthSpec::Richardson { .. } => "richardson",
        }
    }

    pub fn build(&self, net: &NodeSet<S>, t_max: usize) -> Result<ClusterSequence> {
        match self {
            GrowthSpec::Cylinder { center, radius, onset } => make_cylinder(net, center, *radius, *onset, t_max),
            GrowthSpec::Cone { center, speed, onset } => make_cone(net, center, *speed, *onset, t_max),
            GrowthSpec::HolderTrajectory {
                trajectory,
                radius,
                xi,
                onset,
                end,
                r_star,
            } => make_holder_trajectory(
                net,
                trajectory,
                &TrajectoryWindow {
                    radius: *radius,
                    xi: *xi,
                    onset: *onset,
                    end: *end,
                    t_max,
                    r_star: *r_star,
                },
            ),
            GrowthSpec::Richardson {
                center,
                p,
                onset,
                limit_radius,
                seed,
            } => {
                let x0 = net
                    .lattice_id(center)
                    .ok_or_else(|| ScanError::domain("Richardson seed is not a lattice node"))?;
                let confine = match limit_radius {
                    Some(r) => Some(net.closed_ball_nodes(net.coord(x0), *r)?),
                    None => None,
                };
                richardson_grow_with(net, x0, *p, *onset, t_max, confine.as_ref(), &mut rng_from_seed(*seed))
            }
        }
    }

    pub fn metadata(&self) -> Metadata {
        let meta = Metadata::new().with("kind", self.kind());
        match self {
            GrowthSpec::Cylinder { radius, onset, .. } => meta.with("radius", radius).with("onset", onset),
            GrowthSpec::Cone { speed, onset, .. } => meta.with("speed", speed).with("onset", onset),
            GrowthSpec::HolderTrajectory {
                trajectory,
                radius,
                xi,
                onset,
                ..
            } => meta
                .with("alpha", trajectory.alpha)
                .with("kappa", trajectory.kappa)
                .with("radius", radius)
                .with("xi", xi)
                .with("onset", onset),
            GrowthSpec::Richardson {
                p,
                onset,
                seed,
                limit_radius,
                ..
            } => {
                let meta = meta.with("p", p).with("onset", onset).with("seed", seed);
                match limit_radius {
                    Some(r) => meta.with("limit_radius", r),
                    None => meta,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitShapeRow<S> {
    pub t: usize,
    pub delta: S,
    pub bound: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitShapeReport<S> {
    pub rows: Vec<LimitShapeRow<S>>,
    pub pass: bool,
}

/// `δ(K_t, limit)` against `ν(t − t_K)` at every nonempty step.
pub fn verify_limit_shape<S: Scalar>(
    seq: &ClusterSequence,
    limit: &Cluster,
    nu: impl Fn(usize) -> S,
) -> Result<LimitShapeReport<S>> {
    if limit.is_empty() {
        return Err(ScanError::domain("limit shape is empty"));
    }
    let Some(onset) = seq.onset() else {
        return Ok(LimitShapeReport {
            rows: Vec::new(),
            pass: true,
        });
    };
    let mut rows = Vec::new();
    for (t, k) in seq.slices().iter().enumerate().skip(onset) {
        if k.is_empty() {
            continue;
        }
        rows.push(LimitShapeRow {
            t,
            delta: delta(k, limit)?,
            bound: nu(t - onset),
        });
    }
    let pass = rows.iter().all(|r| r.delta <= r.bound);
    Ok(LimitShapeReport { rows, pass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationReport<S> {
    /// Pair `(t, s)` with `t < s` attaining the largest δ among checked pairs.
    pub worst: Option<(usize, usize, S)>,
    pub checked: usize,
    pub pass: bool,
}

/// Checks `δ(K_t, K_s) ≤ η` for nonempty slices with `|t − s| ≤ ξ`.
pub fn verify_bounded_variation<S: Scalar>(seq: &ClusterSequence, eta: S, xi: S) -> Result<VariationReport<S>> {
    if !(eta >= S::zero() && eta <= S::sqrt2()) {
        return Err(ScanError::param("eta", "must lie in [0, √2]"));
    }
    let active: Vec<usize> = (0..=seq.t_max()).filter(|&t| !seq.slice(t).is_empty()).collect();
    let mut worst: Option<(usize, usize, S)> = None;
    let mut checked = 0;
    for (i, &t) in active.iter().enumerate() {
        for &s in &active[i + 1..] {
            if S::from_count(s - t) > xi {
                break;
            }
            checked += 1;
            let d: S = delta(seq.slice(t), seq.slice(s))?;
            if worst.is_none_or(|w| d > w.2) {
                worst = Some((t, s, d));
            }
        }
    }
    let pass = worst.is_none_or(|w| w.2 <= eta);
    Ok(VariationReport { worst, checked, pass })
}

/// Window lengths `1, 2, 4, …` up to `t_max + 1`, plus `t_max + 1` itself.
pub fn dyadic_windows(t_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut w = 1usize;
    while w <= t_max + 1 {
        out.push(w);
        w *= 2;
    }
    if *out.last().unwrap() != t_max + 1 {
        out.push(t_max + 1);
    }
    out
}

/// Best cylinder found by [`scan_spacetime_cylinders`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderOutcome<S> {
    pub statistic: S,
    pub base: usize,
    pub window: usize,
    /// Anomalous-pair count of the maximizing cylinder, `|base| · window`.
    pub pairs: usize,
}

/// Maximum standardized sum over `base × [t_max − w + 1, t_max]` for every base
/// cluster and dyadic window length `w`.
pub fn scan_spacetime_cylinders<S: Scalar>(
    field: &Field<S>,
    bases: &[Cluster],
    model: NoiseModel,
) -> Result<CylinderOutcome<S>> {
    if bases.iter().any(|c| c.is_empty() || !c.valid_for(field.nodes())) {
        return Err(ScanError::domain("base clusters must be nonempty and inside the field"));
    }
    let t_max = field.t_max();
    let windows = dyadic_windows(t_max);
    let m = field.nodes();
    // Per-window node totals over the trailing window.
    let mut totals: Vec<Vec<S>> = Vec::with_capacity(windows.len());
    let mut acc = vec![S::zero(); m];
    let mut filled = 0;
    for &w in &windows {
        while filled < w {
            for (a, &x) in acc.iter_mut().zip(field.slice(t_max - filled)) {
                *a = *a + x;
            }
            filled += 1;
        }
        totals.push(acc.clone());
    }
    let nw = windows.len();
    let out = par_argmax(bases.len() * nw, |i| {
        let (b, wi) = (i / nw, i % nw);
        let base = &bases[b];
        let sum: S = base.ids().iter().map(|&v| totals[wi][v as usize]).sum();
        model.standardize(sum, base.len() * windows[wi])
    })
    .ok_or_else(|| ScanError::domain("scan over an empty base set"))?;
    let (b, wi) = (out.argmax / nw, out.argmax % nw);
    Ok(CylinderOutcome {
        statistic: out.statistic,
        base: b,
        window: windows[wi],
        pairs: bases[b].len() * windows[wi],
    })
}

/// Maximum standardized sum over explicit cluster sequences.
pub fn scan_sequences<S: Scalar>(
    field: &Field<S>,
    seqs: &[ClusterSequence],
    model: NoiseModel,
) -> Result<ScanOutcome<S>> {
    if seqs.iter().any(|s| s.total_pairs() == 0 || s.t_max() > field.t_max()) {
        return Err(ScanError::domain("sequences must be nonempty and fit the field"));
    }
    par_argmax(seqs.len(), |i| {
        let s = &seqs[i];
        let sum: S = s.slices().iter().enumerate().map(|(t, c)| field.sum_at(c, t)).sum();
        model.standardize(sum, s.total_pairs())
    })
    .ok_or_else(|| ScanError::domain("scan over an empty sequence set"))
}

/// Moving-ball class: Hölder control-point trajectories on a level grid,
/// admitted only if their sequences have bounded variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct TrajectoryClass<S> {
    pub alpha: S,
    pub kappa: S,
    /// Number of linear pieces between onset and `t_max`.
    pub segments: usize,
    /// Spacing of control values, native units.
    pub level_step: S,
    pub radius: S,
    pub xi: S,
    pub onset: usize,
    /// Admission threshold on `δ(K_t, K_s)` for `|t − s| ≤ ξ`.
    pub eta: S,
    #[serde(default = "default_max_trajectories")]
    pub max_trajectories: usize,
}

fn default_max_trajectories() -> usize {
    100_000
}

/// Every admitted trajectory sequence, in lexicographic control-value order.
pub fn trajectory_sequences<S: Scalar>(
    net: &NodeSet<S>,
    class: &TrajectoryClass<S>,
    t_max: usize,
) -> Result<Vec<ClusterSequence>> {
    if class.segments == 0 {
        return Err(ScanError::param("segments", "must be positive"));
    }
    if !(class.level_step > S::zero()) {
        return Err(ScanError::param("level_step", "must be positive"));
    }
    if !(class.xi > S::zero()) {
        return Err(ScanError::param("xi", "must be positive"));
    }
    check_times(class.onset, t_max)?;
    let d = net.dim();
    let span = S::from_count(t_max - class.onset) / class.xi;
    let times: Vec<S> = (0..=class.segments)
        .map(|i| span * S::from_count(i) / S::from_count(class.segments))
        .collect();
    let extent = net.extent();
    let nlev = (extent / class.level_step + S::lit(1e-9)).floor().to_usize().unwrap() + 1;
    let levels: Vec<S> = (0..nlev).map(|k| class.level_step * S::from_count(k)).collect();
    let coords = holder_sequences(&times, &levels, class.alpha, class.kappa, class.max_trajectories)?;
    let total = coords
        .len()
        .checked_pow(d as u32)
        .filter(|&n| n <= class.max_trajectories);
    if total.is_none() {
        return Err(ScanError::Capacity(format!(
            "{}^{d} trajectories exceed max_trajectories {}",
            coords.len(),
            class.max_trajectories
        )));
    }
    let window = TrajectoryWindow {
        radius: class.radius,
        xi: class.xi,
        onset: class.onset,
        end: None,
        t_max,
        r_star: S::zero(),
    };
    let mut out = Vec::new();
    let mut err = None;
    for_each_box_point(&vec![0; d], &vec![coords.len() - 1; d], |choice| {
        if err.is_some() {
            return;
        }
        let g = HolderTrajectory {
            times: times.clone(),
            points: (0..times.len())
                .map(|i| choice.iter().map(|&c| coords[c][i]).collect())
                .collect(),
            alpha: class.alpha,
            kappa: class.kappa,
        };
        let res = make_holder_trajectory(net, &g, &window).and_then(|seq| {
            let ok = seq.total_pairs() > 0 && verify_bounded_variation(&seq, class.eta, class.xi)?.pass;
            Ok(ok.then_some(seq))
        });
        match res {
            Ok(Some(seq)) => out.push(seq),
            Ok(None) => {}
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => {
            let mut seen = std::collections::HashSet::new();
            out.retain(|s| seen.insert(s.clone()));
            Ok(out)
        }
    }
}
