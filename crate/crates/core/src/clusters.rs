//! Generators for every cluster family: discrete balls, thick shapes, tubes
//! around Hölder curves, bands around lattice paths, and lattice animals.
//!
//! All families go through the same finishing step: empty clusters are
//! dropped, duplicates (as id sets) are dropped, and clusters larger than
//! `m/4` are dropped.

use crate::cluster::{Cluster, Metadata, NodeId};
use crate::error::{Result, ScanError};
use crate::network::{for_each_box_point, Mode, NodeSet};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Largest cluster any generator emits, as a fraction of `m`.
pub fn size_cap(m: usize) -> usize {
    m / 4
}

/// Deduplicating, size-capped adapter over a cluster iterator.
pub struct Unique<I> {
    inner: I,
    seen: HashSet<Cluster>,
    cap: usize,
}

impl<I: Iterator<Item = Cluster>> Iterator for Unique<I> {
    type Item = Cluster;

    fn next(&mut self) -> Option<Cluster> {
        for c in self.inner.by_ref() {
            if c.is_empty() || c.len() > self.cap {
                continue;
            }
            if self.seen.insert(c.clone()) {
                return Some(c);
            }
        }
        None
    }
}

pub fn unique<I: IntoIterator<Item = Cluster>>(inner: I, m: usize) -> Unique<I::IntoIter> {
    Unique {
        inner: inner.into_iter(),
        seen: HashSet::new(),
        cap: size_cap(m),
    }
}

/// One cluster `B(x, λ) ∩ V` per node center `x`.
pub fn enumerate_balls<S: Scalar>(net: &NodeSet<S>, radius: S) -> Result<impl Iterator<Item = Cluster> + '_> {
    if !(radius > S::zero()) {
        return Err(ScanError::param("lambda", "radius must be positive"));
    }
    let m = net.len();
    Ok(unique(
        (0..m as NodeId).map(move |x| {
            net.ball_nodes(net.coord(x), radius)
                .expect("node centers are in the domain")
        }),
        m,
    ))
}

// ---------------------------------------------------------------------------
// Thick clusters

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Ball,
    Ellipsoid,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct ThickParams<S> {
    pub lambda_lo: S,
    pub lambda_hi: S,
    pub kappa: S,
    #[serde(default = "default_shapes")]
    pub shapes: Vec<ShapeKind>,
    /// Center grid pitch as a fraction of λ.
    #[serde(default = "default_pitch")]
    pub center_pitch: S,
}

fn default_shapes() -> Vec<ShapeKind> {
    vec![ShapeKind::Ball, ShapeKind::Ellipsoid, ShapeKind::Rectangle]
}

fn default_pitch<S: Scalar>() -> S {
    S::lit(0.5)
}

impl<S: Scalar> ThickParams<S> {
    pub fn balls(lambda: S) -> Self {
        ThickParams {
            lambda_lo: lambda,
            lambda_hi: lambda,
            kappa: S::one(),
            shapes: vec![ShapeKind::Ball],
            center_pitch: default_pitch(),
        }
    }

    /// Dyadic radii `λ_lo, 2λ_lo, …` not exceeding `λ_hi`.
    pub fn radii(&self) -> Vec<S> {
        let mut out = Vec::new();
        let mut lam = self.lambda_lo;
        let slack = S::one() + S::lit(1e-9);
        while lam <= self.lambda_hi * slack {
            out.push(lam);
            lam = lam + lam;
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa >= S::one()) {
            return Err(ScanError::param("kappa", "must be at least 1"));
        }
        if !(self.lambda_lo > S::zero() && self.lambda_lo <= self.lambda_hi) {
            return Err(ScanError::param("lambda_lo", "need 0 < lambda_lo <= lambda_hi"));
        }
        if !(self.center_pitch > S::zero()) {
            return Err(ScanError::param("center_pitch", "must be positive"));
        }
        if self.shapes.is_empty() {
            return Err(ScanError::param("shapes", "dictionary is empty"));
        }
        Ok(())
    }
}

/// A concrete thick domain: a ball, axis-aligned ellipsoid or box, measured in
/// the node set's norm, with `B(c, λ/κ) ⊂ A ⊂ B(c, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThickShape<S> {
    pub kind: ShapeKind,
    pub center: Vec<S>,
    pub half_axes: Vec<S>,
}

impl<S: Scalar> ThickShape<S> {
    pub fn new(kind: ShapeKind, center: Vec<S>, half_axes: Vec<S>, kappa: S) -> Result<Self> {
        if center.len() != half_axes.len() || half_axes.is_empty() {
            return Err(ScanError::domain("center and half-axes dimension mismatch"));
        }
        let lo = half_axes.iter().copied().fold(S::infinity(), S::min);
        let hi = half_axes.iter().copied().fold(S::zero(), S::max);
        if !(lo > S::zero()) {
            return Err(ScanError::param("half_axes", "must be positive"));
        }
        if hi > kappa * lo * (S::one() + S::lit(1e-9)) {
            return Err(ScanError::param(
                "half_axes",
                format!("aspect {} exceeds kappa {}", hi / lo, kappa),
            ));
        }
        if kind == ShapeKind::Ball && hi > lo {
            return Err(ScanError::param("half_axes", "a ball has equal half-axes"));
        }
        Ok(ThickShape {
            kind,
            center,
            half_axes,
        })
    }

    /// Radius of the enclosing ball centered at `center`.
    pub fn outer_radius(&self, mode: Mode) -> S {
        match self.kind {
            ShapeKind::Ball | ShapeKind::Ellipsoid => self.half_axes.iter().copied().fold(S::zero(), S::max),
            ShapeKind::Rectangle => match mode {
                Mode::LatticeL1 => self.half_axes.iter().copied().sum(),
                Mode::EuclideanL2 => self.half_axes.iter().map(|&a| a * a).sum::<S>().sqrt(),
            },
        }
    }

    /// Radius of the inscribed ball centered at `center`.
    pub fn inner_radius(&self) -> S {
        self.half_axes.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn contains(&self, mode: Mode, p: &[S]) -> bool {
        let scaled = p
            .iter()
            .zip(&self.center)
            .zip(&self.half_axes)
            .map(|((&x, &c), &a)| (x - c).abs() / a);
        match (self.kind, mode) {
            (ShapeKind::Rectangle, _) => scaled.fold(S::zero(), S::max) < S::one(),
            (_, Mode::LatticeL1) => scaled.sum::<S>() < S::one(),
            (_, Mode::EuclideanL2) => scaled.map(|s| s * s).sum::<S>() < S::one(),
        }
    }

    pub fn cluster(&self, net: &NodeSet<S>) -> Result<Cluster> {
        let outer = net.ball_nodes(&self.center, self.outer_radius(net.mode()))?;
        let ids = outer
            .ids()
            .iter()
            .copied()
            .filter(|&v| self.contains(net.mode(), net.coord(v)))
            .collect();
        Ok(Cluster::from_sorted(ids))
    }
}

/// Half-axis vectors of the dictionary at scale λ.
fn dictionary<S: Scalar>(d: usize, lambda: S, kappa: S, mode: Mode, kinds: &[ShapeKind]) -> Vec<(ShapeKind, Vec<S>)> {
    let mut out = Vec::new();
    let patterns = 1usize << d;
    for &kind in kinds {
        match kind {
            ShapeKind::Ball => out.push((kind, vec![lambda; d])),
            ShapeKind::Ellipsoid => {
                if kappa > S::one() {
                    for mask in 1..patterns - 1 {
                        let axes = (0..d)
                            .map(|j| if mask >> j & 1 == 1 { lambda / kappa } else { lambda })
                            .collect();
                        out.push((kind, axes));
                    }
                }
            }
            ShapeKind::Rectangle => {
                for mask in 0..patterns - 1 {
                    let w: Vec<S> = (0..d)
                        .map(|j| if mask >> j & 1 == 1 { S::one() / kappa } else { S::one() })
                        .collect();
                    let norm = match mode {
                        Mode::LatticeL1 => w.iter().copied().sum::<S>(),
                        Mode::EuclideanL2 => w.iter().map(|&x| x * x).sum::<S>().sqrt(),
                    };
                    let axes: Vec<S> = w.iter().map(|&x| lambda * x / norm).collect();
                    if axes.iter().all(|&a| a >= lambda / kappa * (S::one() - S::lit(1e-9))) {
                        out.push((kind, axes));
                    }
                }
            }
        }
    }
    out
}

/// Regular grid of centers with the given pitch, centred in `[0, extent]^d`.
pub fn center_grid<S: Scalar>(d: usize, extent: S, pitch: S) -> Vec<Vec<S>> {
    let n = (extent / pitch).floor().to_usize().unwrap_or(0) + 1;
    let offset = (extent - pitch * S::from_count(n - 1)) / S::lit(2.0);
    let mut out = Vec::new();
    for_each_box_point(&vec![0; d], &vec![n - 1; d], |p| {
        out.push(p.iter().map(|&k| offset + pitch * S::from_count(k)).collect());
    });
    out
}

/// All dictionary shapes at all dyadic radii and grid centers.
pub fn thick_shapes<S: Scalar>(net: &NodeSet<S>, params: &ThickParams<S>) -> Result<Vec<(S, ThickShape<S>)>> {
    params.validate()?;
    let d = net.dim();
    let mut out = Vec::new();
    for lambda in params.radii() {
        let dict = dictionary(d, lambda, params.kappa, net.mode(), &params.shapes);
        for center in center_grid(d, net.extent(), lambda * params.center_pitch) {
            for (kind, axes) in &dict {
                out.push((
                    lambda,
                    ThickShape::new(*kind, center.clone(), axes.clone(), params.kappa)?,
                ));
            }
        }
    }
    Ok(out)
}

pub fn enumerate_thick<'a, S: Scalar>(
    net: &'a NodeSet<S>,
    params: &ThickParams<S>,
) -> Result<impl Iterator<Item = Cluster> + 'a> {
    let shapes = thick_shapes(net, params)?;
    Ok(unique(
        shapes
            .into_iter()
            .map(move |(_, s)| s.cluster(net).expect("grid centers lie in the domain")),
        net.len(),
    ))
}

// ---------------------------------------------------------------------------
// Thin clusters

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct ThinParams<S> {
    /// Hölder exponent in (0, 1] applied between control points.
    pub alpha: S,
    /// Hölder constant; zero forces constant curves.
    pub kappa: S,
    /// Tube radius, native units.
    pub radius: S,
    /// Number of polyline segments.
    pub segments: usize,
    /// Spacing of the control-value grid, native units.
    pub level_step: S,
    #[serde(default = "default_max_curves")]
    pub max_curves: usize,
    /// Smallest admissible `λ/r`, with `λ` half the curve's span. Stands in for an
    /// unpublished constant, so it is a knob rather than a derived value.
    #[serde(default = "default_lambda_over_r")]
    pub lambda_over_r_min: S,
}

fn default_max_curves() -> usize {
    200_000
}

fn default_lambda_over_r<S: Scalar>() -> S {
    S::lit(4.0)
}

/// Checks `|v_a − v_b| ≤ κ |x_a − x_b|^α` for all pairs; returns the first offending pair.
pub fn check_holder<S: Scalar>(xs: &[S], values: &[S], alpha: S, kappa: S) -> std::result::Result<(), (usize, usize)> {
    let tol = S::lit(1e-9) * (S::one() + kappa);
    for a in 0..values.len() {
        for b in a + 1..values.len() {
            if (values[a] - values[b]).abs() > kappa * (xs[a] - xs[b]).abs().powf(alpha) + tol {
                return Err((a, b));
            }
        }
    }
    Ok(())
}

/// Piecewise-linear curve through `points` (each a d-vector).
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline<S> {
    pub points: Vec<Vec<S>>,
}

fn point_segment_distance<S: Scalar>(p: &[S], a: &[S], b: &[S]) -> S {
    let mut ab2 = S::zero();
    let mut dot = S::zero();
    for i in 0..p.len() {
        let ab = b[i] - a[i];
        ab2 = ab2 + ab * ab;
        dot = dot + (p[i] - a[i]) * ab;
    }
    let t = if ab2 > S::zero() {
        (dot / ab2).max(S::zero()).min(S::one())
    } else {
        S::zero()
    };
    p.iter()
        .enumerate()
        .map(|(i, &x)| {
            let q = a[i] + t * (b[i] - a[i]);
            (x - q) * (x - q)
        })
        .sum::<S>()
        .sqrt()
}

impl<S: Scalar> Polyline<S> {
    /// Euclidean distance from `p` to the curve.
    pub fn distance(&self, p: &[S]) -> S {
        if self.points.len() == 1 {
            return point_segment_distance(p, &self.points[0], &self.points[0]);
        }
        self.points
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]))
            .fold(S::infinity(), S::min)
    }

    pub fn length(&self) -> S {
        self.points
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<S>()
                    .sqrt()
            })
            .sum()
    }

    /// Nodes at Euclidean distance `< r` from the curve.
    pub fn tube(&self, net: &NodeSet<S>, r: S) -> Result<Cluster> {
        let d = net.dim();
        // ℓ1 balls need a √d larger radius to cover the Euclidean one.
        let inflate = match net.mode() {
            Mode::LatticeL1 => S::from_count(d).sqrt(),
            Mode::EuclideanL2 => S::one(),
        };
        let mut ids = Vec::new();
        let segs: Vec<(&Vec<S>, &Vec<S>)> = if self.points.len() == 1 {
            vec![(&self.points[0], &self.points[0])]
        } else {
            self.points.windows(2).map(|w| (&w[0], &w[1])).collect()
        };
        for (a, b) in segs {
            let mid: Vec<S> = a.iter().zip(b).map(|(&x, &y)| (x + y) / S::lit(2.0)).collect();
            let half = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<S>().sqrt() / S::lit(2.0);
            let candidates = net.ball_nodes(&mid, (half + r) * inflate + S::lit(1e-9))?;
            ids.extend(
                candidates
                    .ids()
                    .iter()
                    .copied()
                    .filter(|&v| point_segment_distance(net.coord(v), a, b) < r),
            );
        }
        Ok(Cluster::from_ids(ids))
    }
}

/// Every Hölder-admissible sequence of control values on the level grid.
pub(crate) fn holder_sequences<S: Scalar>(
    xs: &[S],
    levels: &[S],
    alpha: S,
    kappa: S,
    cap: usize,
) -> Result<Vec<Vec<S>>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(xs.len());
    fn rec<S: Scalar>(
        xs: &[S],
        levels: &[S],
        alpha: S,
        kappa: S,
        cap: usize,
        cur: &mut Vec<S>,
        out: &mut Vec<Vec<S>>,
    ) -> Result<()> {
        if cur.len() == xs.len() {
            if out.len() >= cap {
                return Err(ScanError::Capacity(format!(
                    "more than {cap} curves; coarsen the control grid"
                )));
            }
            out.push(cur.clone());
            return Ok(());
        }
        let i = cur.len();
        let tol = S::lit(1e-9) * (S::one() + kappa);
        for &v in levels {
            let ok = (0..i).all(|j| (v - cur[j]).abs() <= kappa * (xs[i] - xs[j]).abs().powf(alpha) + tol);
            if ok {
                cur.push(v);
                rec(xs, levels, alpha, kappa, cap, cur, out)?;
                cur.pop();
            }
        }
        Ok(())
    }
    rec(xs, levels, alpha, kappa, cap, &mut cur, &mut out)?;
    Ok(out)
}

/// Curves `x ↦ (x, g_1(x), …, g_{d−1}(x))` with Hölder control values.
pub fn tube_curves<S: Scalar>(net: &NodeSet<S>, p: &ThinParams<S>) -> Result<Vec<Polyline<S>>> {
    let d = net.dim();
    if d < 2 {
        return Err(ScanError::param("d", "tubes need d >= 2"));
    }
    if !(p.alpha > S::zero() && p.alpha <= S::one()) {
        return Err(ScanError::param("alpha", "must lie in (0, 1]"));
    }
    if !(p.kappa >= S::zero()) {
        return Err(ScanError::param("kappa", "must be nonnegative"));
    }
    if !(p.radius > S::zero()) {
        return Err(ScanError::param("radius", "must be positive"));
    }
    if p.segments == 0 {
        return Err(ScanError::param("segments", "must be positive"));
    }
    if !(p.level_step > S::zero() && p.level_step <= p.radius / S::lit(2.0)) {
        return Err(ScanError::param(
            "level_step",
            "grid resolution must lie in (0, radius/2]",
        ));
    }
    let extent = net.extent();
    if !(p.lambda_over_r_min > S::zero()) {
        return Err(ScanError::param("lambda_over_r_min", "must be positive"));
    }
    if p.radius * p.lambda_over_r_min > extent / S::lit(2.0) {
        return Err(ScanError::param(
            "radius",
            format!(
                "tube radius exceeds λ/{} with λ = {}",
                p.lambda_over_r_min,
                extent / S::lit(2.0)
            ),
        ));
    }
    let xs: Vec<S> = (0..=p.segments)
        .map(|i| extent * S::from_count(i) / S::from_count(p.segments))
        .collect();
    let nlev = (extent / p.level_step + S::lit(1e-9)).floor().to_usize().unwrap() + 1;
    let levels: Vec<S> = (0..nlev).map(|k| p.level_step * S::from_count(k)).collect();
    let seqs = holder_sequences(&xs, &levels, p.alpha, p.kappa, p.max_curves)?;
    let total = seqs.len().checked_pow((d - 1) as u32).filter(|&n| n <= p.max_curves);
    if total.is_none() {
        return Err(ScanError::Capacity(format!(
            "{}^{} curves exceed max_curves {}",
            seqs.len(),
            d - 1,
            p.max_curves
        )));
    }
    let mut out = Vec::new();
    for_each_box_point(&vec![0; d - 1], &vec![seqs.len() - 1; d - 1], |choice| {
        let points = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let mut pt = Vec::with_capacity(d);
                pt.push(x);
                pt.extend(choice.iter().map(|&c| seqs[c][i]));
                pt
            })
            .collect();
        out.push(Polyline { points });
    });
    Ok(out)
}

pub fn enumerate_tubes<'a, S: Scalar>(
    net: &'a NodeSet<S>,
    p: &ThinParams<S>,
) -> Result<impl Iterator<Item = Cluster> + 'a> {
    let curves = tube_curves(net, p)?;
    let r = p.radius;
    Ok(unique(
        curves
            .into_iter()
            .map(move |c| c.tube(net, r).expect("curves lie in the domain")),
        net.len(),
    ))
}

// ---------------------------------------------------------------------------
// Bands

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMode {
    /// Starts at the origin; every step increments exactly one coordinate.
    Nondecreasing,
    /// Starts anywhere; never revisits a node.
    SelfAvoiding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct BandParams<S> {
    pub length: usize,
    pub width: S,
    pub mode: PathMode,
}

/// Lattice path `(v_0, …, v_ℓ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticePath {
    pub nodes: Vec<NodeId>,
}

/// Integer offsets with ℓ1 norm strictly below `h`.
fn l1_offsets<S: Scalar>(d: usize, h: S) -> Vec<Vec<i64>> {
    let reach = (h.ceil().to_i64().unwrap() - 1).max(0);
    let mut out = Vec::new();
    for_each_box_point(&vec![0; d], &vec![2 * reach as usize; d], |p| {
        let o: Vec<i64> = p.iter().map(|&x| x as i64 - reach).collect();
        if S::lit(o.iter().map(|x| x.abs()).sum::<i64>() as f64) < h {
            out.push(o);
        }
    });
    out
}

impl LatticePath {
    /// `B(V, h) ∩ V_m` in the ℓ1 metric.
    pub fn band<S: Scalar>(&self, net: &NodeSet<S>, h: S) -> Cluster {
        let side = net.side().expect("lattice") as i64;
        let offsets = l1_offsets(net.dim(), h);
        let mut ids = Vec::with_capacity(self.nodes.len() * offsets.len());
        for &v in &self.nodes {
            let c = net.lattice_coords(v).unwrap();
            'o: for o in &offsets {
                let mut id = 0i64;
                for (x, dx) in c.iter().zip(o) {
                    let y = *x as i64 + dx;
                    if y < 0 || y >= side {
                        continue 'o;
                    }
                    id = id * side + y;
                }
                ids.push(id as NodeId);
            }
        }
        Cluster::from_ids(ids)
    }

    pub fn is_nondecreasing<S: Scalar>(&self, net: &NodeSet<S>) -> bool {
        self.nodes.windows(2).all(|w| {
            let a = net.lattice_coords(w[0]).unwrap();
            let b = net.lattice_coords(w[1]).unwrap();
            let diffs: Vec<i64> = a.iter().zip(&b).map(|(&x, &y)| y as i64 - x as i64).collect();
            diffs.iter().filter(|&&x| x == 1).count() == 1 && diffs.iter().all(|&x| x == 0 || x == 1)
        })
    }

    pub fn is_self_avoiding(&self) -> bool {
        let set: HashSet<_> = self.nodes.iter().collect();
        set.len() == self.nodes.len()
    }
}

/// Path from the origin following `steps` (axis per step); `None` if it leaves the lattice.
fn nondecreasing_path<S: Scalar>(net: &NodeSet<S>, steps: &[usize]) -> Option<LatticePath> {
    let side = net.side()?;
    let mut c = vec![0usize; net.dim()];
    let mut nodes = vec![net.lattice_id(&c)?];
    for &axis in steps {
        c[axis] += 1;
        if c[axis] >= side {
            return None;
        }
        nodes.push(net.lattice_id(&c)?);
    }
    Some(LatticePath { nodes })
}

/// Exhaustive regime: d = 2 nondecreasing paths of length ≤ 20.
pub const EXHAUSTIVE_BAND_LENGTH: usize = 20;

/// Paths behind the band class: exhaustive where small, else `budget` distinct samples.
pub fn band_paths<S: Scalar>(
    net: &NodeSet<S>,
    p: &BandParams<S>,
    budget: usize,
    seed: u64,
) -> Result<(Vec<LatticePath>, bool)> {
    let side = net
        .side()
        .ok_or_else(|| ScanError::param("mode", "bands need a lattice node set"))?;
    if !(p.width >= S::one()) || S::from_count(p.length) < p.width || p.length > side {
        return Err(ScanError::param("length", "need side >= length >= width >= 1"));
    }
    let d = net.dim();
    if p.mode == PathMode::Nondecreasing && d == 2 && p.length <= EXHAUSTIVE_BAND_LENGTH {
        let mut paths = Vec::new();
        let mut steps = vec![0usize; p.length];
        for code in 0..(1u32 << p.length) {
            for (i, s) in steps.iter_mut().enumerate() {
                *s = (code >> (p.length - 1 - i) & 1) as usize;
            }
            if let Some(path) = nondecreasing_path(net, &steps) {
                paths.push(path);
            }
        }
        return Ok((paths, true));
    }
    if budget == 0 {
        return Err(ScanError::param("budget", "must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let mut seen = HashSet::new();
    let mut paths = Vec::new();
    let max_attempts = budget.saturating_mul(50).max(1000);
    let mut attempts = 0;
    while paths.len() < budget && attempts < max_attempts {
        attempts += 1;
        let path = match p.mode {
            PathMode::Nondecreasing => {
                let steps: Vec<usize> = (0..p.length).map(|_| rng.random_range(0..d)).collect();
                nondecreasing_path(net, &steps)
            }
            PathMode::SelfAvoiding => self_avoiding_walk(net, p.length, &mut rng),
        };
        if let Some(path) = path {
            if seen.insert(path.clone()) {
                paths.push(path);
            }
        }
    }
    Ok((paths, false))
}

fn self_avoiding_walk<S: Scalar, R: Rng>(net: &NodeSet<S>, length: usize, rng: &mut R) -> Option<LatticePath> {
    let mut nodes = vec![rng.random_range(0..net.len()) as NodeId];
    let mut visited: HashSet<NodeId> = nodes.iter().copied().collect();
    while nodes.len() <= length {
        let last = *nodes.last().unwrap();
        let options: Vec<NodeId> = net
            .neighbors(last)
            .into_iter()
            .filter(|v| !visited.contains(v))
            .collect();
        if options.is_empty() {
            return None;
        }
        let next = options[rng.random_range(0..options.len())];
        visited.insert(next);
        nodes.push(next);
    }
    Some(LatticePath { nodes })
}

pub fn enumerate_bands<'a, S: Scalar>(
    net: &'a NodeSet<S>,
    p: &BandParams<S>,
    budget: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Cluster> + 'a> {
    let (paths, _) = band_paths(net, p, budget, seed)?;
    let h = p.width;
    Ok(unique(paths.into_iter().map(move |path| path.band(net, h)), net.len()))
}

// ---------------------------------------------------------------------------
// Animals

/// Enumeration guard on animal size.
pub const MAX_ANIMAL_SIZE: usize = 12;

/// Calls `f` on every connected node set of size `1..=k_max`, each exactly once
/// (Redelmeier's algorithm rooted at the smallest id), ids sorted.
pub fn for_each_animal<S: Scalar>(net: &NodeSet<S>, k_max: usize, mut f: impl FnMut(&Cluster)) -> Result<()> {
    if net.mode() != Mode::LatticeL1 {
        return Err(ScanError::param("mode", "animals need a lattice node set"));
    }
    if k_max == 0 {
        return Err(ScanError::param("kmax", "must be positive"));
    }
    if k_max > MAX_ANIMAL_SIZE {
        return Err(ScanError::Capacity(format!(
            "kmax {k_max} exceeds the exhaustive guard {MAX_ANIMAL_SIZE}; use a sampled class"
        )));
    }
    let m = net.len();
    let mut seen = vec![false; m];
    let mut current = Vec::with_capacity(k_max);
    for root in 0..m as NodeId {
        seen[root as usize] = true;
        let mut untried = vec![root];
        grow(net, root, k_max, &mut untried, &mut current, &mut seen, &mut f);
        seen[root as usize] = false;
    }
    Ok(())
}

fn grow<S: Scalar>(
    net: &NodeSet<S>,
    root: NodeId,
    k_max: usize,
    untried: &mut Vec<NodeId>,
    current: &mut Vec<NodeId>,
    seen: &mut [bool],
    f: &mut impl FnMut(&Cluster),
) {
    while let Some(v) = untried.pop() {
        current.push(v);
        f(&Cluster::from_ids(current.clone()));
        if current.len() < k_max {
            let mut added = Vec::new();
            for u in net.neighbors(v) {
                if u > root && !seen[u as usize] {
                    seen[u as usize] = true;
                    added.push(u);
                }
            }
            let mut next = untried.clone();
            next.extend_from_slice(&added);
            grow(net, root, k_max, &mut next, current, seen, f);
            for u in added {
                seen[u as usize] = false;
            }
        }
        current.pop();
    }
}

pub fn enumerate_animals<S: Scalar>(net: &NodeSet<S>, k_max: usize) -> Result<Vec<Cluster>> {
    let mut out = Vec::new();
    for_each_animal(net, k_max, |c| out.push(c.clone()))?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Class descriptor

/// A cluster family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassSpec<S> {
    Balls {
        radius: S,
    },
    Thick(ThickParams<S>),
    Tubes(ThinParams<S>),
    Bands {
        length: usize,
        width: S,
        mode: PathMode,
        #[serde(default = "default_budget")]
        budget: usize,
        #[serde(default)]
        seed: u64,
    },
    Animals {
        kmax: usize,
    },
}

fn default_budget() -> usize {
    2000
}

impl<S: Scalar> ClassSpec<S> {
    pub fn family(&self) -> &'static str {
        match self {
            ClassSpec::Balls { .. } => "balls",
            ClassSpec::Thick(_) => "thick",
            ClassSpec::Tubes(_) => "tubes",
            ClassSpec::Bands { .. } => "bands",
            ClassSpec::Animals { .. } => "animals",
        }
    }

    /// All clusters of the class over `net`, in canonical order.
    pub fn clusters(&self, net: &NodeSet<S>) -> Result<Vec<Cluster>> {
        Ok(match self {
            ClassSpec::Balls { radius } => enumerate_balls(net, *radius)?.collect(),
            ClassSpec::Thick(p) => enumerate_thick(net, p)?.collect(),
            ClassSpec::Tubes(p) => enumerate_tubes(net, p)?.collect(),
            ClassSpec::Bands {
                length,
                width,
                mode,
                budget,
                seed,
            } => enumerate_bands(
                net,
                &BandParams {
                    length: *length,
                    width: *width,
                    mode: *mode,
                },
                *budget,
                *seed,
            )?
            .collect(),
            ClassSpec::Animals { kmax } => unique(enumerate_animals(net, *kmax)?, net.len()).collect(),
        })
    }

    pub fn metadata(&self) -> Metadata {
        let mut meta = Metadata::new().with("family", self.family());
        match self {
            ClassSpec::Balls { radius } => meta.insert("radius", radius),
            ClassSpec::Thick(p) => {
                meta.insert("lambda_lo", p.lambda_lo);
                meta.insert("lambda_hi", p.lambda_hi);
                meta.insert("kappa", p.kappa);
                meta.insert("center_pitch", p.center_pitch);
            }
            ClassSpec::Tubes(p) => {
                meta.insert("alpha", p.alpha);
                meta.insert("kappa", p.kappa);
                meta.insert("radius", p.radius);
                meta.insert("segments", p.segments);
                meta.insert("level_step", p.level_step);
            }
            ClassSpec::Bands {
                length,
                width,
                mode,
                budget,
                seed,
            } => {
                meta.insert("length", length);
                meta.insert("width", width);
                meta.insert("mode", format!("{mode:?}").to_lowercase());
                meta.insert("budget", budget);
                meta.insert("seed", seed);
                let exhaustive = *mode == PathMode::Nondecreasing && *length <= EXHAUSTIVE_BAND_LENGTH;
                meta.insert(
                    "sampling",
                    if exhaustive {
                        "exhaustive-if-2d"
                    } else {
                        "uniform-over-step-sequences"
                    },
                );
            }
            ClassSpec::Animals { kmax } => meta.insert("kmax", kmax),
        }
        meta
    }
}
