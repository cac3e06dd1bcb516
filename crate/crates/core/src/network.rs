//! Node sets: the square lattice with the shortest-path (ℓ1) metric, and
//! point clouds in the unit cube with the Euclidean metric.

use crate::cluster::{Cluster, NodeId};
use crate::error::{Result, ScanError};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "lattice-l1")]
    LatticeL1,
    #[serde(rename = "euclidean-l2")]
    EuclideanL2,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::LatticeL1 => "lattice-l1",
            Mode::EuclideanL2 => "euclidean-l2",
        }
    }
}

/// Bucket grid over the unit cube for Euclidean ball queries.
#[derive(Debug, Clone)]
struct BucketIndex {
    cells_per_axis: usize,
    starts: Vec<usize>,
    members: Vec<NodeId>,
}

/// The node set `V_m`. Immutable once built; ids are `0..m`.
#[derive(Debug, Clone)]
pub struct NodeSet<S> {
    dim: usize,
    mode: Mode,
    side: Option<usize>,
    coords: Vec<S>,
    index: Option<BucketIndex>,
}

const MAX_NODES: usize = u32::MAX as usize;

/// Regular lattice `{0,…,side−1}^d`, ids in row-major order.
pub fn make_lattice<S: Scalar>(d: usize, side: usize) -> Result<NodeSet<S>> {
    if d == 0 {
        return Err(ScanError::param("d", "must be at least 1"));
    }
    if side < 2 {
        return Err(ScanError::param("side", "must be at least 2"));
    }
    let m = checked_pow(side, d)?;
    let mut coords = Vec::with_capacity(m * d);
    for id in 0..m {
        let mut rem = id;
        let start = coords.len();
        coords.resize(start + d, S::zero());
        for axis in (0..d).rev() {
            coords[start + axis] = S::from_count(rem % side);
            rem /= side;
        }
    }
    Ok(NodeSet {
        dim: d,
        mode: Mode::LatticeL1,
        side: Some(side),
        coords,
        index: None,
    })
}

/// `m` i.i.d. uniform points in `[0,1]^d`.
pub fn make_uniform_cloud<S: Scalar>(d: usize, m: usize, seed: u64) -> Result<NodeSet<S>> {
    if d == 0 {
        return Err(ScanError::param("d", "must be at least 1"));
    }
    if m == 0 {
        return Err(ScanError::param("m", "must be at least 1"));
    }
    if m > MAX_NODES {
        return Err(ScanError::Capacity(format!("{m} nodes exceed the u32 id space")));
    }
    let mut rng = rng_from_seed(seed);
    let coords = (0..m * d).map(|_| S::lit(rng.random::<f64>())).collect();
    NodeSet::euclidean(d, coords)
}

/// The regular lattice rescaled into `[0,1]^d` (cell centers `(i + 1/2)/side`),
/// carrying the Euclidean metric.
pub fn make_grid_cloud<S: Scalar>(d: usize, side: usize) -> Result<NodeSet<S>> {
    let lattice: NodeSet<f64> = make_lattice(d, side)?;
    let coords = lattice
        .coords
        .iter()
        .map(|&c| S::lit((c + 0.5) / side as f64))
        .collect();
    NodeSet::euclidean(d, coords)
}

fn checked_pow(side: usize, d: usize) -> Result<usize> {
    let mut m: usize = 1;
    for _ in 0..d {
        m = m
            .checked_mul(side)
            .filter(|&m| m <= MAX_NODES)
            .ok_or_else(|| ScanError::Capacity(format!("{side}^{d} nodes exceed the u32 id space")))?;
    }
    Ok(m)
}

impl<S: Scalar> NodeSet<S> {
    /// Euclidean node set from a flat `m × d` coordinate array in `[0,1]^d`.
    pub fn euclidean(d: usize, coords: Vec<S>) -> Result<Self> {
        if d == 0 || coords.is_empty() || !coords.len().is_multiple_of(d) {
            return Err(ScanError::domain("coordinate array must be a nonempty multiple of d"));
        }
        if let Some(bad) = coords.iter().position(|&c| !(c >= S::zero() && c <= S::one())) {
            return Err(ScanError::domain(format!(
                "coordinate of node {} outside [0,1]",
                bad / d
            )));
        }
        if coords.len() / d > MAX_NODES {
            return Err(ScanError::Capacity("too many nodes".into()));
        }
        let mut net = NodeSet {
            dim: d,
            mode: Mode::EuclideanL2,
            side: None,
            coords,
            index: None,
        };
        net.index = Some(net.build_index());
        Ok(net)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Lattice side length; `None` for Euclidean node sets.
    pub fn side(&self) -> Option<usize> {
        self.side
    }

    pub fn coord(&self, id: NodeId) -> &[S] {
        let i = id as usize * self.dim;
        &self.coords[i..i + self.dim]
    }

    /// Upper corner of the domain box: `side − 1` per axis on the lattice, `1` otherwise.
    pub fn extent(&self) -> S {
        match self.side {
            Some(side) => S::from_count(side - 1),
            None => S::one(),
        }
    }

    /// Length of the unit cube in native coordinates (`side` on the lattice).
    pub fn unit_scale(&self) -> S {
        match self.side {
            Some(side) => S::from_count(side),
            None => S::one(),
        }
    }

    pub fn distance(&self, a: &[S], b: &[S]) -> S {
        match self.mode {
            Mode::LatticeL1 => a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum(),
            Mode::EuclideanL2 => a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<S>().sqrt(),
        }
    }

    pub fn lattice_id(&self, coords: &[usize]) -> Option<NodeId> {
        let side = self.side?;
        if coords.len() != self.dim || coords.iter().any(|&c| c >= side) {
            return None;
        }
        Some(coords.iter().fold(0usize, |acc, &c| acc * side + c) as NodeId)
    }

    pub fn lattice_coords(&self, id: NodeId) -> Option<Vec<usize>> {
        let side = self.side?;
        let mut rem = id as usize;
        let mut out = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = rem % side;
            rem /= side;
        }
        Some(out)
    }

    /// Lattice neighbors at ℓ1 distance one, in increasing id order.
    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        let Some(side) = self.side else {
            return Vec::new();
        };
        let c = self.lattice_coords(id).expect("lattice");
        let mut out = Vec::with_capacity(2 * self.dim);
        let mut stride = 1usize;
        for axis in (0..self.dim).rev() {
            if c[axis] > 0 {
                out.push(id - stride as NodeId);
            }
            if c[axis] + 1 < side {
                out.push(id + stride as NodeId);
            }
            stride *= side;
        }
        out.sort_unstable();
        out
    }

    fn check_center(&self, center: &[S]) -> Result<()> {
        if center.len() != self.dim {
            return Err(ScanError::domain(format!(
                "center has {} coordinates, expected {}",
                center.len(),
                self.dim
            )));
        }
        let hi = self.extent();
        if center.iter().any(|&c| !(c >= S::zero() && c <= hi)) {
            return Err(ScanError::domain("center outside the domain"));
        }
        Ok(())
    }

    /// Nodes strictly within distance `r` of `center` (open ball).
    pub fn ball_nodes(&self, center: &[S], r: S) -> Result<Cluster> {
        self.ball_query(center, r, false)
    }

    /// Nodes within distance `r` of `center`, boundary included.
    pub fn closed_ball_nodes(&self, center: &[S], r: S) -> Result<Cluster> {
        self.ball_query(center, r, true)
    }

    fn ball_query(&self, center: &[S], r: S, closed: bool) -> Result<Cluster> {
        self.check_center(center)?;
        if !(r > S::zero()) && !(closed && r == S::zero()) {
            return Err(ScanError::param("r", "radius must be positive"));
        }
        let inside = |id: NodeId| {
            let dist = self.distance(self.coord(id), center);
            if closed {
                dist <= r
            } else {
                dist < r
            }
        };
        let mut ids = Vec::new();
        match (&self.index, self.side) {
            (_, Some(side)) => {
                // Integer box [ceil(c − r), floor(c + r)] clipped to the lattice.
                let mut lo = Vec::with_capacity(self.dim);
                let mut hi = Vec::with_capacity(self.dim);
                for &c in center {
                    let l = (c - r).ceil().max(S::zero());
                    let h = (c + r).floor().min(S::from_count(side - 1));
                    if l > h {
                        return Ok(Cluster::empty());
                    }
                    lo.push(l.to_usize().unwrap());
                    hi.push(h.to_usize().unwrap());
                }
                for_each_box_point(&lo, &hi, |p| {
                    let id = self.lattice_id(p).unwrap();
                    if inside(id) {
                        ids.push(id);
                    }
                });
                ids.sort_unstable();
            }
            (Some(index), None) => {
                let g = index.cells_per_axis;
                let cell = S::one() / S::from_count(g);
                let mut lo = Vec::with_capacity(self.dim);
                let mut hi = Vec::with_capacity(self.dim);
                for &c in center {
                    let l = ((c - r) / cell).floor().max(S::zero()).to_usize().unwrap().min(g - 1);
                    let h = ((c + r) / cell).floor().max(S::zero()).to_usize().unwrap().min(g - 1);
                    lo.push(l);
                    hi.push(h);
                }
                for_each_box_point(&lo, &hi, |p| {
                    let flat = p.iter().fold(0usize, |acc, &x| acc * g + x);
                    for &id in &index.members[index.starts[flat]..index.starts[flat + 1]] {
                        if inside(id) {
                            ids.push(id);
                        }
                    }
                });
                ids.sort_unstable();
            }
            (None, None) => unreachable!("euclidean node sets always carry an index"),
        }
        Ok(Cluster::from_sorted(ids))
    }

    fn build_index(&self) -> BucketIndex {
        let m = self.len();
        let mut g = (m as f64).powf(1.0 / self.dim as f64).floor().max(1.0) as usize;
        while g > 1 && g.checked_pow(self.dim as u32).is_none_or(|c| c > m.max(1)) {
            g -= 1;
        }
        let ncell = g.pow(self.dim as u32);
        let cell_of = |id: usize| {
            self.coords[id * self.dim..(id + 1) * self.dim]
                .iter()
                .fold(0usize, |acc, &c| {
                    let k = (c.as_f64() * g as f64).floor() as usize;
                    acc * g + k.min(g - 1)
                })
        };
        let mut counts = vec![0usize; ncell + 1];
        let cells: Vec<usize> = (0..m).map(cell_of).collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut members = vec![0 as NodeId; m];
        for (id, &c) in cells.iter().enumerate() {
            members[fill[c]] = id as NodeId;
            fill[c] += 1;
        }
        BucketIndex {
            cells_per_axis: g,
            starts: counts,
            members,
        }
    }
}

pub(crate) fn for_each_box_point(lo: &[usize], hi: &[usize], mut f: impl FnMut(&[usize])) {
    let d = lo.len();
    let mut p = lo.to_vec();
    loop {
        f(&p);
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if p[axis] < hi[axis] {
                p[axis] += 1;
                break;
            }
            p[axis] = lo[axis];
        }
    }
}

/// One probe of the evenly-spread condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadProbe {
    pub node: NodeId,
    /// Radius in unit-cube units.
    pub radius: f64,
    pub count: usize,
    /// `m r^d`.
    pub volume_count: f64,
}

/// Outcome of probing `C⁻¹ m r^d ≤ |B(x,r) ∩ V| ≤ C m r^d` on random `(x, r)`.
#[derive(Debug, Clone)]
pub struct SpreadCertificate {
    pub constant: f64,
    pub r_star: f64,
    pub seed: u64,
    pub probes: Vec<SpreadProbe>,
    /// Index into `probes` of the first violation.
    pub first_violation: Option<usize>,
    pub pass: bool,
}

/// Probes the evenly-spread condition at `probes` random node centers with
/// radii log-uniform in `[r_star, 1]` (unit-cube units).
pub fn check_spread<S: Scalar>(
    net: &NodeSet<S>,
    constant: f64,
    r_star: f64,
    probes: usize,
    seed: u64,
) -> Result<SpreadCertificate> {
    if !(constant >= 1.0) {
        return Err(ScanError::param("C", "must be at least 1"));
    }
    if !(r_star > 0.0 && r_star <= 1.0) {
        return Err(ScanError::param("r_star", "must lie in (0, 1]"));
    }
    if probes == 0 {
        return Err(ScanError::param("probes", "must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let m = net.len() as f64;
    let scale = net.unit_scale();
    let mut out = Vec::with_capacity(probes);
    let mut first_violation = None;
    for i in 0..probes {
        let node = rng.random_range(0..net.len()) as NodeId;
        let u: f64 = rng.random();
        let radius = (r_star.ln() * (1.0 - u)).exp();
        let count = net.ball_nodes(net.coord(node), S::lit(radius) * scale)?.len();
        let volume_count = m * radius.powi(net.dim() as i32);
        let ok = count as f64 >= volume_count / constant && count as f64 <= constant * volume_count;
        if !ok && first_violation.is_none() {
            first_violation = Some(i);
        }
        out.push(SpreadProbe {
            node,
            radius,
            count,
            volume_count,
        });
    }
    Ok(SpreadCertificate {
        constant,
        r_star,
        seed,
        probes: out,
        first_violation,
        pass: first_violation.is_none(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetMeta {
    pub mode: Mode,
    pub d: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
}

impl<S: Scalar> NodeSet<S> {
    pub fn meta(&self) -> NetMeta {
        NetMeta {
            mode: self.mode,
            d: self.dim,
            m: self.len(),
            side: self.side,
        }
    }

    /// CSV with header `id,x0,…,x{d−1}`.
    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "id,{}", header.join(","))?;
        for id in 0..self.len() {
            let row: Vec<String> = self.coord(id as NodeId).iter().map(|c| c.to_string()).collect();
            writeln!(w, "{id},{}", row.join(","))?;
        }
        Ok(())
    }

    /// One-line JSON sidecar `{mode, d, m[, side]}`.
    pub fn write_meta<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        let line = serde_json::to_string(&self.meta()).map_err(|e| ScanError::Parse(e.to_string()))?;
        writeln!(w, "{line}")?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, meta: &NetMeta) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| ScanError::Parse("empty node csv".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() != meta.d + 1 || cols[0] != "id" {
            return Err(ScanError::Parse(format!("unexpected header `{header}`")));
        }
        let mut coords = Vec::with_capacity(meta.m * meta.d);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.trim().split(',');
            let id: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| ScanError::Parse(format!("bad id on row {row}")))?;
            if id != row {
                return Err(ScanError::Parse(format!(
                    "ids must be 0..m in order; row {row} has {id}"
                )));
            }
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| ScanError::Parse(format!("bad coordinate `{f}`")))?;
                coords.push(S::lit(v));
            }
        }
        if coords.len() != meta.m * meta.d {
            return Err(ScanError::Parse(format!(
                "expected {} nodes of dimension {}",
                meta.m, meta.d
            )));
        }
        match meta.mode {
            Mode::EuclideanL2 => NodeSet::euclidean(meta.d, coords),
            Mode::LatticeL1 => {
                let side = meta
                    .side
                    .unwrap_or_else(|| (meta.m as f64).powf(1.0 / meta.d as f64).round() as usize);
                let net = make_lattice::<S>(meta.d, side)?;
                if net.len() != meta.m || net.coords != coords {
                    return Err(ScanError::Parse(
                        "lattice coordinates are not the row-major grid".into(),
                    ));
                }
                Ok(net)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_1d() {
        let net = make_lattice::<f64>(1, 5).unwrap();
        assert_eq!(net.len(), 5);
        for i in 0..5u32 {
            assert_eq!(net.coord(i), &[i as f64]);
        }
    }

    #[test]
    fn lattice_row_major() {
        let net = make_lattice::<f64>(2, 3).unwrap();
        assert_eq!(net.len(), 9);
        assert_eq!(net.coord(4), &[1.0, 1.0]);
        assert_eq!(net.coord(5), &[1.0, 2.0]);
        assert_eq!(net.lattice_id(&[2, 1]), Some(7));
        assert_eq!(make_lattice::<f32>(3, 4).unwrap().len(), 64);
    }

    #[test]
    fn lattice_errors() {
        assert!(matches!(make_lattice::<f64>(2, 1), Err(ScanError::Parameter { .. })));
        assert!(matches!(make_lattice::<f64>(0, 4), Err(ScanError::Parameter { .. })));
        assert!(matches!(make_lattice::<f64>(8, 1 << 12), Err(ScanError::Capacity(_))));
    }

    #[test]
    fn uniform_cloud_determinism_and_errors() {
        assert!(make_uniform_cloud::<f64>(2, 0, 1).is_err());
        let a = make_uniform_cloud::<f64>(2, 50, 9).unwrap();
        let b = make_uniform_cloud::<f64>(2, 50, 9).unwrap();
        assert_eq!(a.coords, b.coords);
        let c = make_uniform_cloud::<f64>(2, 50, 10).unwrap();
        assert_ne!(a.coords, c.coords);
    }

    #[test]
    fn uniform_cloud_ball_count_is_binomial() {
        let m = 10_000;
        let net = make_uniform_cloud::<f64>(2, m, 1).unwrap();
        let k = net.ball_nodes(&[0.5, 0.5], 0.25).unwrap().len() as f64;
        let p = std::f64::consts::PI / 16.0;
        let mean = m as f64 * p;
        let sd = (m as f64 * p * (1.0 - p)).sqrt();
        assert!((k - mean).abs() <= 4.0 * sd, "count {k} vs {mean} ± 4·{sd}");
    }

    #[test]
    fn lattice_unit_ball_is_singleton() {
        let net = make_lattice::<f64>(2, 3).unwrap();
        let b = net.ball_nodes(&[1.0, 1.0], 1.0).unwrap();
        assert_eq!(b.ids(), &[4]);
    }

    #[test]
    fn lattice_cross() {
        let net = make_lattice::<f64>(2, 3).unwrap();
        let b = net.ball_nodes(&[1.0, 1.0], 1.5).unwrap();
        let expected: Vec<NodeId> = [[0, 1], [1, 0], [1, 1], [1, 2], [2, 1]]
            .iter()
            .map(|c| net.lattice_id(c).unwrap())
            .collect();
        assert_eq!(b.ids(), &expected[..]);
    }

    #[test]
    fn euclidean_big_ball_covers_all() {
        let net = make_uniform_cloud::<f64>(3, 200, 4).unwrap();
        assert_eq!(net.ball_nodes(&[0.2, 0.9, 0.5], 2.0).unwrap().len(), 200);
    }

    #[test]
    fn ball_matches_brute_force_on_cloud() {
        let net = make_uniform_cloud::<f64>(2, 500, 3).unwrap();
        for (c, r) in [([0.1, 0.1], 0.07), ([0.5, 0.3], 0.2), ([1.0, 0.0], 0.4)] {
            let brute: Vec<NodeId> = (0..500u32)
                .filter(|&i| {
                    let p = net.coord(i);
                    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() < r
                })
                .collect();
            assert_eq!(net.ball_nodes(&c, r).unwrap().ids(), &brute[..]);
        }
    }

    #[test]
    fn ball_input_errors() {
        let net = make_lattice::<f64>(2, 4).unwrap();
        assert!(net.ball_nodes(&[1.0], 1.0).is_err());
        assert!(net.ball_nodes(&[1.0, 9.0], 1.0).is_err());
        assert!(net.ball_nodes(&[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn closed_ball_includes_boundary() {
        let net = make_lattice::<f64>(2, 9).unwrap();
        assert_eq!(net.closed_ball_nodes(&[4.0, 4.0], 2.0).unwrap().len(), 13);
        assert_eq!(net.ball_nodes(&[4.0, 4.0], 2.0).unwrap().len(), 5);
    }

    #[test]
    fn neighbors_on_edges() {
        let net = make_lattice::<f64>(2, 3).unwrap();
        assert_eq!(net.neighbors(0), vec![1, 3]);
        assert_eq!(net.neighbors(4), vec![1, 3, 5, 7]);
        assert_eq!(net.neighbors(8), vec![5, 7]);
    }

    /// Independent count on the rescaled 16×16 grid: for every node and a fine
    /// radius grid in [r*, 1], the bounds hold with C = 8.
    #[test]
    fn rescaled_grid_spread_exhaustive_oracle() {
        let side = 16usize;
        let r_star = 2.0 * 2f64.sqrt() / side as f64;
        let pts: Vec<(f64, f64)> = (0..side * side)
            .map(|i| {
                (
                    ((i / side) as f64 + 0.5) / side as f64,
                    ((i % side) as f64 + 0.5) / side as f64,
                )
            })
            .collect();
        let m = pts.len() as f64;
        for k in 0..=60 {
            let r = r_star * (1.0 / r_star).powf(k as f64 / 60.0);
            for &(x, y) in &pts {
                let n = pts
                    .iter()
                    .filter(|&&(a, b)| ((a - x).powi(2) + (b - y).powi(2)).sqrt() < r)
                    .count() as f64;
                assert!(n >= m * r * r / 8.0 && n <= 8.0 * m * r * r, "r={r} count={n}");
            }
        }
        let net = make_grid_cloud::<f64>(2, side).unwrap();
        let cert = check_spread(&net, 8.0, r_star, 500, 3).unwrap();
        assert!(cert.pass);
        assert_eq!(cert.probes.len(), 500);
    }

    #[test]
    fn single_node_fails_spread() {
        let net = NodeSet::<f64>::euclidean(2, vec![0.5, 0.5]).unwrap();
        let cert = check_spread(&net, 1.0, 0.5, 20, 1).unwrap();
        assert!(!cert.pass);
        assert_eq!(cert.first_violation, Some(0));
    }

    #[test]
    fn lattice_spread_with_lattice_bound() {
        // r* ≥ 2√d/side and C = 4^d·π-ish passes on the lattice in ℓ1 geometry.
        let side = 32;
        let net = make_lattice::<f64>(2, side).unwrap();
        let cert = check_spread(
            &net,
            16.0 * std::f64::consts::PI,
            2.0 * 2f64.sqrt() / side as f64,
            400,
            5,
        )
        .unwrap();
        assert!(cert.pass, "{:?}", cert.first_violation.map(|i| &cert.probes[i]));
    }

    #[test]
    fn csv_roundtrip() {
        for net in [
            make_lattice::<f64>(2, 4).unwrap(),
            make_uniform_cloud::<f64>(3, 20, 2).unwrap(),
        ] {
            let mut csv = Vec::new();
            let mut meta = Vec::new();
            net.write_csv(&mut csv).unwrap();
            net.write_meta(&mut meta).unwrap();
            let parsed: NetMeta = serde_json::from_slice(&meta).unwrap();
            let back = NodeSet::<f64>::read_csv(&csv[..], &parsed).unwrap();
            assert_eq!(back.coords, net.coords);
            assert_eq!(back.meta(), net.meta());
        }
        let text = {
            let mut m = Vec::new();
            make_lattice::<f64>(2, 4).unwrap().write_meta(&mut m).unwrap();
            String::from_utf8(m).unwrap()
        };
        assert_eq!(text.trim(), r#"{"mode":"lattice-l1","d":2,"m":16,"side":4}"#);
    }
}
