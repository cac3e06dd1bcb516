//! The normalized-overlap distance between clusters and greedy ε-nets under it.

use crate::cluster::{Cluster, Metadata, NodeId};
use crate::error::{Result, ScanError};
use crate::scalar::Scalar;
use rayon::prelude::*;
use std::collections::HashMap;

/// `δ(K, L) = √2 · (1 − |K∩L| / √(|K||L|))^{1/2}`, in `[0, √2]`.
pub fn delta<S: Scalar>(k: &Cluster, l: &Cluster) -> Result<S> {
    if k.is_empty() || l.is_empty() {
        return Err(ScanError::domain("delta is undefined for an empty cluster"));
    }
    Ok(delta_from_counts(k.len(), l.len(), k.intersection_size(l)))
}

/// δ from the two sizes and the intersection size.
pub fn delta_from_counts<S: Scalar>(k: usize, l: usize, common: usize) -> S {
    let ratio = S::from_count(common) / (S::from_count(k) * S::from_count(l)).sqrt();
    // Rounding can push the ratio a hair above one for equal sets.
    S::sqrt2() * (S::one() - ratio).max(S::zero()).sqrt()
}

/// A greedy ε-packing of a cluster stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsNet<S> {
    pub epsilon: S,
    pub members: Vec<Cluster>,
    pub family: String,
}

impl<S: Scalar> EpsNet<S> {
    /// Wraps an explicit member list, e.g. a whole class used as its own net.
    pub fn from_members(epsilon: S, members: Vec<Cluster>, family: impl Into<String>) -> Self {
        EpsNet {
            epsilon,
            members,
            family: family.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn metadata(&self) -> Metadata {
        Metadata::new()
            .with("family", &self.family)
            .with("epsilon", self.epsilon)
            .with("members", self.members.len())
    }
}

/// Node → indices of clusters containing it; used to visit only overlapping members.
#[derive(Default)]
struct InvertedIndex {
    postings: HashMap<NodeId, Vec<u32>>,
}

impl InvertedIndex {
    fn add(&mut self, idx: u32, c: &Cluster) {
        for &v in c.ids() {
            self.postings.entry(v).or_default().push(idx);
        }
    }

    /// Calls `f(member, |K ∩ member|)` for each member meeting `k`.
    fn overlaps(&self, k: &Cluster, counts: &mut Vec<u32>, touched: &mut Vec<u32>, mut f: impl FnMut(usize, usize)) {
        for v in k.ids() {
            if let Some(list) = self.postings.get(v) {
                for &j in list {
                    let j = j as usize;
                    if j >= counts.len() {
                        counts.resize(j + 1, 0);
                    }
                    if counts[j] == 0 {
                        touched.push(j as u32);
                    }
                    counts[j] += 1;
                }
            }
        }
        for &j in touched.iter() {
            f(j as usize, counts[j as usize] as usize);
            counts[j as usize] = 0;
        }
        touched.clear();
    }
}

/// Greedy net: admit a cluster iff its δ to every admitted member exceeds `epsilon`.
///
/// The admission order is the stream order, so nets are deterministic. Empty
/// clusters are skipped.
pub fn build_net<S: Scalar, I>(stream: I, epsilon: S, family: impl Into<String>) -> Result<EpsNet<S>>
where
    I: IntoIterator<Item = Cluster>,
{
    if !(epsilon > S::zero() && epsilon <= S::sqrt2()) {
        return Err(ScanError::param("epsilon", "must lie in (0, √2]"));
    }
    let mut members: Vec<Cluster> = Vec::new();
    let mut index = InvertedIndex::default();
    let (mut counts, mut touched) = (Vec::new(), Vec::new());
    for k in stream {
        if k.is_empty() {
            continue;
        }
        if members.is_empty() {
            index.add(0, &k);
            members.push(k);
            continue;
        }
        // Every pair is within √2, so nothing past the first is admitted at ε = √2.
        if epsilon >= S::sqrt2() {
            continue;
        }
        let mut admit = true;
        index.overlaps(&k, &mut counts, &mut touched, |j, common| {
            if admit && delta_from_counts::<S>(k.len(), members[j].len(), common) <= epsilon {
                admit = false;
            }
        });
        if admit {
            index.add(members.len() as u32, &k);
            members.push(k);
        }
    }
    Ok(EpsNet {
        epsilon,
        members,
        family: family.into(),
    })
}

#[derive(Debug, Clone)]
pub struct CoverReport<S> {
    /// `max_K min_j δ(K, K_j)` over the stream.
    pub max_min_dist: S,
    /// First stream element attaining the maximum.
    pub worst: Option<Cluster>,
    pub checked: usize,
    pub pass: bool,
}

/// Largest distance from a stream element to its nearest net member.
pub fn verify_cover<S: Scalar, I>(net: &EpsNet<S>, stream: I) -> CoverReport<S>
where
    I: IntoIterator<Item = Cluster>,
{
    let items: Vec<Cluster> = stream.into_iter().filter(|c| !c.is_empty()).collect();
    let mut index = InvertedIndex::default();
    for (j, c) in net.members.iter().enumerate() {
        index.add(j as u32, c);
    }
    let best = items
        .par_iter()
        .enumerate()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(counts, touched), (i, k)| {
                let mut nearest = S::sqrt2();
                index.overlaps(k, counts, touched, |j, common| {
                    let d = delta_from_counts::<S>(k.len(), net.members[j].len(), common);
                    if d < nearest {
                        nearest = d;
                    }
                });
                (nearest, i)
            },
        )
        .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    match best {
        Some((dist, i)) => CoverReport {
            max_min_dist: dist,
            worst: Some(items[i].clone()),
            checked: items.len(),
            pass: dist <= net.epsilon,
        },
        None => CoverReport {
            max_min_dist: S::zero(),
            worst: None,
            checked: 0,
            pass: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusters::enumerate_balls;
    use crate::network::make_lattice;

    fn c(ids: &[NodeId]) -> Cluster {
        Cluster::from_ids(ids.to_vec())
    }

    #[test]
    fn delta_examples() {
        let k = c(&[1, 2, 3]);
        assert_eq!(delta::<f64>(&k, &k).unwrap(), 0.0);
        assert!((delta::<f64>(&k, &c(&[7, 8])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((delta::<f64>(&c(&[1, 2]), &c(&[2, 3])).unwrap() - 1.0).abs() < 1e-15);
        assert!(delta::<f64>(&k, &Cluster::empty()).is_err());
    }

    #[test]
    fn net_admission_boundary() {
        let disjoint = vec![c(&[0]), c(&[1]), c(&[2])];
        let net = build_net(disjoint.clone(), 2f64.sqrt(), "t").unwrap();
        assert_eq!(net.members, vec![c(&[0])]);
        let tiny = build_net(vec![c(&[0, 1]), c(&[0, 1, 2]), c(&[0, 1])], f64::MIN_POSITIVE, "t").unwrap();
        assert_eq!(tiny.len(), 2);
        assert!(build_net(disjoint.clone(), 0.0, "t").is_err());
        assert!(build_net(disjoint, 1.5, "t").is_err());
    }

    #[test]
    fn singletons_all_admitted() {
        let net3 = make_lattice::<f64>(2, 3).unwrap();
        let balls: Vec<Cluster> = enumerate_balls(&net3, 1.0).unwrap().collect();
        assert_eq!(balls.len(), 9);
        let net = build_net(balls.clone(), 1.0, "balls").unwrap();
        assert_eq!(net.len(), 9);
        assert!(verify_cover(&net, balls).pass);
    }

    #[test]
    fn cover_failure_reports_witness() {
        let net = EpsNet::from_members(1.0, vec![c(&[0, 1])], "t");
        let rep = verify_cover(&net, vec![c(&[5, 6])]);
        assert!(!rep.pass);
        assert!((rep.max_min_dist - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rep.worst, Some(c(&[5, 6])));
    }

    #[test]
    fn greedy_net_covers_its_stream_and_is_separated() {
        let lat = make_lattice::<f64>(2, 12).unwrap();
        let balls: Vec<Cluster> = enumerate_balls(&lat, 2.5).unwrap().collect();
        for eps in [0.3, 0.6, 1.0] {
            let net = build_net(balls.clone(), eps, "balls").unwrap();
            for (i, a) in net.members.iter().enumerate() {
                for b in &net.members[i + 1..] {
                    assert!(delta::<f64>(a, b).unwrap() > eps);
                }
            }
            let rep = verify_cover(&net, balls.clone());
            assert!(rep.pass && rep.max_min_dist <= eps);
        }
    }
}
