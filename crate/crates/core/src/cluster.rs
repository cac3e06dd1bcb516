//! Clusters as sorted node-id sets, and the plain-text cluster list format.

use crate::error::{Result, ScanError};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

pub type NodeId = u32;

/// A set of node ids kept strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Cluster {
    ids: Vec<NodeId>,
}

impl Cluster {
    pub fn empty() -> Self {
        Cluster { ids: Vec::new() }
    }

    /// Sorts and deduplicates `ids`.
    pub fn from_ids(mut ids: Vec<NodeId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Cluster { ids }
    }

    /// Builds from ids already strictly increasing; checked in debug builds.
    pub fn from_sorted(ids: Vec<NodeId>) -> Self {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        Cluster { ids }
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    /// `|self ∩ other|` by sorted merge.
    pub fn intersection_size(&self, other: &Cluster) -> usize {
        let (a, b) = (&self.ids, &other.ids);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn is_subset(&self, other: &Cluster) -> bool {
        self.intersection_size(other) == self.len()
    }

    pub fn union(&self, other: &Cluster) -> Cluster {
        let mut ids = Vec::with_capacity(self.len() + other.len());
        ids.extend_from_slice(&self.ids);
        ids.extend_from_slice(&other.ids);
        Cluster::from_ids(ids)
    }

    /// True when every id is below `m`.
    pub fn valid_for(&self, m: usize) -> bool {
        self.ids.last().is_none_or(|&x| (x as usize) < m)
    }
}

/// `#`-prefixed `key=value` metadata carried by cluster and sequence files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.insert(key, value);
        self
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub(crate) fn write_header<W: Write + ?Sized>(&self, w: &mut W) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(())
    }

    pub(crate) fn parse_line(&mut self, line: &str) {
        let body = line.trim_start_matches('#').trim();
        if let Some((k, v)) = body.split_once('=') {
            self.insert(k.trim(), v.trim());
        }
    }
}

pub(crate) fn parse_ids(text: &str) -> Result<Vec<NodeId>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<NodeId>()
                .map_err(|_| ScanError::Parse(format!("bad node id `{tok}`")))
        })
        .collect()
}

pub fn write_cluster_list<W: Write + ?Sized>(w: &mut W, meta: &Metadata, clusters: &[Cluster]) -> Result<()> {
    meta.write_header(w)?;
    for c in clusters {
        let line = c.ids().iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_cluster_list<R: BufRead>(r: R) -> Result<(Metadata, Vec<Cluster>)> {
    let mut meta = Metadata::new();
    let mut clusters = Vec::new();
    for line in r.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            meta.parse_line(trimmed);
        } else if !trimmed.is_empty() {
            clusters.push(Cluster::from_ids(parse_ids(trimmed)?));
        }
    }
    Ok((meta, clusters))
}
