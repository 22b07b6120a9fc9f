//! Distance computations and an exact metric-tree index.
//!
//! The tree is an accelerator, not an approximator: every query returns
//! results identical to a brute-force scan. Distance ties are broken by
//! ascending dataset index so that query answers are deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::{Error, Result};

/// Perturbation / clustering metric tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    L1,
    L2,
    Linf,
}

impl Metric {
    pub fn tag(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::Linf => "linf",
        }
    }
}

/// Metric distance between two vectors of equal dimension.
pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(distance_unchecked(a, b, metric))
}

/// As [`distance`] but assumes the dimensions already match.
#[inline]
pub fn distance_unchecked(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::L2 => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::Linf => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max),
    }
}

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf {
        pivot: Vec<f64>,
        radius: f64,
        indices: Vec<usize>,
    },
    Branch {
        pivot: Vec<f64>,
        radius: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn pivot(&self) -> &[f64] {
        match self {
            Node::Leaf { pivot, .. } | Node::Branch { pivot, .. } => pivot,
        }
    }

    fn radius(&self) -> f64 {
        match self {
            Node::Leaf { radius, .. } | Node::Branch { radius, .. } => *radius,
        }
    }
}

/// A ball-tree index over a dataset for one fixed metric.
#[derive(Debug)]
pub struct MetricTree<'a> {
    dataset: &'a Dataset,
    metric: Metric,
    root: Node,
}

fn centroid(ds: &Dataset, indices: &[usize]) -> Vec<f64> {
    let n = ds.n();
    let mut c = vec![0.0; n];
    for &i in indices {
        for (cj, &xj) in c.iter_mut().zip(ds.point(i)) {
            *cj += xj;
        }
    }
    let inv = 1.0 / indices.len() as f64;
    c.iter_mut().for_each(|v| *v *= inv);
    c
}

fn build_node(ds: &Dataset, metric: Metric, mut indices: Vec<usize>) -> Node {
    let pivot = centroid(ds, &indices);
    let radius = indices
        .iter()
        .map(|&i| distance_unchecked(&pivot, ds.point(i), metric))
        .fold(0.0, f64::max);
    if indices.len() <= LEAF_SIZE {
        indices.sort_unstable();
        return Node::Leaf { pivot, radius, indices };
    }
    // Split on the axis of largest spread at the median, ties by index.
    let n = ds.n();
    let mut best_axis = 0;
    let mut best_spread = -1.0;
    for axis in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &indices {
            let v = ds.point(i)[axis];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_axis = axis;
        }
    }
    let mid = indices.len() / 2;
    indices.sort_unstable_by(|&a, &b| {
        ds.point(a)[best_axis]
            .total_cmp(&ds.point(b)[best_axis])
            .then(a.cmp(&b))
    });
    let right = indices.split_off(mid);
    Node::Branch {
        pivot,
        radius,
        left: Box::new(build_node(ds, metric, indices)),
        right: Box::new(build_node(ds, metric, right)),
    }
}

/// Max-heap entry ordered by (distance, index); the worst candidate is on top.
#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    index: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> MetricTree<'a> {
    /// Builds the index; single-threaded and deterministic.
    pub fn build(dataset: &'a Dataset, metric: Metric) -> Self {
        let indices: Vec<usize> = (0..dataset.m()).collect();
        let root = build_node(dataset, metric, indices);
        MetricTree { dataset, metric, root }
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    /// The k nearest non-excluded points to `query`, ascending by
    /// (distance, index). The query point itself is a regular candidate
    /// unless its index is excluded.
    pub fn knn(&self, query: &[f64], k: usize, exclude: Option<&[bool]>) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dataset.n() {
            return Err(Error::DimensionMismatch {
                expected: self.dataset.n(),
                got: query.len(),
            });
        }
        let available = match exclude {
            Some(mask) => mask.iter().filter(|&&e| !e).count(),
            None => self.dataset.m(),
        };
        if k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if k > available {
            return Err(Error::KTooLarge { k, available });
        }
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        self.knn_descend(&self.root, query, k, exclude, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|h| (h.index, h.dist)).collect();
        out.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }

    fn knn_descend(
        &self,
        node: &Node,
        query: &[f64],
        k: usize,
        exclude: Option<&[bool]>,
        heap: &mut BinaryHeap<HeapItem>,
    ) {
        let pivot_dist = distance_unchecked(query, node.pivot(), self.metric);
        if heap.len() == k {
            // Strict pruning only: equal-distance candidates must be visited
            // so the index tiebreak stays exact.
            let worst = heap.peek().unwrap().dist;
            if pivot_dist - node.radius() > worst {
                return;
            }
        }
        match node {
            Node::Leaf { indices, .. } => {
                for &i in indices {
                    if exclude.is_some_and(|m| m[i]) {
                        continue;
                    }
                    let d = distance_unchecked(query, self.dataset.point(i), self.metric);
                    let item = HeapItem { dist: d, index: i };
                    if heap.len() < k {
                        heap.push(item);
                    } else if item < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(item);
                    }
                }
            }
            Node::Branch { left, right, .. } => {
                let dl = distance_unchecked(query, left.pivot(), self.metric);
                let dr = distance_unchecked(query, right.pivot(), self.metric);
                let (first, second) = if dl <= dr { (left, right) } else { (right, left) };
                self.knn_descend(first, query, k, exclude, heap);
                self.knn_descend(second, query, k, exclude, heap);
            }
        }
    }

    /// Indices of all non-excluded points within `radius` of `query`
    /// (closed-ball semantics), ascending by index.
    pub fn range_query(&self, query: &[f64], radius: f64, exclude: Option<&[bool]>) -> Result<Vec<usize>> {
        if query.len() != self.dataset.n() {
            return Err(Error::DimensionMismatch {
                expected: self.dataset.n(),
                got: query.len(),
            });
        }
        if radius < 0.0 {
            return Err(Error::param("radius", "must be nonnegative"));
        }
        let mut out = Vec::new();
        self.range_descend(&self.root, query, radius, exclude, &mut out);
        out.sort_unstable();
        Ok(out)
    }

    fn range_descend(
        &self,
        node: &Node,
        query: &[f64],
        radius: f64,
        exclude: Option<&[bool]>,
        out: &mut Vec<usize>,
    ) {
        let pivot_dist = distance_unchecked(query, node.pivot(), self.metric);
        if pivot_dist - node.radius() > radius {
            return;
        }
        match node {
            Node::Leaf { indices, .. } => {
                for &i in indices {
                    if exclude.is_some_and(|m| m[i]) {
                        continue;
                    }
                    if distance_unchecked(query, self.dataset.point(i), self.metric) <= radius {
                        out.push(i);
                    }
                }
            }
            Node::Branch { left, right, .. } => {
                self.range_descend(left, query, radius, exclude, out);
                self.range_descend(right, query, radius, exclude, out);
            }
        }
    }
}

/// A precomputed m x k nearest-neighbor table with self excluded,
/// as used by the density ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnTable {
    pub k: usize,
    pub metric: Metric,
    /// `entries[i]` holds the k nearest neighbors of point `i` (self
    /// excluded), ascending by (distance, index).
    pub entries: Vec<Vec<(usize, f64)>>,
}

/// Computes the k-NN table (self excluded) for every point.
pub fn knn_table(tree: &MetricTree<'_>, k: usize) -> Result<KnnTable> {
    let m = tree.dataset().m();
    if k >= m {
        return Err(Error::KTooLarge { k, available: m - 1 });
    }
    use rayon::prelude::*;
    let entries: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            // Query k+1 and drop self; with >= k+1 duplicates at distance 0
            // the index tiebreak may push self out, in which case the k+1-th
            // entry is the one to drop.
            let mut nn = tree.knn(tree.dataset().point(i), k + 1, None).unwrap();
            if let Some(pos) = nn.iter().position(|&(idx, _)| idx == i) {
                nn.remove(pos);
            } else {
                nn.pop();
            }
            nn
        })
        .collect();
    Ok(KnnTable { k, metric: tree.metric(), entries })
}

const CACHE_MAGIC: &[u8; 8] = b"CONCKNN1";

fn metric_code(m: Metric) -> u8 {
    match m {
        Metric::L1 => 1,
        Metric::L2 => 2,
        Metric::Linf => 3,
    }
}

/// Cache file path for a dataset/k/metric combination under `dir`.
pub fn cache_path(dir: &Path, dataset: &Dataset, k: usize, metric: Metric) -> PathBuf {
    let hash = dataset.content_hash();
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("knn-{hex}-k{k}-{}.bin", metric.tag()))
}

/// Writes the table: header (magic, metric tag, m, k), then little-endian
/// (u64 index, f64 distance) pairs row by row.
pub fn write_cache(path: &Path, table: &KnnTable) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.push(metric_code(table.metric));
    buf.extend_from_slice(&(table.entries.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(table.k as u64).to_le_bytes());
    for row in &table.entries {
        for &(idx, dist) in row {
            buf.extend_from_slice(&(idx as u64).to_le_bytes());
            buf.extend_from_slice(&dist.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    f.write_all(&buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads a table previously written by [`write_cache`].
pub fn read_cache(path: &Path) -> Result<KnnTable> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let fail = |offset: u64, reason: &str| Error::Format {
        format: "knn-cache",
        path: path.to_path_buf(),
        offset,
        reason: reason.into(),
    };
    if bytes.len() < 25 || &bytes[..8] != CACHE_MAGIC {
        return Err(fail(0, "bad magic"));
    }
    let metric = match bytes[8] {
        1 => Metric::L1,
        2 => Metric::L2,
        3 => Metric::Linf,
        _ => return Err(fail(8, "unknown metric tag")),
    };
    let m = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
    let k = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
    let expected = 25 + m * k * 16;
    if bytes.len() != expected {
        return Err(fail(bytes.len() as u64, "payload length mismatch"));
    }
    let mut entries = Vec::with_capacity(m);
    let mut off = 25;
    for _ in 0..m {
        let mut row = Vec::with_capacity(k);
        for _ in 0..k {
            let idx = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
            let dist = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
            row.push((idx, dist));
            off += 16;
        }
        entries.push(row);
    }
    Ok(KnnTable { k, metric, entries })
}

/// Brute-force k nearest neighbors; the reference the tree must match.
pub fn knn_brute_force(
    ds: &Dataset,
    query: &[f64],
    k: usize,
    metric: Metric,
    exclude: Option<&[bool]>,
) -> Result<Vec<(usize, f64)>> {
    let mut all: Vec<(usize, f64)> = (0..ds.m())
        .filter(|&i| !exclude.is_some_and(|m| m[i]))
        .map(|i| (i, distance(query, ds.point(i), metric).unwrap()))
        .collect();
    if k > all.len() {
        return Err(Error::KTooLarge { k, available: all.len() });
    }
    all.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    Ok(all)
}
