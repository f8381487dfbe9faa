//! One-dimensional meshes and contiguous cell-to-submesh partitions.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default polynomial warp parameter.
pub const DEFAULT_EPSILON: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Warp {
    Uniform,
    Polynomial { epsilon: f64 },
}

impl Warp {
    pub fn polynomial() -> Self {
        Warp::Polynomial { epsilon: DEFAULT_EPSILON }
    }
}

/// `w(x) = (x^3/3 + eps x) / (1/3 + eps)`, a monotone map of [-1, 1] onto itself
/// that clusters nodes around the origin.
pub fn warp_polynomial(x: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Mesh(format!("warp epsilon must be positive, got {epsilon}")));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::Mesh(format!("warp argument {x} outside [-1, 1]")));
    }
    Ok((x * x * x / 3.0 + epsilon * x) / (1.0 / 3.0 + epsilon))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    periodic: bool,
    dx: Vec<f64>,
    dx_min: f64,
}

impl Mesh1D {
    pub fn from_nodes(nodes: Vec<f64>, periodic: bool) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Mesh(format!("need at least 2 cells, got {}", nodes.len().saturating_sub(1))));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::Mesh("non-finite node coordinate".into()));
        }
        let dx: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(j) = dx.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::Mesh(format!("nodes not strictly increasing at cell {j}")));
        }
        let dx_min = dx.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { nodes, periodic, dx, dx_min })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn cell_sizes(&self) -> &[f64] {
        &self.dx
    }

    pub fn n_cells(&self) -> usize {
        self.dx.len()
    }

    pub fn dx_min(&self) -> f64 {
        self.dx_min
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        0.5 * (self.nodes[j] + self.nodes[j + 1])
    }

    pub fn cell_bounds(&self, j: usize) -> (f64, f64) {
        (self.nodes[j], self.nodes[j + 1])
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!("n_el {} periodic {}\n", self.n_cells(), u8::from(self.periodic));
        for x in &self.nodes {
            // {:?} prints the shortest representation that round-trips
            let _ = writeln!(s, "{x:?}");
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |detail: String| Error::Parse { path: origin.to_path_buf(), detail };
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| err("empty mesh file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (n_el, periodic) = match fields.as_slice() {
            ["n_el", n, "periodic", p] => {
                let n: usize = n.parse().map_err(|e| err(format!("bad n_el: {e}")))?;
                let p = match *p {
                    "0" => false,
                    "1" => true,
                    other => return Err(err(format!("bad periodic flag {other}"))),
                };
                (n, p)
            }
            _ => return Err(err(format!("bad header `{header}`"))),
        };
        let nodes = lines
            .map(|l| l.parse::<f64>().map_err(|e| err(format!("bad coordinate `{l}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if nodes.len() != n_el + 1 {
            return Err(err(format!("header promises {} nodes, found {}", n_el + 1, nodes.len())));
        }
        Self::from_nodes(nodes, periodic)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

/// Nodes are the warp of uniformly spaced points on (-1, 1), mapped affinely onto `domain`.
pub fn build_mesh(n_cells: usize, warp: Warp, domain: (f64, f64), periodic: bool) -> Result<Mesh1D> {
    if n_cells < 2 {
        return Err(Error::Mesh(format!("need at least 2 cells, got {n_cells}")));
    }
    let (a, b) = domain;
    if !(b > a) {
        return Err(Error::Mesh(format!("empty domain ({a}, {b})")));
    }
    let mut nodes = Vec::with_capacity(n_cells + 1);
    for i in 0..=n_cells {
        let r = -1.0 + 2.0 * i as f64 / n_cells as f64;
        let w = match warp {
            Warp::Uniform => r,
            Warp::Polynomial { epsilon } => warp_polynomial(r, epsilon)?,
        };
        nodes.push(a + (w + 1.0) * 0.5 * (b - a));
    }
    // pin the endpoints so the domain length is exact
    nodes[0] = a;
    nodes[n_cells] = b;
    Mesh1D::from_nodes(nodes, periodic)
}

/// Contiguous split of cells into submeshes of at least two cells each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    bounds: Vec<usize>,
}

impl Partition {
    /// `bounds` starts at 0, ends at the cell count, and is strictly increasing with gaps of at least 2.
    pub fn from_bounds(bounds: Vec<usize>) -> Result<Self> {
        if bounds.len() < 2 || bounds[0] != 0 {
            return Err(Error::Mesh("partition bounds must start at 0 and name at least one submesh".into()));
        }
        if let Some(w) = bounds.windows(2).find(|w| w[1] < w[0] + 2) {
            return Err(Error::Mesh(format!("submesh [{}, {}) has fewer than 2 cells", w[0], w[1])));
        }
        Ok(Self { bounds })
    }

    /// Build from interior splitters (first cell of every submesh but the first).
    pub fn from_splitters(splitters: &[usize], n_cells: usize) -> Result<Self> {
        let mut bounds = vec![0];
        bounds.extend(splitters.iter().copied().filter(|&s| s != 0 && s != n_cells));
        bounds.push(n_cells);
        Self::from_bounds(bounds)
    }

    pub fn uniform(n_cells: usize, n_sbmsh: usize) -> Result<Self> {
        if n_sbmsh == 0 || n_cells < 2 * n_sbmsh {
            return Err(Error::Partition { cells: n_cells, parts: n_sbmsh });
        }
        Self::from_bounds((0..=n_sbmsh).map(|k| k * n_cells / n_sbmsh).collect())
    }

    pub fn n_submeshes(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn n_cells(&self) -> usize {
        self.bounds[self.bounds.len() - 1]
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.bounds[s]..self.bounds[s + 1]
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn splitters(&self) -> &[usize] {
        &self.bounds[1..self.bounds.len() - 1]
    }

    /// The map pi from cell to submesh.
    pub fn assignment(&self) -> Vec<usize> {
        let mut pi = Vec::with_capacity(self.n_cells());
        for s in 0..self.n_submeshes() {
            pi.extend(std::iter::repeat_n(s, self.range(s).len()));
        }
        pi
    }

    pub fn submesh_of(&self, cell: usize) -> usize {
        self.bounds.partition_point(|&b| b <= cell) - 1
    }

    pub fn loads(&self, weights: &[f64]) -> Vec<f64> {
        (0..self.n_submeshes()).map(|s| weights[self.range(s)].iter().sum()).collect()
    }

    pub fn max_load(&self, weights: &[f64]) -> f64 {
        self.loads(weights).into_iter().fold(0.0, f64::max)
    }

    pub fn read_splitters(path: &Path, n_cells: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let splitters = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<usize>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    detail: format!("bad splitter `{l}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_splitters(&splitters, n_cells)
    }

    pub fn write_splitters(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for b in self.splitters() {
            let _ = writeln!(s, "{b}");
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Contiguous split of positive `weights` into `n_sbmsh` parts of at least two cells
/// minimizing the heaviest part.
///
/// Bisects on the bottleneck with a greedy prefix scan. When the greedy cut cannot be
/// turned into exactly `n_sbmsh` parts of size two or more, an exact layered feasibility
/// table takes over.
pub fn partition_balanced(weights: &[f64], n_sbmsh: usize) -> Result<Partition> {
    let n = weights.len();
    if n_sbmsh == 0 || n < 2 * n_sbmsh {
        return Err(Error::Partition { cells: n, parts: n_sbmsh });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::Mesh(format!("partition weights must be positive and finite, got {w}")));
    }
    let prefix = prefix_sums(weights);
    let total = prefix[n];

    let relaxed = |b: f64| greedy_cuts(&prefix, b).is_some_and(|c| c.len() - 1 <= n_sbmsh);
    let bound = bisect(weights.iter().copied().fold(total / n_sbmsh as f64, f64::max), total, relaxed);
    if let Some(cuts) = greedy_cuts(&prefix, bound) {
        if let Some(bounds) = refine_to_count(cuts, n_sbmsh) {
            return Partition::from_bounds(bounds);
        }
    }

    // every cell shares a part with at least one neighbor
    let pair = |i: usize| weights[i] + weights[i + 1];
    let lo = (0..n)
        .map(|i| match i {
            0 => pair(0),
            _ if i == n - 1 => pair(n - 2),
            _ => pair(i - 1).min(pair(i)),
        })
        .fold(total / n_sbmsh as f64, f64::max);
    let exact = |b: f64| layered_table(&prefix, n_sbmsh, b).is_some();
    let bound = bisect(lo, total, exact);
    let table = layered_table(&prefix, n_sbmsh, bound)
        .ok_or(Error::Partition { cells: n, parts: n_sbmsh })?;
    Partition::from_bounds(table)
}

fn prefix_sums(weights: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(weights.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        prefix.push(acc);
    }
    prefix
}

/// Smallest feasible value in `[lo, hi]` to relative precision; `hi` must be feasible.
fn bisect(lo: f64, hi: f64, feasible: impl Fn(f64) -> bool) -> f64 {
    if feasible(lo) {
        return lo;
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-14 * hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Cut as late as possible while every part weighs at most `b` (size constraint ignored).
fn greedy_cuts(prefix: &[f64], b: f64) -> Option<Vec<usize>> {
    let n = prefix.len() - 1;
    let mut cuts = vec![0];
    let mut pos = 0;
    while pos < n {
        let limit = prefix[pos] + b;
        let next = prefix.partition_point(|&p| p <= limit) - 1;
        if next <= pos {
            return None;
        }
        pos = next.min(n);
        cuts.push(pos);
    }
    Some(cuts)
}

/// Split greedy parts until there are exactly `k`, keeping every part at 2+ cells.
fn refine_to_count(mut cuts: Vec<usize>, k: usize) -> Option<Vec<usize>> {
    if cuts.windows(2).any(|w| w[1] - w[0] < 2) {
        return None;
    }
    while cuts.len() - 1 < k {
        let (i, len) = cuts.windows(2).map(|w| w[1] - w[0]).enumerate().max_by_key(|&(i, len)| (len, std::cmp::Reverse(i)))?;
        if len < 4 {
            return None;
        }
        cuts.insert(i + 1, cuts[i] + len / 2);
    }
    Some(cuts)
}

/// `can[p][i]`: the first `i` cells split into `p` parts, each of 2+ cells weighing at most `b`.
fn layered_table(prefix: &[f64], k: usize, b: f64) -> Option<Vec<usize>> {
    let n = prefix.len() - 1;
    // lo[i] = first j with weight(j..i) <= b
    let mut lo = vec![0usize; n + 1];
    let mut j = 0;
    for i in 0..=n {
        while prefix[i] - prefix[j] > b {
            j += 1;
        }
        lo[i] = j;
    }
    let mut can = vec![vec![false; n + 1]; k + 1];
    can[0][0] = true;
    for p in 1..=k {
        let (prev, cur) = can.split_at_mut(p);
        let (prev, cur) = (&prev[p - 1], &mut cur[0]);
        let mut count = vec![0u32; n + 2];
        for i in 0..=n {
            count[i + 1] = count[i] + u32::from(prev[i]);
        }
        for i in 2..=n {
            let (a, z) = (lo[i], i - 2);
            cur[i] = a <= z && count[z + 1] > count[a];
        }
    }
    if !can[k][n] {
        return None;
    }
    let mut bounds = vec![n];
    let mut i = n;
    for p in (1..=k).rev() {
        let j = (lo[i]..=i - 2).rev().find(|&j| can[p - 1][j])?;
        bounds.push(j);
        i = j;
    }
    bounds.reverse();
    Some(bounds)
}
