//! Labeled trees, rooted forests, set partitions and connected parts.
//!
//! Vertices are labeled `0..n`. Enumerators are lazy iterators; nothing is
//! materialized beyond the current item.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::mc::RandomStream;

/// Default bound for tree enumeration (8^6 = 262144 trees).
pub const DEFAULT_TREE_BOUND: usize = 8;
/// Rooted forests are enumerated up to this many vertices.
pub const MAX_FOREST_VERTICES: usize = 7;
/// Partitions are enumerated on ground sets up to this size.
pub const MAX_PARTITION_SIZE: usize = 10;
/// Connected parts are computed on vertex sets up to this size.
pub const MAX_CONNECTED_SIZE: usize = 8;

/// A labeled tree on vertices `0..n`; edges are stored as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

fn normalize(edges: &mut [(usize, usize)]) {
    for e in edges.iter_mut() {
        if e.0 > e.1 {
            *e = (e.1, e.0);
        }
    }
    edges.sort_unstable();
}

/// Union-find over `0..n`, used for acyclicity checks.
struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }

    /// Returns false if `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

fn check_forest(n: usize, edges: &[(usize, usize)]) -> Result<Dsu> {
    let mut dsu = Dsu::new(n);
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::LabelOutOfRange { label: i.max(j), n });
        }
        if i == j {
            return Err(Error::InvalidGraph(format!("self-loop at {i}")));
        }
        if !dsu.union(i, j) {
            return Err(Error::InvalidGraph(format!("edge ({i}, {j}) closes a cycle")));
        }
    }
    Ok(dsu)
}

impl TreeGraph {
    pub fn new(n: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(out_of_range("n", 0, ">= 1"));
        }
        if edges.len() != n - 1 {
            return Err(Error::InvalidGraph(format!(
                "a tree on {n} vertices has {} edges, got {}",
                n - 1,
                edges.len()
            )));
        }
        check_forest(n, &edges)?;
        normalize(&mut edges);
        Ok(Self { n, edges })
    }

    /// The single-vertex tree.
    pub fn singleton() -> Self {
        Self {
            n: 1,
            edges: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let e = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&e).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Edges as `(parent, child)` in breadth-first order from vertex 0.
    pub fn bfs_edges(&self) -> Vec<(usize, usize)> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut out = Vec::with_capacity(self.n.saturating_sub(1));
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    out.push((v, w));
                    queue.push_back(w);
                }
            }
        }
        out
    }

    /// Vertex pairs `(i, j)`, `i < j`, that are not edges of the tree.
    pub fn non_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if !self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Applies a vertex relabeling `v -> perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidGraph("permutation length mismatch".into()));
        }
        Self::new(
            self.n,
            self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect(),
        )
    }

    /// Prüfer code of the tree (length `n - 2`, empty for `n <= 2`).
    pub fn prufer_encode(&self) -> Vec<usize> {
        let n = self.n;
        if n <= 2 {
            return Vec::new();
        }
        let adj = self.adjacency();
        let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let mut removed = vec![false; n];
        let mut code = Vec::with_capacity(n - 2);
        for _ in 0..n - 2 {
            let leaf = (0..n)
                .find(|&v| !removed[v] && degree[v] == 1)
                .expect("a tree always has a leaf");
            let nb = adj[leaf]
                .iter()
                .copied()
                .find(|&w| !removed[w])
                .expect("leaf has a live neighbour");
            code.push(nb);
            removed[leaf] = true;
            degree[nb] -= 1;
        }
        code
    }
}

/// Decodes a Prüfer sequence of length `n - 2` into a tree on `0..n`.
pub fn prufer_decode(n: usize, seq: &[usize]) -> Result<TreeGraph> {
    if n < 2 {
        return Err(out_of_range("n", n, ">= 2"));
    }
    if seq.len() != n - 2 {
        return Err(Error::InvalidGraph(format!(
            "Prüfer sequence for {n} vertices has length {}, got {}",
            n - 2,
            seq.len()
        )));
    }
    if let Some(&label) = seq.iter().find(|&&s| s >= n) {
        return Err(Error::LabelOutOfRange { label, n });
    }
    Ok(decode_unchecked(n, seq))
}

fn decode_unchecked(n: usize, seq: &[usize]) -> TreeGraph {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    // Linear-time decoding: `ptr` scans for the smallest leaf.
    let mut ptr = (0..n).find(|&v| degree[v] == 1).unwrap_or(0);
    let mut leaf = ptr;
    for &v in seq {
        edges.push((leaf, v));
        degree[v] -= 1;
        if v < ptr && degree[v] == 1 {
            leaf = v;
        } else {
            ptr += 1;
            while degree[ptr] != 1 {
                ptr += 1;
            }
            leaf = ptr;
        }
    }
    edges.push((leaf, n - 1));
    normalize(&mut edges);
    TreeGraph { n, edges }
}

/// Iterator over all labeled trees on `0..n`, in lexicographic Prüfer order.
#[derive(Clone, Debug)]
pub struct TreeIter {
    n: usize,
    code: Vec<usize>,
    started: bool,
    finished: bool,
}

impl Iterator for TreeIter {
    type Item = TreeGraph;

    fn next(&mut self) -> Option<TreeGraph> {
        if self.finished {
            return None;
        }
        if self.n == 1 {
            self.finished = true;
            return Some(TreeGraph::singleton());
        }
        if self.started {
            // Increment the code as a base-n number, last digit fastest.
            let mut pos = self.code.len();
            loop {
                if pos == 0 {
                    self.finished = true;
                    return None;
                }
                pos -= 1;
                self.code[pos] += 1;
                if self.code[pos] < self.n {
                    break;
                }
                self.code[pos] = 0;
            }
        }
        self.started = true;
        Some(decode_unchecked(self.n, &self.code))
    }
}

/// Number of labeled trees on `n` vertices, `n^(n-2)`.
pub fn tree_count(n: usize) -> u64 {
    if n <= 1 {
        1
    } else {
        (n as u64).pow(n as u32 - 2)
    }
}

/// All labeled trees on `n` vertices, `1 <= n <= 8`.
pub fn enumerate_trees(n: usize) -> Result<TreeIter> {
    enumerate_trees_bounded(n, DEFAULT_TREE_BOUND)
}

pub fn enumerate_trees_bounded(n: usize, n_max: usize) -> Result<TreeIter> {
    if n == 0 || n > n_max {
        return Err(out_of_range("n", n, format!("1..={n_max}")));
    }
    Ok(TreeIter {
        n,
        code: vec![0; n.saturating_sub(2)],
        started: false,
        finished: false,
    })
}

/// Draws a tree uniformly from the `n^(n-2)` labeled trees on `n` vertices.
pub fn sample_tree_uniform(n: usize, rng: &mut RandomStream) -> TreeGraph {
    if n <= 1 {
        return TreeGraph::singleton();
    }
    let code: Vec<usize> = (0..n - 2).map(|_| rng.below(n)).collect();
    decode_unchecked(n, &code)
}

/// A forest with exactly one marked root in every component.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RootedForest {
    n: usize,
    edges: Vec<(usize, usize)>,
    roots: Vec<usize>,
}

impl RootedForest {
    pub fn new(n: usize, mut edges: Vec<(usize, usize)>, mut roots: Vec<usize>) -> Result<Self> {
        let mut dsu = check_forest(n, &edges)?;
        roots.sort_unstable();
        roots.dedup();
        if let Some(&r) = roots.iter().find(|&&r| r >= n) {
            return Err(Error::LabelOutOfRange { label: r, n });
        }
        let mut rooted = vec![false; n];
        for &r in &roots {
            let c = dsu.find(r);
            if rooted[c] {
                return Err(Error::InvalidGraph(format!("component of {r} has two roots")));
            }
            rooted[c] = true;
        }
        if let Some(v) = (0..n).find(|&v| {
            let c = dsu.find(v);
            !rooted[c]
        }) {
            return Err(Error::InvalidGraph(format!("component of {v} has no root")));
        }
        normalize(&mut edges);
        Ok(Self { n, edges, roots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    /// Vertex sets of the trees of the forest, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut dsu = Dsu::new(self.n);
        for &(i, j) in &self.edges {
            dsu.union(i, j);
        }
        let mut by_rep: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for v in 0..self.n {
            let r = dsu.find(v);
            by_rep[r].push(v);
        }
        let mut comps: Vec<Vec<usize>> = by_rep.into_iter().filter(|c| !c.is_empty()).collect();
        comps.sort_unstable_by_key(|c| c[0]);
        comps
    }
}

/// Iterator over rooted forests on `0..n`.
///
/// Rooted forests on `n` vertices are in bijection with trees on `n + 1`
/// vertices: the extra vertex `n` is joined to every root.
#[derive(Clone, Debug)]
pub struct ForestIter {
    trees: TreeIter,
    n: usize,
}

impl Iterator for ForestIter {
    type Item = RootedForest;

    fn next(&mut self) -> Option<RootedForest> {
        let tree = self.trees.next()?;
        let n = self.n;
        let mut edges = Vec::with_capacity(n);
        let mut roots = Vec::new();
        for &(i, j) in tree.edges() {
            if j == n {
                roots.push(i);
            } else {
                edges.push((i, j));
            }
        }
        Some(RootedForest { n, edges, roots })
    }
}

/// Number of rooted forests on `n` vertices, `(n+1)^(n-1)`.
pub fn rooted_forest_count(n: usize) -> u64 {
    tree_count(n + 1)
}

/// All `(F, R)` pairs on `n` vertices with one root per tree, `1 <= n <= 7`.
pub fn enumerate_rooted_forests(n: usize) -> Result<ForestIter> {
    if n == 0 || n > MAX_FOREST_VERTICES {
        return Err(out_of_range("n", n, format!("1..={MAX_FOREST_VERTICES}")));
    }
    Ok(ForestIter {
        trees: enumerate_trees_bounded(n + 1, n + 1)?,
        n,
    })
}

/// A set partition; blocks are sorted and ordered by their first element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return Err(Error::InvalidGraph("empty block".into()));
            }
            b.sort_unstable();
            for &x in b.iter() {
                if !seen.insert(x) {
                    return Err(Error::InvalidGraph(format!("element {x} in two blocks")));
                }
            }
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Iterator over set partitions, driven by restricted growth strings.
#[derive(Clone, Debug)]
pub struct PartitionIter {
    ground: Vec<usize>,
    rgs: Vec<usize>,
    /// `maxes[i] = max(rgs[0..i])`
    maxes: Vec<usize>,
    started: bool,
    finished: bool,
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.finished {
            return None;
        }
        let m = self.ground.len();
        if m == 0 {
            self.finished = true;
            return Some(Partition { blocks: Vec::new() });
        }
        if self.started {
            let mut i = m - 1;
            loop {
                if i == 0 {
                    self.finished = true;
                    return None;
                }
                if self.rgs[i] <= self.maxes[i] {
                    self.rgs[i] += 1;
                    break;
                }
                i -= 1;
            }
            for k in i + 1..m {
                self.rgs[k] = 0;
            }
            for k in i + 1..m {
                self.maxes[k] = self.maxes[k - 1].max(self.rgs[k - 1]);
            }
        }
        self.started = true;
        let n_blocks = self.rgs.iter().max().map_or(0, |&x| x + 1);
        let mut blocks = vec![Vec::new(); n_blocks];
        for (k, &b) in self.rgs.iter().enumerate() {
            blocks[b].push(self.ground[k]);
        }
        Some(Partition { blocks })
    }
}

/// All partitions of the ground set `x` (at most 10 elements).
pub fn enumerate_partitions(x: &[usize]) -> Result<PartitionIter> {
    if x.len() > MAX_PARTITION_SIZE {
        return Err(out_of_range(
            "partition ground-set size",
            x.len(),
            format!("0..={MAX_PARTITION_SIZE}"),
        ));
    }
    let mut ground = x.to_vec();
    ground.sort_unstable();
    ground.dedup();
    let m = ground.len();
    Ok(PartitionIter {
        ground,
        rgs: vec![0; m],
        maxes: vec![0; m],
        started: false,
        finished: false,
    })
}

/// Reusable buffer for the connected-part recursion on bitmask-indexed subsets.
///
/// Given `J(S)` for every subset `S` of `{0..m}`, fills `J_c(S)` using
/// `J(S) = Σ_{B ∋ min S} J_c(B) J(S \ B)` with `J(∅) = 1`, which is the
/// partition recursion with the block of the smallest element singled out.
#[derive(Clone, Debug, Default)]
pub struct ConnectedParts {
    jc: Vec<f64>,
}

impl ConnectedParts {
    pub fn new() -> Self {
        Self::default()
    }

    /// `j` must have length `2^m`; `j[0]` is ignored and treated as 1.
    pub fn compute(&mut self, j: &[f64]) -> &[f64] {
        let size = j.len();
        debug_assert!(size.is_power_of_two());
        self.jc.clear();
        self.jc.resize(size, 0.0);
        let jval = |mask: usize| if mask == 0 { 1.0 } else { j[mask] };
        for s in 1..size {
            let low = s & s.wrapping_neg();
            let rest = s ^ low;
            let mut acc = jval(s);
            // proper subsets `sub` of `rest`; block = low | sub
            let mut sub = rest;
            while sub != 0 {
                sub = (sub - 1) & rest;
                let block = low | sub;
                acc -= self.jc[block] * jval(rest ^ sub);
            }
            self.jc[s] = acc;
        }
        &self.jc
    }

    pub fn values(&self) -> &[f64] {
        &self.jc
    }
}

/// Connected part `J_c(X)` of a subset function `J`.
///
/// `j` is called once for every nonempty subset of `x` (passed as a sorted slice).
pub fn connected_part<J>(mut j: J, x: &[usize]) -> Result<f64>
where
    J: FnMut(&[usize]) -> f64,
{
    let mut ground = x.to_vec();
    ground.sort_unstable();
    ground.dedup();
    let m = ground.len();
    if m == 0 || m > MAX_CONNECTED_SIZE {
        return Err(out_of_range("|X|", m, format!("1..={MAX_CONNECTED_SIZE}")));
    }
    let mut values = vec![1.0; 1 << m];
    let mut subset = Vec::with_capacity(m);
    for (mask, v) in values.iter_mut().enumerate().skip(1) {
        subset.clear();
        subset.extend((0..m).filter(|&k| mask >> k & 1 == 1).map(|k| ground[k]));
        *v = j(&subset);
    }
    let mut table = ConnectedParts::new();
    Ok(table.compute(&values)[(1 << m) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let mut out = Vec::new();
        for mask in 0u32..(1 << pairs.len()) {
            if mask.count_ones() as usize != n - 1 {
                continue;
            }
            let edges: Vec<_> = (0..pairs.len())
                .filter(|&k| mask >> k & 1 == 1)
                .map(|k| pairs[k])
                .collect();
            if check_forest(n, &edges).is_ok() {
                out.push(edges);
            }
        }
        out
    }

    fn brute_force_rooted_forests(n: usize) -> Vec<(Vec<(usize, usize)>, Vec<usize>)> {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let mut out = Vec::new();
        for emask in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = (0..pairs.len())
                .filter(|&k| emask >> k & 1 == 1)
                .map(|k| pairs[k])
                .collect();
            if check_forest(n, &edges).is_err() {
                continue;
            }
            for rmask in 0u32..(1 << n) {
                let roots: Vec<_> = (0..n).filter(|&v| rmask >> v & 1 == 1).collect();
                if RootedForest::new(n, edges.clone(), roots.clone()).is_ok() {
                    out.push((edges.clone(), roots));
                }
            }
        }
        out
    }

    fn bell(n: usize) -> u64 {
        // Bell triangle
        let mut row = vec![1u64];
        for _ in 0..n {
            let mut next = vec![*row.last().unwrap()];
            for &x in &row {
                let last = *next.last().unwrap();
                next.push(last + x);
            }
            row = next;
        }
        row[0]
    }

    #[test]
    fn small_tree_counts() {
        assert_eq!(enumerate_trees(1).unwrap().count(), 1);
        let two: Vec<_> = enumerate_trees(2).unwrap().collect();
        assert_eq!(two.len(), 1);
        assert_eq!(two[0].edges(), &[(0, 1)]);
        assert_eq!(enumerate_trees(4).unwrap().count(), 16);
        assert!(enumerate_trees(0).is_err());
        assert!(enumerate_trees(9).is_err());
    }

    #[test]
    fn trees_match_brute_force() {
        for n in 2..=5 {
            let mut ours: Vec<_> = enumerate_trees(n)
                .unwrap()
                .map(|t| t.edges().to_vec())
                .collect();
            ours.sort();
            let mut brute = brute_force_trees(n);
            brute.sort();
            assert_eq!(ours, brute, "n = {n}");
        }
    }

    #[test]
    fn tree_counts_are_cayley() {
        for n in 1..=7 {
            assert_eq!(enumerate_trees(n).unwrap().count() as u64, tree_count(n));
        }
    }

    #[test]
    fn prufer_small_cases() {
        // labels shifted to 0-based: n = 3, seq = (vertex 0)
        let t = prufer_decode(3, &[0]).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (0, 2)]);
        let t = prufer_decode(2, &[]).unwrap();
        assert_eq!(t.edges(), &[(0, 1)]);
        assert!(prufer_decode(3, &[3]).is_err());
        assert!(prufer_decode(1, &[]).is_err());
        assert!(prufer_decode(4, &[0]).is_err());
    }

    #[test]
    fn prufer_bijection_n3() {
        let mut brute = brute_force_trees(3);
        brute.sort();
        let mut decoded: Vec<_> = (0..3)
            .map(|s| prufer_decode(3, &[s]).unwrap().edges().to_vec())
            .collect();
        decoded.sort();
        assert_eq!(decoded, brute);
    }

    #[test]
    fn trees_come_in_prufer_order() {
        let codes: Vec<_> = enumerate_trees(5).unwrap().map(|t| t.prufer_encode()).collect();
        let mut sorted = codes.clone();
        sorted.sort();
        assert_eq!(codes, sorted);
        assert_eq!(codes[0], vec![0, 0, 0]);
    }

    #[test]
    fn prufer_roundtrip_random_n8() {
        let mut rng = RandomStream::new(99, 0);
        for _ in 0..1000 {
            let seq: Vec<usize> = (0..6).map(|_| rng.below(8)).collect();
            let t = prufer_decode(8, &seq).unwrap();
            assert_eq!(t.prufer_encode(), seq);
        }
    }

    #[test]
    fn bfs_edges_start_at_zero() {
        let t = TreeGraph::new(4, vec![(2, 3), (1, 3), (0, 2)]).unwrap();
        let bfs = t.bfs_edges();
        assert_eq!(bfs, vec![(0, 2), (2, 3), (3, 1)]);
        assert_eq!(t.non_edges(), vec![(0, 1), (0, 3), (1, 2)]);
    }

    #[test]
    fn invalid_trees_are_rejected() {
        assert!(TreeGraph::new(3, vec![(0, 1)]).is_err());
        assert!(TreeGraph::new(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(TreeGraph::new(3, vec![(0, 1), (1, 3)]).is_err());
    }

    #[test]
    fn uniform_tree_sampling_n2_and_n3() {
        let mut rng = RandomStream::new(1, 0);
        for _ in 0..10 {
            assert_eq!(sample_tree_uniform(2, &mut rng).edges(), &[(0, 1)]);
        }
        let draws = 30_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_tree_uniform(3, &mut rng)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 3);
        let sigma = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for (_, c) in counts {
            assert!((c as f64 - draws as f64 / 3.0).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn uniform_tree_sampling_n5_chi_square() {
        let support: Vec<TreeGraph> = enumerate_trees(5).unwrap().collect();
        let index: std::collections::HashMap<_, _> =
            support.iter().cloned().enumerate().map(|(k, t)| (t, k)).collect();
        let mut counts = vec![0usize; support.len()];
        let mut rng = RandomStream::new(2024, 3);
        let draws = 50_000;
        for _ in 0..draws {
            counts[index[&sample_tree_uniform(5, &mut rng)]] += 1;
        }
        let expected = draws as f64 / 125.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square, 124 degrees of freedom, 1% upper critical value
        assert!(chi2 < 163.6, "chi2 = {chi2}");
    }

    #[test]
    fn rooted_forest_small_cases() {
        let one: Vec<_> = enumerate_rooted_forests(1).unwrap().collect();
        assert_eq!(one.len(), 1);
        assert!(one[0].edges().is_empty());
        assert_eq!(one[0].roots(), &[0]);

        let mut two: Vec<_> = enumerate_rooted_forests(2)
            .unwrap()
            .map(|f| (f.edges().to_vec(), f.roots().to_vec()))
            .collect();
        two.sort();
        assert_eq!(
            two,
            vec![
                (vec![], vec![0, 1]),
                (vec![(0, 1)], vec![0]),
                (vec![(0, 1)], vec![1]),
            ]
        );
        assert_eq!(enumerate_rooted_forests(3).unwrap().count(), 16);
        assert!(enumerate_rooted_forests(0).is_err());
        assert!(enumerate_rooted_forests(8).is_err());
    }

    #[test]
    fn rooted_forests_match_brute_force() {
        for n in 1..=4 {
            let mut ours: Vec<_> = enumerate_rooted_forests(n)
                .unwrap()
                .map(|f| (f.edges().to_vec(), f.roots().to_vec()))
                .collect();
            ours.sort();
            let mut brute = brute_force_rooted_forests(n);
            brute.sort();
            assert_eq!(ours, brute, "n = {n}");
        }
    }

    #[test]
    fn every_forest_tree_has_one_root() {
        for n in 1..=6 {
            for f in enumerate_rooted_forests(n).unwrap() {
                for comp in f.components() {
                    let roots = comp.iter().filter(|v| f.roots().contains(v)).count();
                    assert_eq!(roots, 1);
                }
            }
        }
    }

    #[test]
    fn forest_counts() {
        for n in 1..=7 {
            assert_eq!(
                enumerate_rooted_forests(n).unwrap().count() as u64,
                rooted_forest_count(n)
            );
        }
    }

    #[test]
    fn partition_counts_are_bell() {
        assert_eq!(enumerate_partitions(&[4]).unwrap().count(), 1);
        assert_eq!(enumerate_partitions(&[0, 1, 2]).unwrap().count(), 5);
        assert_eq!(enumerate_partitions(&[0, 1, 2, 3, 4]).unwrap().count(), 52);
        for m in 0..=8 {
            let x: Vec<usize> = (0..m).collect();
            assert_eq!(enumerate_partitions(&x).unwrap().count() as u64, bell(m));
        }
        assert!(enumerate_partitions(&(0..11).collect::<Vec<_>>()).is_err());
    }

    #[test]
    fn partitions_are_distinct_and_cover() {
        let x = [3, 5, 8, 9, 11];
        let parts: Vec<_> = enumerate_partitions(&x).unwrap().collect();
        let set: std::collections::HashSet<_> = parts.iter().cloned().collect();
        assert_eq!(set.len(), parts.len());
        for p in &parts {
            let mut all: Vec<usize> = p.blocks().iter().flatten().copied().collect();
            all.sort();
            assert_eq!(all, x);
        }
    }

    #[test]
    fn connected_part_hard_core_pairs() {
        // single point
        assert_eq!(connected_part(|_| 0.7, &[3]).unwrap(), 0.7);
        // two overlapping hard cores: J({1,2}) = 0
        let close = |s: &[usize]| if s.len() == 2 { 0.0 } else { 1.0 };
        assert_eq!(connected_part(close, &[0, 1]).unwrap(), -1.0);
        let far = |_: &[usize]| 1.0;
        assert_eq!(connected_part(far, &[0, 1]).unwrap(), 0.0);
        assert!(connected_part(far, &[]).is_err());
        assert!(connected_part(far, &(0..9).collect::<Vec<_>>()).is_err());
    }

    fn synthetic_j(seed: u64, m: usize) -> Vec<f64> {
        let mut rng = RandomStream::new(seed, 0);
        let mut j = vec![1.0; 1 << m];
        for v in j.iter_mut().skip(1) {
            *v = rng.uniform_in(-1.0, 2.0);
        }
        j
    }

    proptest! {
        #[test]
        fn partition_resum_reproduces_j(seed in any::<u64>(), m in 1usize..=6) {
            let j = synthetic_j(seed, m);
            let mut table = ConnectedParts::new();
            let jc = table.compute(&j).to_vec();
            let x: Vec<usize> = (0..m).collect();
            let mut total = 0.0;
            for p in enumerate_partitions(&x).unwrap() {
                total += p
                    .blocks()
                    .iter()
                    .map(|b| jc[b.iter().map(|&k| 1usize << k).sum::<usize>()])
                    .product::<f64>();
            }
            let full = j[(1 << m) - 1];
            prop_assert!((total - full).abs() <= 1e-12 * full.abs().max(1.0));
        }

        #[test]
        fn product_form_has_no_connected_part(seed in any::<u64>(), m in 2usize..=6, split in 1usize..6) {
            let split = split.min(m - 1);
            let mut rng = RandomStream::new(seed, 1);
            let weights: Vec<f64> = (0..m).map(|_| rng.uniform_in(0.2, 1.5)).collect();
            let pair: Vec<f64> = (0..m * m).map(|_| rng.uniform_in(0.2, 1.5)).collect();
            // J(S) factorizes across the bipartition {0..split} | {split..m}
            let j = |s: &[usize]| {
                let mut v: f64 = s.iter().map(|&k| weights[k]).product();
                for (a, &i) in s.iter().enumerate() {
                    for &k in &s[a + 1..] {
                        if (i < split) == (k < split) {
                            v *= pair[i * m + k];
                        }
                    }
                }
                v
            };
            let x: Vec<usize> = (0..m).collect();
            let jc = connected_part(j, &x).unwrap();
            prop_assert!(jc.abs() < 1e-12);
        }

        #[test]
        fn prufer_roundtrip(n in 2usize..=8, seed in any::<u64>()) {
            let mut rng = RandomStream::new(seed, 0);
            let seq: Vec<usize> = (0..n - 2).map(|_| rng.below(n)).collect();
            prop_assert_eq!(prufer_decode(n, &seq).unwrap().prufer_encode(), seq);
        }
    }
}
