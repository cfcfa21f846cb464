//! Undirected binary networks with categorical node attributes.
//!
//! Storage is a dense bit-packed adjacency (one bitset row per node) plus a
//! degree array and an edge list with positional index, so the tie/no-tie
//! sampler gets O(1) edge selection and O(n/64) neighbor intersections.
//! Node indices are 0-based internally; edge-list files are 1-based.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const NO_EDGE: u32 = u32::MAX;

/// An undirected binary network on `n` nodes. The adjacency is kept
/// symmetric with a zero diagonal by construction; attributes are
/// integer category codes, one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    degrees: Vec<u32>,
    edges: Vec<(u32, u32)>,
    edge_pos: Vec<u32>,
    attrs: BTreeMap<String, Vec<u32>>,
}

impl Network {
    /// Empty network on `n` nodes.
    pub fn empty(n: usize) -> Self {
        assert!(n >= 1, "network needs at least one node");
        let words = n.div_ceil(64);
        Network {
            n,
            words,
            rows: vec![0; n * words],
            degrees: vec![0; n],
            edges: Vec::new(),
            edge_pos: vec![NO_EDGE; n * (n - 1) / 2],
            attrs: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dyad_count(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i] as usize
    }

    /// Canonical index of dyad (i, j), i < j, in row-major order over the
    /// strict upper triangle.
    pub fn dyad_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    fn set_bit(&mut self, i: usize, j: usize, on: bool) {
        let w = i * self.words + j / 64;
        let mask = 1u64 << (j % 64);
        if on {
            self.rows[w] |= mask;
        } else {
            self.rows[w] &= !mask;
        }
    }

    /// Flip dyad (i, j). Returns true when the dyad is an edge afterwards.
    pub fn toggle(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j || i >= self.n || j >= self.n {
            return Err(Error::InvalidDyad { i, j });
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let idx = self.dyad_index(a, b);
        let adding = !self.has_edge(a, b);
        self.set_bit(a, b, adding);
        self.set_bit(b, a, adding);
        if adding {
            self.degrees[a] += 1;
            self.degrees[b] += 1;
            self.edge_pos[idx] = self.edges.len() as u32;
            self.edges.push((a as u32, b as u32));
        } else {
            self.degrees[a] -= 1;
            self.degrees[b] -= 1;
            let pos = self.edge_pos[idx] as usize;
            self.edges.swap_remove(pos);
            self.edge_pos[idx] = NO_EDGE;
            if pos < self.edges.len() {
                let (mi, mj) = self.edges[pos];
                let moved = self.dyad_index(mi as usize, mj as usize);
                self.edge_pos[moved] = pos as u32;
            }
        }
        Ok(adding)
    }

    /// Set dyad (i, j) to `on`, idempotently.
    pub fn set_edge(&mut self, i: usize, j: usize, on: bool) -> Result<()> {
        if i == j || i >= self.n || j >= self.n {
            return Err(Error::InvalidDyad { i, j });
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if self.has_edge(a, b) != on {
            self.toggle(a, b)?;
        }
        Ok(())
    }

    /// Number of common neighbors of i and j.
    #[inline]
    pub fn shared_partners(&self, i: usize, j: usize) -> usize {
        let ri = i * self.words;
        let rj = j * self.words;
        let mut count = 0u32;
        for w in 0..self.words {
            count += (self.rows[ri + w] & self.rows[rj + w]).count_ones();
        }
        count as usize
    }

    /// Visit every common neighbor of i and j.
    #[inline]
    pub fn for_common_neighbors<F: FnMut(usize)>(&self, i: usize, j: usize, mut f: F) {
        let ri = i * self.words;
        let rj = j * self.words;
        for w in 0..self.words {
            let mut bits = self.rows[ri + w] & self.rows[rj + w];
            while bits != 0 {
                let t = bits.trailing_zeros() as usize;
                f(w * 64 + t);
                bits &= bits - 1;
            }
        }
    }

    /// Attach an integer-valued node attribute.
    pub fn set_attribute(&mut self, name: &str, values: Vec<u32>) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::Config(format!(
                "attribute `{name}` has {} values for {} nodes",
                values.len(),
                self.n
            )));
        }
        self.attrs.insert(name.to_string(), values);
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Result<&[u32]> {
        self.attrs
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingAttribute(name.to_string()))
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attrs.keys().map(String::as_str)
    }

    /// Parse a 1-based whitespace-separated edge list. Lines starting with
    /// `#` and blank lines are skipped; duplicate edges are accepted
    /// idempotently.
    pub fn parse_edge_list(text: &str, n: usize) -> Result<Self> {
        let mut net = Network::empty(n);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next_index = |part: Option<&str>| -> Result<usize> {
                let tok = part.ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected two node indices, got `{line}`"),
                })?;
                let v: i64 = tok.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("`{tok}` is not an integer"),
                })?;
                if v < 1 || v as usize > n {
                    return Err(Error::NodeRange {
                        line: lineno + 1,
                        index: v,
                        n,
                    });
                }
                Ok(v as usize - 1)
            };
            let i = next_index(parts.next())?;
            let j = next_index(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("trailing tokens in `{line}`"),
                });
            }
            if i == j {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("self-link {} {}", i + 1, j + 1),
                });
            }
            net.set_edge(i, j, true)?;
        }
        Ok(net)
    }

    /// Load an edge list and optional attribute files (one integer per
    /// line; line k is node k's category).
    pub fn load(
        edge_list_path: &Path,
        n: usize,
        attr_paths: &[(String, std::path::PathBuf)],
    ) -> Result<Self> {
        let text = std::fs::read_to_string(edge_list_path)?;
        let mut net = Network::parse_edge_list(&text, n)?;
        for (name, path) in attr_paths {
            let text = std::fs::read_to_string(path)?;
            let values = parse_attribute(&text)?;
            net.set_attribute(name, values)?;
        }
        Ok(net)
    }

    /// Emit edges as a 1-based edge list in canonical dyad order.
    pub fn to_edge_list_string(&self) -> String {
        let mut sorted: Vec<_> = self.edges.clone();
        sorted.sort_unstable();
        let mut out = String::new();
        for (i, j) in sorted {
            writeln!(out, "{} {}", i + 1, j + 1).unwrap();
        }
        out
    }

    /// Hex digest of the canonical network content (node count, sorted
    /// edges, attributes); used to key cache files and manifests.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        let mut sorted: Vec<_> = self.edges.clone();
        sorted.sort_unstable();
        for (i, j) in sorted {
            hasher.update(i.to_le_bytes());
            hasher.update(j.to_le_bytes());
        }
        for (name, values) in &self.attrs {
            hasher.update(name.as_bytes());
            for v in values {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Consistency audit of the redundant state (bitsets, degrees, edge
    /// list, positional index). Cheap enough for tests, not for hot loops.
    pub fn check_invariants(&self) -> Result<()> {
        let mut edge_total = 0usize;
        for i in 0..self.n {
            if self.has_edge(i, i) {
                return Err(Error::Config(format!("self-link stored at node {i}")));
            }
            let mut deg = 0;
            for j in 0..self.n {
                if self.has_edge(i, j) {
                    if !self.has_edge(j, i) {
                        return Err(Error::Config(format!("asymmetry at ({i}, {j})")));
                    }
                    deg += 1;
                }
            }
            if deg != self.degrees[i] as usize {
                return Err(Error::Config(format!("degree mismatch at node {i}")));
            }
            edge_total += deg;
        }
        if edge_total != 2 * self.edges.len() {
            return Err(Error::Config("edge list length mismatch".into()));
        }
        for (pos, &(i, j)) in self.edges.iter().enumerate() {
            let idx = self.dyad_index(i as usize, j as usize);
            if !self.has_edge(i as usize, j as usize) || self.edge_pos[idx] as usize != pos {
                return Err(Error::Config(format!("edge index mismatch at ({i}, {j})")));
            }
        }
        Ok(())
    }
}

/// Parse an attribute file: one non-negative integer per line.
pub fn parse_attribute(text: &str) -> Result<Vec<u32>> {
    let mut values = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: u32 = line.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("`{line}` is not a non-negative integer"),
        })?;
        values.push(v);
    }
    Ok(values)
}

/// The ordered set of dyads {(i, j) : i < j} of an undirected network.
#[derive(Debug, Clone)]
pub struct DyadSet {
    n: usize,
    pairs: Vec<(u32, u32)>,
}

impl DyadSet {
    /// All n(n-1)/2 dyads in canonical row-major order.
    pub fn all(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i as u32, j as u32));
            }
        }
        DyadSet { n, pairs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(i, j)| (i as usize, j as usize))
    }
}
