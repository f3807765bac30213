//! Simple undirected graphs, configuration-model sampling and the edge-list
//! file format.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// A simple undirected graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Graph with `vertex_count` vertices and no edges.
    pub fn empty(vertex_count: usize) -> Self {
        Self { adjacency: vec![Vec::new(); vertex_count] }
    }

    /// Builds a graph from an edge list. Self-loops, duplicate edges and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); vertex_count];
        for &(u, v) in edges {
            if u >= vertex_count || v >= vertex_count {
                return Err(Error::Domain(format!(
                    "edge ({u}, {v}) out of range for {vertex_count} vertices"
                )));
            }
            if u == v {
                return Err(Error::Domain(format!("self-loop at vertex {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            if nbrs.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Domain(format!("duplicate edge at vertex {u}")));
            }
        }
        Ok(Self { adjacency })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, nbrs)| nbrs.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn isolated_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.vertex_count()).filter(|&i| self.adjacency[i].is_empty())
    }

    /// Connected components, each as a sorted vertex list, ordered by their
    /// smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.vertex_count()];
        let mut out = Vec::new();
        for start in 0..self.vertex_count() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut next = 0;
            while next < comp.len() {
                for &u in &self.adjacency[comp[next]] {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                    }
                }
                next += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Writes `V E` followed by one `u v` line per edge (`u < v`).
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.vertex_count(), self.edge_count())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Parses the edge-list format written by [`Graph::write_edge_list`].
    pub fn parse_edge_list(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("missing header line")?;
        let mut fields = header.split_whitespace();
        let v: usize = parse_field(fields.next(), "vertex count")?;
        let e: usize = parse_field(fields.next(), "edge count")?;
        let mut edges = Vec::with_capacity(e);
        for (k, line) in lines.enumerate() {
            let mut fields = line.split_whitespace();
            let a: usize = parse_field(fields.next(), "edge endpoint")?;
            let b: usize = parse_field(fields.next(), "edge endpoint")?;
            if a >= b {
                return Err(format!("edge line {} must satisfy u < v, got {a} {b}", k + 2));
            }
            edges.push((a, b));
        }
        if edges.len() != e {
            return Err(format!("header declares {e} edges, found {}", edges.len()));
        }
        Graph::from_edges(v, &edges).map_err(|err| err.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text)
            .map_err(|message| Error::Parse { path: path.to_path_buf(), message })
    }
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>, what: &str) -> std::result::Result<T, String> {
    let s = s.ok_or_else(|| format!("missing {what}"))?;
    s.parse().map_err(|_| format!("invalid {what}: {s:?}"))
}

/// Configuration model: uniform stub matching, then erasure of self-loops
/// and repeated edges. The result is always simple; realized degrees fall
/// short of `seq` only at erased stubs.
pub fn sample_graph<R: Rng + ?Sized>(seq: &[usize], rng: &mut R) -> Result<Graph> {
    let total: usize = seq.iter().sum();
    if total % 2 == 1 {
        return Err(Error::Domain(format!("degree sum {total} is odd")));
    }
    let mut stubs: Vec<usize> =
        seq.iter().enumerate().flat_map(|(i, &d)| std::iter::repeat_n(i, d)).collect();
    stubs.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = stubs
        .chunks_exact(2)
        .filter(|pair| pair[0] != pair[1])
        .map(|pair| (pair[0].min(pair[1]), pair[0].max(pair[1])))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    Graph::from_edges(seq.len(), &edges)
}
