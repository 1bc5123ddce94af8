//! Interaction graphs, local Hamiltonians and the JSON model format.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{pauli_string, Matrix, SupportedOperator, C64};

/// Distance between vertices in different connected components.
pub const UNREACHABLE: usize = usize::MAX;

/// Relative slack allowed when checking normalization sums that were rescaled to exactly one.
const NORMALIZATION_SLACK: f64 = 1e-12;

/// Undirected simple graph with all-pairs shortest-path distances.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinGraph {
    local_dim: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    dist: Vec<Vec<usize>>,
}

impl SpinGraph {
    pub fn new(num_vertices: usize, local_dim: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if local_dim < 2 {
            return Err(Error::InvalidModel(format!("local dimension {local_dim} must be at least 2")));
        }
        let mut adjacency = vec![Vec::new(); num_vertices];
        let mut clean = Vec::new();
        for &(u, v) in edges {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::InvalidModel(format!("edge ({u}, {v}) references a missing vertex")));
            }
            if u == v {
                return Err(Error::InvalidModel(format!("self loop at vertex {u}")));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            if !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
                clean.push((a, b));
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        clean.sort_unstable();
        let dist = (0..num_vertices).map(|s| bfs(&adjacency, s)).collect();
        Ok(Self { local_dim, edges: clean, adjacency, dist })
    }

    /// Open chain `0 - 1 - ... - (n-1)`.
    pub fn chain(n: usize, local_dim: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, local_dim, &edges)
    }

    /// Square-lattice patch on the listed `(row, col)` cells; vertex `i` is `cells[i]`.
    pub fn grid_cells(cells: &[(usize, usize)], local_dim: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, &(r1, c1)) in cells.iter().enumerate() {
            for (j, &(r2, c2)) in cells.iter().enumerate().skip(i + 1) {
                if r1.abs_diff(r2) + c1.abs_diff(c2) == 1 {
                    edges.push((i, j));
                }
            }
        }
        Self::new(cells.len(), local_dim, &edges)
    }

    /// Full `rows × cols` square lattice, vertex `r * cols + c`.
    pub fn grid(rows: usize, cols: usize, local_dim: usize) -> Result<Self> {
        let cells: Vec<_> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
        Self::grid_cells(&cells, local_dim)
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).collect()
    }

    /// Shortest-path distance, [`UNREACHABLE`] across components.
    pub fn distance(&self, u: usize, v: usize) -> usize {
        self.dist[u][v]
    }

    /// `min_{a∈A, b∈B} d(a, b)`; [`UNREACHABLE`] if either set is empty.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> usize {
        a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).map(|(x, y)| self.dist[x][y]).min().unwrap_or(UNREACHABLE)
    }

    /// Largest pairwise distance inside `x` (0 for a single vertex).
    pub fn diameter(&self, x: &[usize]) -> usize {
        x.iter().flat_map(|&a| x.iter().map(move |&b| (a, b))).map(|(a, b)| self.dist[a][b]).max().unwrap_or(0)
    }

    /// `V \ region`, ascending.
    pub fn complement(&self, region: &[usize]) -> Vec<usize> {
        (0..self.num_vertices()).filter(|v| !region.contains(v)).collect()
    }

    /// Vertices within distance `radius` of `region`.
    pub fn ball(&self, region: &[usize], radius: usize) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| region.iter().any(|&x| self.dist[x][v] <= radius)).collect()
    }
}

fn bfs(adjacency: &[Vec<usize>], source: usize) -> Vec<usize> {
    let mut dist = vec![UNREACHABLE; adjacency.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &w in &adjacency[u] {
            if dist[w] == UNREACHABLE {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Locality assumption on the interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionClass {
    /// Every term has graph diameter at most `r`.
    FiniteRange(usize),
    /// `Σ_{X∋v, diam X ≥ R} ‖h_X‖ ≤ R^{-α}` for every vertex and `R ≥ 1`.
    PowerLaw(f64),
}

/// One local term `h_X`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionTerm {
    pub operator: SupportedOperator,
    pub norm: f64,
    pub diameter: usize,
}

impl InteractionTerm {
    pub fn support(&self) -> &[usize] {
        self.operator.support()
    }
}

/// `H = Σ_X h_X` together with the inverse temperature it is studied at.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    graph: SpinGraph,
    terms: Vec<InteractionTerm>,
    class: InteractionClass,
    beta: f64,
    k: usize,
}

impl Hamiltonian {
    /// Validates and canonicalizes a list of local operators. Operators sharing a
    /// support are summed into one term; terms are ordered by support.
    pub fn new(graph: SpinGraph, operators: Vec<SupportedOperator>, class: InteractionClass, beta: f64) -> Result<Self> {
        let ham = Self::assemble(graph, operators, class, beta)?;
        ham.check_normalization()?;
        Ok(ham)
    }

    /// Like [`Hamiltonian::new`], but when the normalization fails the energy unit is
    /// changed: every term is divided by the measured local strength `g` and `β` is
    /// multiplied by `g`, leaving the Gibbs state unchanged. Returns the factor `g`
    /// (1 when no rescaling was needed).
    pub fn new_rescaled(
        graph: SpinGraph,
        operators: Vec<SupportedOperator>,
        class: InteractionClass,
        beta: f64,
    ) -> Result<(Self, f64)> {
        let ham = Self::assemble(graph, operators, class, beta)?;
        let g = ham.normalization_factor();
        if g <= 1.0 + NORMALIZATION_SLACK {
            return Ok((ham, 1.0));
        }
        let ops = ham.terms.iter().map(|t| t.operator.scale(1.0 / g)).collect();
        let scaled = Self::new(ham.graph, ops, class, beta * g)?;
        Ok((scaled, g))
    }

    fn assemble(graph: SpinGraph, operators: Vec<SupportedOperator>, class: InteractionClass, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidModel(format!("beta must be positive and finite, got {beta}")));
        }
        match class {
            InteractionClass::PowerLaw(alpha) if !(alpha.is_finite() && alpha > 0.0) => {
                return Err(Error::InvalidModel(format!("power-law exponent must be positive, got {alpha}")));
            }
            _ => {}
        }
        let n = graph.num_vertices();
        let mut merged: BTreeMap<Vec<usize>, SupportedOperator> = BTreeMap::new();
        for op in operators {
            if op.support().is_empty() {
                return Err(Error::InvalidModel("term with empty support".into()));
            }
            if op.local_dim() != graph.local_dim() {
                return Err(Error::InvalidModel(format!(
                    "term on {:?} has local dimension {}, model has {}",
                    op.support(),
                    op.local_dim(),
                    graph.local_dim()
                )));
            }
            if let Some(&v) = op.support().iter().find(|&&v| v >= n) {
                return Err(Error::InvalidModel(format!("term references vertex {v}, model has {n}")));
            }
            if !op.is_hermitian() {
                return Err(Error::NotHermitian { deviation: op.hermitian_deviation() });
            }
            let key = op.support().to_vec();
            let entry = match merged.remove(&key) {
                Some(prev) => prev.add(&op)?,
                None => op,
            };
            merged.insert(key, entry);
        }
        let mut terms = Vec::with_capacity(merged.len());
        for (support, operator) in merged {
            let norm = operator.op_norm();
            if norm == 0.0 {
                continue;
            }
            let diameter = graph.diameter(&support);
            if diameter == UNREACHABLE {
                return Err(Error::InvalidModel(format!("term support {support:?} is not connected in the graph")));
            }
            if let InteractionClass::FiniteRange(r) = class {
                if diameter > r {
                    return Err(Error::InvalidModel(format!(
                        "term on {support:?} has diameter {diameter}, above the range {r}"
                    )));
                }
            }
            terms.push(InteractionTerm { operator, norm, diameter });
        }
        let k = terms.iter().map(|t| t.support().len()).max().unwrap_or(0);
        Ok(Self { graph, terms, class, beta, k })
    }

    /// Smallest `g` such that the terms divided by `g` satisfy the normalization.
    fn normalization_factor(&self) -> f64 {
        let mut g = self.vertex_sums().into_iter().fold(0.0, f64::max);
        if let InteractionClass::PowerLaw(alpha) = self.class {
            for v in 0..self.graph.num_vertices() {
                for r in 1..=self.max_diameter() {
                    g = g.max(self.vertex_tail(v, r) * (r as f64).powf(alpha));
                }
            }
        }
        g
    }

    fn check_normalization(&self) -> Result<()> {
        for (v, s) in self.vertex_sums().into_iter().enumerate() {
            if s > 1.0 + NORMALIZATION_SLACK {
                return Err(Error::Normalization { vertex: v, value: s, limit: 1.0 });
            }
        }
        if let InteractionClass::PowerLaw(alpha) = self.class {
            for v in 0..self.graph.num_vertices() {
                for r in 1..=self.max_diameter() {
                    let limit = (r as f64).powf(-alpha);
                    let value = self.vertex_tail(v, r);
                    if value > limit * (1.0 + NORMALIZATION_SLACK) {
                        return Err(Error::Normalization { vertex: v, value, limit });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &SpinGraph {
        &self.graph
    }

    pub fn terms(&self) -> &[InteractionTerm] {
        &self.terms
    }

    pub fn term(&self, i: usize) -> &InteractionTerm {
        &self.terms[i]
    }

    pub fn class(&self) -> InteractionClass {
        self.class
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The same interaction at another inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidModel(format!("beta must be positive and finite, got {beta}")));
        }
        let mut h = self.clone();
        h.beta = beta;
        Ok(h)
    }

    /// Largest support size.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_vertices(&self) -> usize {
        self.graph.num_vertices()
    }

    pub fn local_dim(&self) -> usize {
        self.graph.local_dim()
    }

    pub fn max_diameter(&self) -> usize {
        self.terms.iter().map(|t| t.diameter).max().unwrap_or(0)
    }

    /// Interaction range: `r` for finite-range models, the largest term diameter otherwise.
    pub fn range(&self) -> usize {
        match self.class {
            InteractionClass::FiniteRange(r) => r,
            InteractionClass::PowerLaw(_) => self.max_diameter(),
        }
    }

    /// `Σ_{X∋v} ‖h_X‖` for every vertex.
    pub fn vertex_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.num_vertices()];
        for t in &self.terms {
            for &v in t.support() {
                sums[v] += t.norm;
            }
        }
        sums
    }

    /// `Σ_{X∋v, diam X ≥ r} ‖h_X‖`.
    pub fn vertex_tail(&self, v: usize, r: usize) -> f64 {
        self.terms.iter().filter(|t| t.diameter >= r && t.support().contains(&v)).map(|t| t.norm).sum()
    }

    /// `g̃_l = max_v Σ_{X∋v, diam X = l} ‖h_X‖` for `l = 0..=max diameter`.
    pub fn locality_profile(&self) -> Vec<f64> {
        let dmax = self.max_diameter();
        let mut per_vertex = vec![vec![0.0; dmax + 1]; self.num_vertices()];
        for t in &self.terms {
            for &v in t.support() {
                per_vertex[v][t.diameter] += t.norm;
            }
        }
        (0..=dmax).map(|l| per_vertex.iter().map(|row| row[l]).fold(0.0, f64::max)).collect()
    }

    /// For each `R = 1..=max diameter`, the pair `(Σ_{l≥R} g̃_l, R^{-α})`. Power-law models only.
    pub fn tail_profile(&self) -> Option<Vec<(usize, f64, f64)>> {
        let InteractionClass::PowerLaw(alpha) = self.class else { return None };
        let g = self.locality_profile();
        Some(
            (1..g.len())
                .map(|r| {
                    let tail: f64 = g[r..].iter().sum();
                    (r, tail, (r as f64).powf(-alpha))
                })
                .collect(),
        )
    }

    /// Indices of terms with support inside `region`.
    pub fn terms_within(&self, region: &[usize]) -> Vec<usize> {
        (0..self.terms.len()).filter(|&i| self.terms[i].support().iter().all(|v| region.contains(v))).collect()
    }

    /// `H_L = Σ_{X⊆L} h_X`, as an operator on `L` (sorted).
    pub fn restricted(&self, region: &[usize]) -> Result<SupportedOperator> {
        let mut l = region.to_vec();
        l.sort_unstable();
        l.dedup();
        let mut dense = Matrix::zeros(self.local_dim().pow(l.len() as u32), self.local_dim().pow(l.len() as u32));
        for i in self.terms_within(&l) {
            dense += self.terms[i].operator.embed(&l)?.into_matrix();
        }
        SupportedOperator::new(l, self.local_dim(), dense)
    }

    /// The full Hamiltonian on every vertex.
    pub fn full(&self) -> Result<SupportedOperator> {
        self.restricted(&self.graph.vertices())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    local_dim: usize,
    vertices: usize,
    edges: Vec<[usize; 2]>,
    interaction_class: InteractionClass,
    beta: f64,
    terms: Vec<TermFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermFile {
    support: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pauli: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<[f64; 2]>>,
}

/// How to treat a model whose terms violate the normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormalizationPolicy {
    /// Reject the model.
    #[default]
    Strict,
    /// Rescale the energy unit (terms / g, β · g).
    Rescale,
}

/// A parsed model plus the energy rescaling factor that was applied.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub hamiltonian: Hamiltonian,
    pub rescale_factor: f64,
}

fn term_operator(t: &TermFile, d: usize) -> Result<SupportedOperator> {
    let coeff = t.coeff.unwrap_or(1.0);
    let dim = d.pow(t.support.len() as u32);
    let matrix = match (&t.pauli, &t.matrix) {
        (Some(p), None) => {
            if d != 2 {
                return Err(Error::Parse("Pauli terms need local_dim 2".into()));
            }
            if p.chars().count() != t.support.len() {
                return Err(Error::Parse(format!("Pauli string '{p}' does not match support {:?}", t.support)));
            }
            pauli_string(p)?
        }
        (None, Some(entries)) => {
            if entries.len() != dim * dim {
                return Err(Error::Parse(format!(
                    "matrix on {:?} has {} entries, expected {}",
                    t.support,
                    entries.len(),
                    dim * dim
                )));
            }
            let data: Vec<C64> = entries.iter().map(|[re, im]| C64::new(*re, *im)).collect();
            Matrix::from_row_slice(dim, dim, &data)
        }
        _ => return Err(Error::Parse(format!("term on {:?} needs exactly one of 'pauli' or 'matrix'", t.support))),
    };
    SupportedOperator::from_ordered(t.support.clone(), d, matrix.scale(coeff))
}

/// Parses the JSON model format.
pub fn parse_model(text: &str, policy: NormalizationPolicy) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let edges: Vec<(usize, usize)> = file.edges.iter().map(|[u, v]| (*u, *v)).collect();
    let graph = SpinGraph::new(file.vertices, file.local_dim, &edges)?;
    let ops = file.terms.iter().map(|t| term_operator(t, file.local_dim)).collect::<Result<Vec<_>>>()?;
    match policy {
        NormalizationPolicy::Strict => Ok(LoadedModel {
            hamiltonian: Hamiltonian::new(graph, ops, file.interaction_class, file.beta)?,
            rescale_factor: 1.0,
        }),
        NormalizationPolicy::Rescale => {
            let (hamiltonian, rescale_factor) =
                Hamiltonian::new_rescaled(graph, ops, file.interaction_class, file.beta)?;
            Ok(LoadedModel { hamiltonian, rescale_factor })
        }
    }
}

/// Reads a model file from disk.
pub fn load_model(path: impl AsRef<Path>, policy: NormalizationPolicy) -> Result<LoadedModel> {
    parse_model(&std::fs::read_to_string(path)?, policy)
}

/// Serializes a Hamiltonian to the JSON model format, every term as an explicit matrix.
pub fn to_model_json(h: &Hamiltonian) -> String {
    let terms = h
        .terms
        .iter()
        .map(|t| {
            let m = t.operator.matrix();
            let n = m.nrows();
            let entries = (0..n).flat_map(|r| (0..n).map(move |c| [m[(r, c)].re, m[(r, c)].im])).collect();
            TermFile { support: t.support().to_vec(), pauli: None, coeff: None, matrix: Some(entries) }
        })
        .collect();
    let file = ModelFile {
        local_dim: h.local_dim(),
        vertices: h.num_vertices(),
        edges: h.graph.edges().iter().map(|&(u, v)| [u, v]).collect(),
        interaction_class: h.class,
        beta: h.beta,
        terms,
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TFIM3: &str = r#"{
        "local_dim": 2, "vertices": 3, "edges": [[0,1],[1,2]],
        "interaction_class": {"finite_range": 1}, "beta": 0.001,
        "terms": [
            {"support": [0,1], "pauli": "ZZ", "coeff": 0.3},
            {"support": [1,2], "pauli": "ZZ", "coeff": 0.3},
            {"support": [0], "pauli": "X", "coeff": 0.4},
            {"support": [1], "pauli": "X", "coeff": 0.4},
            {"support": [2], "pauli": "X", "coeff": 0.4}
        ]}"#;

    #[test]
    fn parses_tfim_chain() {
        let m = parse_model(TFIM3, NormalizationPolicy::Strict).unwrap().hamiltonian;
        assert_eq!(m.terms().len(), 5);
        assert_eq!(m.k(), 2);
        assert_eq!(m.range(), 1);
        let sums = m.vertex_sums();
        assert!((sums[1] - 1.0).abs() < 1e-15);
        assert!((sums[0] - 0.7).abs() < 1e-15);
        // canonical order: by support
        let supports: Vec<_> = m.terms().iter().map(|t| t.support().to_vec()).collect();
        assert_eq!(supports, vec![vec![0], vec![0, 1], vec![1], vec![1, 2], vec![2]]);
    }

    #[test]
    fn normalization_violation_is_rejected_or_rescaled() {
        let text = TFIM3.replace("0.4}", "0.8}");
        assert!(matches!(parse_model(&text, NormalizationPolicy::Strict), Err(Error::Normalization { .. })));
        let loaded = parse_model(&text, NormalizationPolicy::Rescale).unwrap();
        assert!((loaded.rescale_factor - 1.4).abs() < 1e-12);
        assert!((loaded.hamiltonian.beta() - 0.0014).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_term_and_bad_hermiticity() {
        let text = TFIM3.replace(r#""support": [1,2], "pauli": "ZZ""#, r#""support": [0,2], "pauli": "ZZ""#);
        assert!(matches!(parse_model(&text, NormalizationPolicy::Strict), Err(Error::InvalidModel(_))));
        let text = r#"{"local_dim": 2, "vertices": 1, "edges": [], "interaction_class": {"finite_range": 1},
            "beta": 1.0, "terms": [{"support": [0], "matrix": [[0,0],[1,0],[0,0],[0,0]]}]}"#;
        assert!(matches!(parse_model(text, NormalizationPolicy::Strict), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn disconnected_graph_uses_unreachable_sentinel() {
        let g = SpinGraph::new(4, 2, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.distance(0, 3), UNREACHABLE);
        assert_eq!(g.set_distance(&[0], &[1, 3]), 1);
        assert_eq!(g.set_distance(&[], &[1]), UNREACHABLE);
    }

    #[test]
    fn roundtrip_preserves_hamiltonian() {
        let m = parse_model(TFIM3, NormalizationPolicy::Strict).unwrap().hamiltonian;
        let again = parse_model(&to_model_json(&m), NormalizationPolicy::Strict).unwrap().hamiltonian;
        assert_eq!(m, again);
    }

    #[test]
    fn same_support_terms_are_merged() {
        let g = SpinGraph::chain(2, 2).unwrap();
        let zz = SupportedOperator::new(vec![0, 1], 2, pauli_string("ZZ").unwrap().scale(0.25)).unwrap();
        let xx = SupportedOperator::new(vec![0, 1], 2, pauli_string("XX").unwrap().scale(0.25)).unwrap();
        let h = Hamiltonian::new(g, vec![zz, xx], InteractionClass::FiniteRange(1), 1.0).unwrap();
        assert_eq!(h.terms().len(), 1);
        assert!((h.terms()[0].norm - 0.5).abs() < 1e-14);
    }

    #[test]
    fn grid_distances() {
        let g = SpinGraph::grid(3, 3, 2).unwrap();
        assert_eq!(g.distance(0, 8), 4);
        assert_eq!(g.max_degree(), 4);
        assert_eq!(g.ball(&[4], 1), vec![1, 3, 4, 5, 7]);
    }
}
