//! Seeded model generators used by the verification suites and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::operator::{eigvalsh, pauli, pauli_string, Matrix, SupportedOperator, C64};
use crate::spin_model::{Hamiltonian, InteractionClass, SpinGraph};

/// Deterministic generator for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// GUE-distributed Hermitian matrix rescaled to unit operator norm.
pub fn random_hermitian<R: Rng>(rng: &mut R, dim: usize) -> Matrix {
    let a = Matrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let h = (&a + a.adjoint()).scale(0.5);
    let norm = eigvalsh(&h).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    h.unscale(norm)
}

/// Unit-norm random Hermitian observable on `support`.
pub fn random_observable<R: Rng>(rng: &mut R, support: &[usize], local_dim: usize) -> SupportedOperator {
    let mut s = support.to_vec();
    s.sort_unstable();
    let m = random_hermitian(rng, local_dim.pow(s.len() as u32));
    SupportedOperator::new(s, local_dim, m).expect("dimensions match by construction")
}

/// Transverse-field Ising chain `Σ J Z_i Z_{i+1} + Σ g X_i`.
pub fn tfim_chain(n: usize, j: f64, g: f64, beta: f64) -> Result<Hamiltonian> {
    let graph = SpinGraph::chain(n, 2)?;
    let zz = pauli_string("ZZ")?.scale(j);
    let x = pauli('X')?.scale(g);
    let mut ops = Vec::new();
    for i in 0..n {
        if i + 1 < n {
            ops.push(SupportedOperator::new(vec![i, i + 1], 2, zz.clone())?);
        }
        ops.push(SupportedOperator::new(vec![i], 2, x.clone())?);
    }
    Hamiltonian::new(graph, ops, InteractionClass::FiniteRange(1), beta)
}

fn scale_to_unit_vertex_sum(n: usize, ops: Vec<SupportedOperator>) -> Vec<SupportedOperator> {
    let mut sums = vec![0.0; n];
    for op in &ops {
        let norm = op.op_norm();
        for &v in op.support() {
            sums[v] += norm;
        }
    }
    let max = sums.into_iter().fold(0.0, f64::max);
    ops.into_iter().map(|op| op.scale(1.0 / max)).collect()
}

/// Random nearest-neighbour qubit model on `graph`: a random two-body term on every
/// edge and, optionally, a random field on every vertex. Weights are drawn from
/// `[0.5, 1]` and the whole Hamiltonian is scaled so that the largest vertex sum
/// `Σ_{X∋v} ‖h_X‖` is exactly one.
pub fn random_local(graph: SpinGraph, seed: u64, fields: bool, beta: f64) -> Result<Hamiltonian> {
    let mut rng = rng(seed);
    let d = graph.local_dim();
    let mut ops = Vec::new();
    for &(u, v) in graph.edges() {
        let w: f64 = rng.random_range(0.5..=1.0);
        ops.push(SupportedOperator::new(vec![u, v], d, random_hermitian(&mut rng, d * d).scale(w))?);
    }
    if fields {
        for v in 0..graph.num_vertices() {
            let w: f64 = rng.random_range(0.5..=1.0);
            ops.push(SupportedOperator::new(vec![v], d, random_hermitian(&mut rng, d).scale(w))?);
        }
    }
    let ops = scale_to_unit_vertex_sum(graph.num_vertices(), ops);
    Hamiltonian::new(graph, ops, InteractionClass::FiniteRange(1), beta)
}

/// Random qubit chain with all-to-all two-body terms of strength `~ |i-j|^{-(α+1)}`
/// plus random fields, scaled to the largest strength compatible with both the
/// per-vertex power-law condition and the tail condition `Σ_{l≥R} g̃_l ≤ R^{-α}`.
pub fn random_power_law_chain(n: usize, alpha: f64, seed: u64, beta: f64) -> Result<Hamiltonian> {
    let mut rng = rng(seed);
    let graph = SpinGraph::chain(n, 2)?;
    let mut ops = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w: f64 = rng.random_range(0.5..=1.0) / ((j - i) as f64).powf(alpha + 1.0);
            ops.push(SupportedOperator::new(vec![i, j], 2, random_hermitian(&mut rng, 4).scale(w))?);
        }
        let w: f64 = rng.random_range(0.25..=0.5);
        ops.push(SupportedOperator::new(vec![i], 2, random_hermitian(&mut rng, 2).scale(w))?);
    }
    let class = InteractionClass::PowerLaw(alpha);
    let (h, _) = Hamiltonian::new_rescaled(graph.clone(), ops, class, beta)?;
    let excess = h
        .tail_profile()
        .unwrap_or_default()
        .iter()
        .map(|&(_, tail, bound)| tail / bound)
        .fold(1.0, f64::max);
    let ops = h.terms().iter().map(|t| t.operator.scale(1.0 / excess)).collect();
    Hamiltonian::new(graph, ops, class, beta)
}
