//! Cluster derivatives `D_w log ρ̃^L` at `a = 0`.
//!
//! `ρ̃^L_a = tr_{L^c} e^{-β H_a}` with `H_a = Σ_X a_X h_X`. The derivative with respect
//! to every element of the multiset `w` only involves the terms of `w`, so each
//! method works on the restricted vertex set `V_w` and returns an operator on `L ∩ V_w`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{factorial, Cluster};
use crate::error::{Error, Result};
use crate::operator::{apply_local_left, hermitian_part, spectral_map, Matrix, SupportedOperator};
use crate::spin_model::Hamiltonian;

/// How `D_w log ρ̃^L` is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMethod {
    /// Exact `β^m` coefficient of the log-trace series.
    #[default]
    BetaTaylor,
    /// Symmetrized product over `m` copies of `L^c`. Exact when `L ∩ V_w` is empty,
    /// when `m ≤ 2`, or when the parts acting on `L` commute. From `m = 3` on the copy
    /// product interleaves `L`-parts of different partial traces, e.g.
    /// `Σ A_i A_j A_k tr(B_i B_k) tr(B_j)` where the exact coefficient has
    /// `½(T₁T₂ + T₂T₁)`, `T_k = tr_{L^c}(H^k)/d`.
    ExtendedSpace,
    /// Central mixed differences with Richardson extrapolation.
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeOptions {
    pub method: DerivativeMethod,
    /// Step `Δ` of the finite-difference stencil.
    pub fd_step: f64,
    /// Combine steps `Δ` and `Δ/2` to cancel the `O(Δ²)` error.
    pub richardson: bool,
    /// Largest Hilbert-space dimension the extended-space method may build.
    pub extended_dim_ceiling: usize,
}

impl Default for DerivativeOptions {
    fn default() -> Self {
        Self { method: DerivativeMethod::BetaTaylor, fd_step: 1e-3, richardson: true, extended_dim_ceiling: 1 << 10 }
    }
}

impl DerivativeOptions {
    pub fn with_method(method: DerivativeMethod) -> Self {
        Self { method, ..Self::default() }
    }
}

struct Restricted {
    vw: Vec<usize>,
    l: Vec<usize>,
    lc: Vec<usize>,
    d: usize,
    /// Distinct terms of `w` and their operators on `V_w`.
    embedded: HashMap<usize, Matrix>,
}

impl Restricted {
    fn new(h: &Hamiltonian, w: &Cluster, region: &[usize]) -> Result<Self> {
        let vw = w.vertices(h);
        let l: Vec<usize> = vw.iter().copied().filter(|v| region.contains(v)).collect();
        let lc: Vec<usize> = vw.iter().copied().filter(|v| !region.contains(v)).collect();
        let mut embedded = HashMap::new();
        for (t, _) in w.distinct() {
            embedded.insert(t, h.term(t).operator.embed(&vw)?.into_matrix());
        }
        Ok(Self { vw, l, lc, d: h.local_dim(), embedded })
    }

    fn dim_l(&self) -> usize {
        self.d.pow(self.l.len() as u32)
    }

    fn dim_lc(&self) -> f64 {
        self.d.pow(self.lc.len() as u32) as f64
    }

    /// `tr_{L^c ∩ V_w}(M) / d_{L^c ∩ V_w}` as a matrix on `L ∩ V_w`.
    fn normalized_trace(&self, m: Matrix) -> Result<Matrix> {
        let op = SupportedOperator::new(self.vw.clone(), self.d, m)?;
        Ok(op.partial_trace(&self.l)?.into_matrix().unscale(self.dim_lc()))
    }
}

/// Rearranges `v` into the next lexicographic permutation; false after the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Distinct orderings of the multiset `w`, each standing for `Π μ_j!` position permutations.
fn distinct_sequences(w: &Cluster) -> (Vec<Vec<usize>>, f64) {
    let mut seq = w.terms().to_vec();
    let mut out = vec![seq.clone()];
    while next_permutation(&mut seq) {
        out.push(seq.clone());
    }
    let weight = w.distinct().iter().map(|&(_, mu)| factorial(mu) as f64).product();
    (out, weight)
}

/// `D_w log ρ̃^L` at `a = 0`, on `L ∩ V_w`.
pub fn cluster_derivative(h: &Hamiltonian, w: &Cluster, region: &[usize], opts: &DerivativeOptions) -> Result<SupportedOperator> {
    if w.order() == 0 {
        return Err(Error::InvalidArgument("cluster must be non-empty".into()));
    }
    let r = Restricted::new(h, w, region)?;
    let beta = h.beta();
    let m = match opts.method {
        DerivativeMethod::BetaTaylor => beta_taylor(&r, w, beta)?,
        DerivativeMethod::ExtendedSpace => extended_space(&r, w, beta, opts.extended_dim_ceiling)?,
        DerivativeMethod::FiniteDifference => finite_difference(&r, w, beta, opts.fd_step, opts.richardson)?,
    };
    SupportedOperator::new(r.l.clone(), r.d, hermitian_part(&m))
}

fn beta_taylor(r: &Restricted, w: &Cluster, beta: f64) -> Result<Matrix> {
    let m = w.order();
    let dl = r.dim_l();
    // every composition (m_1, ..., m_q) with coefficient (-1)^{q-1}/q · Π 1/m_i!
    let mut blocks: Vec<(Vec<usize>, f64)> = Vec::new();
    for q in 1..=m {
        for parts in crate::cluster::compositions(m, q) {
            let sign = if q % 2 == 1 { 1.0 } else { -1.0 };
            let coef = sign / q as f64 / parts.iter().map(|&p| factorial(p) as f64).product::<f64>();
            blocks.push((parts, coef));
        }
    }
    let (sequences, weight) = distinct_sequences(w);
    let mut memo: HashMap<Vec<usize>, Matrix> = HashMap::new();
    let mut total = Matrix::zeros(dl, dl);
    for seq in &sequences {
        for (parts, coef) in &blocks {
            let mut product = Matrix::identity(dl, dl);
            let mut pos = 0;
            for &p in parts {
                let key = seq[pos..pos + p].to_vec();
                if !memo.contains_key(&key) {
                    let mut prod = r.embedded[&key[0]].clone();
                    for t in &key[1..] {
                        prod *= &r.embedded[t];
                    }
                    let t = r.normalized_trace(prod)?;
                    memo.insert(key.clone(), t);
                }
                product *= &memo[&key];
                pos += p;
            }
            total += product.scale(*coef);
        }
    }
    Ok(total.scale(weight * (-beta).powi(m as i32)))
}

fn extended_space(r: &Restricted, w: &Cluster, beta: f64, ceiling: usize) -> Result<Matrix> {
    let m = w.order();
    let (nl, nlc) = (r.l.len(), r.lc.len());
    let sites = nl + m * nlc;
    let cost = (r.d as u128).pow(sites as u32);
    if cost > ceiling as u128 {
        return Err(Error::CostCeiling { what: "extended-space derivative", cost, ceiling: ceiling as u128 });
    }
    let dim = cost as usize;
    // For each distinct term, its local matrix on V_w and, for each copy, the
    // positions of V_w inside the extended space.
    let place = |copy: usize| -> Vec<usize> {
        r.vw.iter()
            .map(|v| match r.l.binary_search(v) {
                Ok(i) => i,
                Err(_) => nl + copy * nlc + r.lc.binary_search(v).expect("vertex is in L or L^c"),
            })
            .collect()
    };
    let placements: Vec<Vec<usize>> = (0..m).map(place).collect();
    let apply = |t: usize, copy: usize, mat: &Matrix| -> Matrix {
        apply_local_left(mat, &r.embedded[&t], &placements[copy], sites, r.d)
    };
    let (sequences, weight) = distinct_sequences(w);
    let mut acc = Matrix::zeros(dim, dim);
    for seq in &sequences {
        let mut cur = Matrix::identity(dim, dim);
        for s in (0..m).rev() {
            let t = seq[s];
            cur = if s == 0 {
                apply(t, 0, &cur)
            } else {
                let mut next = apply(t, s, &cur).scale(-(s as f64));
                for j in 0..s {
                    next += apply(t, j, &cur);
                }
                next
            };
        }
        acc += cur;
    }
    let positions: Vec<usize> = (0..sites).collect();
    let keep: Vec<usize> = (0..nl).collect();
    let traced = SupportedOperator::new(positions, r.d, acc)?.partial_trace(&keep)?.into_matrix();
    let prefactor = weight * (-beta).powi(m as i32) / factorial(m) as f64 / r.dim_lc().powi(m as i32);
    Ok(traced.scale(prefactor))
}

/// `log(tr_{L^c}(e^{-β H_a}) / d_{L^c})` computed as `log1p` of `tr_{L^c}(expm1(-β H_a)) / d`
/// so that small perturbations keep full relative precision.
fn log_reduced(r: &Restricted, terms: &[usize], a: &[f64], beta: f64) -> Result<Matrix> {
    let dim = r.d.pow(r.vw.len() as u32);
    let mut hm = Matrix::zeros(dim, dim);
    for (t, &x) in terms.iter().zip(a) {
        hm += r.embedded[t].scale(x);
    }
    let n = r.normalized_trace(spectral_map(&hm, |x| (-beta * x).exp_m1()))?;
    let min = crate::operator::eigvalsh(&n).first().copied().unwrap_or(0.0);
    if min <= -1.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: 1.0 + min });
    }
    Ok(spectral_map(&n, f64::ln_1p))
}

fn finite_difference(r: &Restricted, w: &Cluster, beta: f64, step: f64, richardson: bool) -> Result<Matrix> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")));
    }
    let terms = w.terms();
    let m = terms.len();
    let stencil = |delta: f64| -> Result<Matrix> {
        let dl = r.dim_l();
        let mut total = Matrix::zeros(dl, dl);
        let mut largest: f64 = 0.0;
        for mask in 0..(1usize << m) {
            let signs: Vec<f64> = (0..m).map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let a: Vec<f64> = signs.iter().map(|s| s * delta).collect();
            let f = log_reduced(r, terms, &a, beta)?;
            largest = largest.max(f.iter().fold(0.0_f64, |x, z| x.max(z.norm())));
            total += f.scale(signs.iter().product());
        }
        let scaled = total.unscale((2.0 * delta).powi(m as i32));
        let magnitude = scaled.iter().fold(0.0_f64, |x, z| x.max(z.norm()));
        let noise = 1e3 * f64::EPSILON * largest / (2.0 * delta).powi(m as i32);
        if magnitude > 0.0 && magnitude < noise {
            log::debug!("finite-difference derivative {magnitude:.3e} is below the cancellation floor {noise:.3e}");
        }
        Ok(scaled)
    };
    let coarse = stencil(step)?;
    if !richardson {
        return Ok(coarse);
    }
    let fine = stencil(step / 2.0)?;
    Ok((fine.scale(4.0) - coarse).unscale(3.0))
}

/// `½ Π_s 4β N_{X_s|w} ‖h_{X_s}‖`, the norm bound for connected clusters of order `m ≥ 2`.
pub fn derivative_norm_bound(h: &Hamiltonian, w: &Cluster) -> f64 {
    let beta = h.beta();
    let counts = w.overlap_counts(h);
    0.5 * w.terms().iter().zip(counts).map(|(&t, n)| 4.0 * beta * n as f64 * h.term(t).norm).product::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::tfim_chain;

    fn all_methods() -> [DerivativeOptions; 3] {
        [
            DerivativeOptions::with_method(DerivativeMethod::BetaTaylor),
            DerivativeOptions::with_method(DerivativeMethod::ExtendedSpace),
            DerivativeOptions::with_method(DerivativeMethod::FiniteDifference),
        ]
    }

    #[test]
    fn first_order_is_minus_beta_times_reduced_term() {
        // w = {X} with X = {0,1}, L = {0}: D_w = -β tr_1(h_X)/2
        let h = tfim_chain(2, 0.3, 0.4, 0.8).unwrap();
        let bond = h.terms().iter().position(|t| t.support() == [0, 1]).unwrap();
        let field = h.terms().iter().position(|t| t.support() == [1]).unwrap();
        for opts in all_methods() {
            let zz = cluster_derivative(&h, &Cluster::new(vec![bond]), &[0], &opts).unwrap();
            assert_eq!(zz.support(), &[0]);
            assert!(zz.op_norm() < 1e-9, "{:?}", opts.method);
            // a field term entirely in L^c contributes only a trace: -β tr(0.4 X)/2 = 0
            let x = cluster_derivative(&h, &Cluster::new(vec![field]), &[0], &opts).unwrap();
            assert!(x.support().is_empty());
            assert!(x.op_norm() < 1e-9);
        }
    }

    #[test]
    fn second_order_single_field_matches_closed_form() {
        // one site, L = ∅: log tr e^{-β a g X}/2 = log cosh(β a g), second derivative β² g²
        let h = tfim_chain(1, 0.0, 0.5, 1.3).unwrap();
        let w = Cluster::new(vec![0, 0]);
        let expected = (1.3f64 * 0.5).powi(2);
        for opts in all_methods() {
            let d = cluster_derivative(&h, &w, &[], &opts).unwrap();
            assert!((d.matrix()[(0, 0)].re - expected).abs() < 1e-8, "{:?}: {}", opts.method, d.matrix()[(0, 0)]);
        }
    }

    #[test]
    fn methods_agree_on_a_three_term_cluster() {
        let graph = crate::spin_model::SpinGraph::chain(3, 2).unwrap();
        let h = crate::ensembles::random_local(graph, 5, true, 0.9).unwrap();
        let w = Cluster::new(vec![1, 1, 3]);
        let reference = cluster_derivative(&h, &w, &[0], &DerivativeOptions::default()).unwrap();
        assert!(reference.op_norm() > 1e-4);
        let ext = cluster_derivative(&h, &w, &[0], &DerivativeOptions::with_method(DerivativeMethod::ExtendedSpace)).unwrap();
        assert!(ext.add_scaled(&reference, -1.0).unwrap().op_norm() < 1e-12 * reference.op_norm().max(1.0));
        let fd = cluster_derivative(&h, &w, &[0], &DerivativeOptions::with_method(DerivativeMethod::FiniteDifference)).unwrap();
        assert!(fd.add_scaled(&reference, -1.0).unwrap().op_norm() < 1e-7);
    }

    #[test]
    fn extended_space_misses_noncommuting_region_parts() {
        // both bonds act on L = {1} with non-commuting parts; the symmetrized
        // copy product then differs from the true derivative
        let graph = crate::spin_model::SpinGraph::chain(3, 2).unwrap();
        let h = crate::ensembles::random_local(graph, 5, true, 0.9).unwrap();
        let w = Cluster::new(vec![1, 3, 3]);
        let taylor = cluster_derivative(&h, &w, &[1], &DerivativeOptions::default()).unwrap();
        let fd = cluster_derivative(&h, &w, &[1], &DerivativeOptions::with_method(DerivativeMethod::FiniteDifference)).unwrap();
        let ext = cluster_derivative(&h, &w, &[1], &DerivativeOptions::with_method(DerivativeMethod::ExtendedSpace)).unwrap();
        assert!(fd.add_scaled(&taylor, -1.0).unwrap().op_norm() < 1e-7);
        assert!(ext.add_scaled(&taylor, -1.0).unwrap().op_norm() > 1e-4);
    }

    #[test]
    fn extended_space_respects_ceiling() {
        let h = tfim_chain(4, 0.3, 0.4, 0.9).unwrap();
        let w = Cluster::new(vec![1, 3, 5, 5]);
        let opts = DerivativeOptions { extended_dim_ceiling: 64, ..DerivativeOptions::with_method(DerivativeMethod::ExtendedSpace) };
        assert!(matches!(cluster_derivative(&h, &w, &[0], &opts), Err(Error::CostCeiling { .. })));
    }

    #[test]
    fn permutations_are_enumerated_once() {
        let (seqs, weight) = distinct_sequences(&Cluster::new(vec![2, 2, 5]));
        assert_eq!(seqs.len(), 3);
        assert_eq!(weight, 2.0);
    }
}
