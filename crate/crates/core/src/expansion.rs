//! Assembly of the cluster expansion.
//!
//! The effective Hamiltonian of a region is
//! `H̃_L = H_L + Σ_{m ≤ m₀} Σ_{w linking L and L^c} n_w h_{L_w} − β⁻¹ log Z_{L^c}`
//! with `h_{L_w} = −β⁻¹/m! · D_w log ρ̃^L`. Clusters inside `L` only reproduce `H_L`,
//! clusters inside `L^c` only contribute the scalar `log Z_{L^c}`, and all other
//! clusters vanish.

use std::f64::consts::E;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{critical_beta, surface_region};
use crate::cluster::{connected_clusters, connected_clusters_within, factorial, linking_clusters, Cluster};
use crate::derivative::{cluster_derivative, DerivativeOptions};
use crate::ed::{restricted_log_partition, ExactGibbs, DEFAULT_ED_LIMIT};
use crate::error::{Error, Result};
use crate::operator::{entropy_of_spectrum, SupportedOperator};
use crate::spin_model::{Hamiltonian, InteractionClass};

/// Clusters are evaluated in parallel in blocks of this size and reduced in order.
const CHUNK: usize = 256;

/// Tuning shared by every expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionConfig {
    pub derivative: DerivativeOptions,
    /// Largest `|L^c|` for which `log Z_{L^c}` is computed exactly.
    pub ed_limit: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { derivative: DerivativeOptions::default(), ed_limit: DEFAULT_ED_LIMIT }
    }
}

/// A truncation bound and whether it is backed by the convergence hypothesis `β < β_c`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub value: f64,
    pub rigorous: bool,
    pub note: Option<String>,
}

impl Certificate {
    fn geometric(prefactor: f64, beta: f64, beta_c: f64, order: usize) -> Self {
        let x = beta / beta_c;
        if x < 1.0 {
            Self { value: prefactor * x.powi(order as i32 + 1) / (1.0 - x), rigorous: true, note: None }
        } else {
            Self { value: f64::INFINITY, rigorous: false, note: Some("non-rigorous: beta >= beta_c".into()) }
        }
    }
}

/// Evaluates `f` on every cluster of the stream, in parallel blocks, preserving order.
fn map_ordered<T, F>(clusters: impl Iterator<Item = Cluster>, f: F) -> Result<Vec<(Cluster, T)>>
where
    T: Send,
    F: Fn(&Cluster) -> Result<T> + Sync,
{
    let mut out = Vec::new();
    let mut clusters = clusters.peekable();
    while clusters.peek().is_some() {
        let block: Vec<Cluster> = clusters.by_ref().take(CHUNK).collect();
        let values: Vec<Result<T>> = block.par_iter().map(&f).collect();
        for (w, v) in block.into_iter().zip(values) {
            out.push((w, v?));
        }
    }
    Ok(out)
}

fn sorted_region(h: &Hamiltonian, region: &[usize]) -> Result<Vec<usize>> {
    let mut l = region.to_vec();
    l.sort_unstable();
    l.dedup();
    if let Some(&v) = l.iter().find(|&&v| v >= h.num_vertices()) {
        return Err(Error::InvalidArgument(format!("vertex {v} is not in the model")));
    }
    Ok(l)
}

fn require_finite_range(h: &Hamiltonian) -> Result<usize> {
    match h.class() {
        InteractionClass::FiniteRange(r) => Ok(r),
        InteractionClass::PowerLaw(_) => {
            Err(Error::InvalidArgument("expansion assembly needs a finite-range interaction".into()))
        }
    }
}

/// `Σ_{m=1}^{m₀} Σ_{w connected, V_w ⊆ region} (n_w/m!) D_w log tr e^{-βH}` plus
/// `|region| log d`: the cluster series for `log Z` of the terms inside `region`.
fn log_partition_series(h: &Hamiltonian, region: &[usize], order: usize, config: &ExpansionConfig) -> Result<f64> {
    let mut value = region.len() as f64 * (h.local_dim() as f64).ln();
    for m in 1..=order {
        let clusters: Box<dyn Iterator<Item = Cluster>> = if region.len() == h.num_vertices() {
            connected_clusters(h, m)
        } else {
            connected_clusters_within(h, region, m)
        };
        let parts = map_ordered(clusters, |w| {
            let d = cluster_derivative(h, w, &[], &config.derivative)?;
            Ok(w.multiplicity() as f64 / factorial(m) as f64 * d.matrix()[(0, 0)].re)
        })?;
        value += parts.iter().map(|(_, v)| v).sum::<f64>();
    }
    Ok(value)
}

/// How the scalar `log Z_{L^c}` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarSource {
    ExactDiagonalization,
    ClusterSeries { order: usize },
}

/// One assembled `h_{L_w}` with its multiplicity.
#[derive(Clone, Debug)]
pub struct BoundaryTerm {
    pub cluster: Cluster,
    pub multiplicity: u64,
    pub operator: SupportedOperator,
}

/// Norm table entry for one order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderNorm {
    pub order: usize,
    pub clusters: usize,
    /// `‖Σ_w n_w h_w‖`.
    pub norm_of_sum: f64,
    /// `Σ_w n_w ‖h_w‖`.
    pub sum_of_norms: f64,
}

/// The truncated effective Hamiltonian of a region.
#[derive(Clone, Debug)]
pub struct ExpansionResult {
    pub region: Vec<usize>,
    pub order: usize,
    pub beta: f64,
    pub beta_c: f64,
    pub range: usize,
    pub local_dim: usize,
    /// Original terms with support inside the region.
    pub h_l_part: Vec<SupportedOperator>,
    /// `boundary_terms[m - 1]` holds the order-`m` contributions.
    pub boundary_terms: Vec<Vec<BoundaryTerm>>,
    /// `−β⁻¹ log Z_{L^c}`.
    pub scalar_part: f64,
    pub scalar_source: ScalarSource,
    /// Operator-norm bound on the neglected orders `m > m₀`.
    pub truncation: Certificate,
    surface: usize,
    complement_size: usize,
}

/// Serializable digest of an [`ExpansionResult`].
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionSummary {
    pub region: Vec<usize>,
    pub order: usize,
    pub beta: f64,
    pub beta_c: f64,
    pub per_order: Vec<OrderNorm>,
    pub scalar_part: f64,
    pub scalar_source: ScalarSource,
    pub truncation: Certificate,
}

impl ExpansionResult {
    fn zero(&self) -> SupportedOperator {
        SupportedOperator::zeros(self.region.clone(), self.local_dim)
    }

    /// `Σ_{w of order m} n_w h_{L_w}` on the region.
    pub fn order_sum(&self, m: usize) -> Result<SupportedOperator> {
        let mut acc = self.zero();
        if m == 0 || m > self.order {
            return Ok(acc);
        }
        for t in &self.boundary_terms[m - 1] {
            acc = acc.add_scaled(&t.operator.embed(&self.region)?, t.multiplicity as f64)?;
        }
        Ok(acc)
    }

    /// `Φ_L` truncated at order `m₀ ≤ order`, scalar part included.
    pub fn phi_at(&self, m0: usize) -> Result<SupportedOperator> {
        let mut acc = SupportedOperator::identity(self.region.clone(), self.local_dim).scale(self.scalar_part);
        for m in 1..=m0.min(self.order) {
            acc = acc.add(&self.order_sum(m)?)?;
        }
        Ok(acc)
    }

    /// `Φ_L` at the computed order.
    pub fn phi(&self) -> Result<SupportedOperator> {
        self.phi_at(self.order)
    }

    /// `H_L + Φ_L`.
    pub fn effective_hamiltonian(&self) -> Result<SupportedOperator> {
        let mut acc = self.phi()?;
        for op in &self.h_l_part {
            acc = acc.add(&op.embed(&self.region)?)?;
        }
        Ok(acc)
    }

    /// Truncation bound for a lower order `m₀ ≤ order` of the same expansion.
    /// When `log Z_{L^c}` came from its own series, that series' tail is added.
    pub fn certificate_at(&self, m0: usize) -> Certificate {
        let mut c = Certificate::geometric(E / (4.0 * self.beta) * self.surface as f64, self.beta, self.beta_c, m0);
        if let ScalarSource::ClusterSeries { order } = self.scalar_source {
            let extra = Certificate::geometric(E / (4.0 * self.beta) * self.complement_size as f64, self.beta, self.beta_c, order);
            c.value += extra.value;
            c.note = c.note.or_else(|| Some("includes the scalar log Z series tail".into()));
        }
        c
    }

    pub fn per_order(&self) -> Result<Vec<OrderNorm>> {
        (1..=self.order)
            .map(|m| {
                let terms = &self.boundary_terms[m - 1];
                Ok(OrderNorm {
                    order: m,
                    clusters: terms.len(),
                    norm_of_sum: self.order_sum(m)?.op_norm(),
                    sum_of_norms: terms.iter().map(|t| t.multiplicity as f64 * t.operator.op_norm()).sum(),
                })
            })
            .collect()
    }

    /// Boundary terms of order `m` whose support leaves `∂L_{m·r}`.
    pub fn support_violations(&self, h: &Hamiltonian) -> Vec<(usize, Cluster)> {
        let mut out = Vec::new();
        for (i, terms) in self.boundary_terms.iter().enumerate() {
            let m = i + 1;
            let shell = surface_region(h.graph(), &self.region, m * self.range);
            for t in terms {
                if t.operator.support().iter().any(|v| !shell.contains(v)) {
                    out.push((m, t.cluster.clone()));
                }
            }
        }
        out
    }

    pub fn summary(&self) -> Result<ExpansionSummary> {
        Ok(ExpansionSummary {
            region: self.region.clone(),
            order: self.order,
            beta: self.beta,
            beta_c: self.beta_c,
            per_order: self.per_order()?,
            scalar_part: self.scalar_part,
            scalar_source: self.scalar_source,
            truncation: self.truncation.clone(),
        })
    }
}

/// `(e/(4β)) · (β/β_c)^{m₀+1} / (1 − β/β_c) · |∂L_r|`; fails unless `β < β_c`.
pub fn truncation_certificate(h: &Hamiltonian, region: &[usize], order: usize) -> Result<f64> {
    let r = require_finite_range(h)?;
    let beta_c = critical_beta(h.k());
    if h.beta() >= beta_c {
        return Err(Error::AboveThreshold { beta: h.beta(), beta_c });
    }
    let l = sorted_region(h, region)?;
    let surface = surface_region(h.graph(), &l, r).len();
    Ok(Certificate::geometric(E / (4.0 * h.beta()) * surface as f64, h.beta(), beta_c, order).value)
}

/// Smallest order whose truncation certificate is at most `ε · n`.
pub fn order_for_epsilon(h: &Hamiltonian, region: &[usize], epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let target = epsilon * h.num_vertices() as f64;
    (0..=200)
        .find(|&m| truncation_certificate(h, region, m).is_ok_and(|c| c <= target))
        .ok_or_else(|| Error::InvalidArgument(format!("no order up to 200 reaches certificate {target:e}")))
        .and_then(|m| truncation_certificate(h, region, m).map(|_| m))
}

/// Effective Hamiltonian of `region` truncated at `order`.
pub fn effective_hamiltonian(h: &Hamiltonian, region: &[usize], order: usize, config: &ExpansionConfig) -> Result<ExpansionResult> {
    let range = require_finite_range(h)?;
    let l = sorted_region(h, region)?;
    let lc = h.graph().complement(&l);
    let beta = h.beta();
    let h_l_part = h.terms_within(&l).into_iter().map(|i| h.term(i).operator.clone()).collect();
    let scale = -1.0 / beta;
    let mut boundary_terms = Vec::with_capacity(order);
    for m in 1..=order {
        let prefactor = scale / factorial(m) as f64;
        let evaluated = map_ordered(linking_clusters(h, &l, &lc, m), |w| {
            Ok(cluster_derivative(h, w, &l, &config.derivative)?.scale(prefactor))
        })?;
        boundary_terms.push(
            evaluated
                .into_iter()
                .map(|(cluster, operator)| BoundaryTerm { multiplicity: cluster.multiplicity(), cluster, operator })
                .collect(),
        );
    }
    let beta_c = critical_beta(h.k());
    let surface = surface_region(h.graph(), &l, range).len();
    let (log_z_c, scalar_source) = if lc.len() <= config.ed_limit {
        (restricted_log_partition(h, &lc, config.ed_limit)?, ScalarSource::ExactDiagonalization)
    } else {
        (log_partition_series(h, &lc, order, config)?, ScalarSource::ClusterSeries { order })
    };
    let mut result = ExpansionResult {
        region: l,
        order,
        beta,
        beta_c,
        range,
        local_dim: h.local_dim(),
        h_l_part,
        boundary_terms,
        scalar_part: -log_z_c / beta,
        scalar_source,
        truncation: Certificate { value: 0.0, rigorous: true, note: None },
        surface,
        complement_size: lc.len(),
    };
    result.truncation = result.certificate_at(order);
    Ok(result)
}

/// `log Z` from the cluster series.
#[derive(Clone, Debug, Serialize)]
pub struct LogPartition {
    pub value: f64,
    pub order: usize,
    /// Bound on `|log Z − value|`: `(e/4)(β/β_c)^{m₀+1}/(1−β/β_c) · n`.
    pub certificate: Certificate,
    /// The same bound divided by `n`.
    pub per_site_certificate: Certificate,
}

/// `log Z = n log d + Σ_{m ≤ m₀} Σ_{w connected} (n_w/m!) D_w log tr e^{-βH}`.
pub fn log_partition_function(h: &Hamiltonian, order: usize, config: &ExpansionConfig) -> Result<LogPartition> {
    let all = h.graph().vertices();
    let value = log_partition_series(h, &all, order, config)?;
    let n = h.num_vertices() as f64;
    let beta_c = critical_beta(h.k());
    let certificate = Certificate::geometric(E / 4.0 * n, h.beta(), beta_c, order);
    let per_site_certificate = Certificate::geometric(E / 4.0, h.beta(), beta_c, order);
    Ok(LogPartition { value, order, certificate, per_site_certificate })
}

/// Approximate reduced Gibbs state `e^{-β H̃_L} / tr`.
#[derive(Clone, Debug)]
pub struct ReducedState {
    pub state: SupportedOperator,
    pub expansion: ExpansionResult,
    /// Bound on `‖ρ̂ − ρ^L‖₁`. If `‖H̃ − H̃'‖ ≤ δ` then `D(ρ‖ρ') ≤ 2βδ`, and Pinsker's
    /// inequality gives `‖ρ − ρ'‖₁ ≤ min(2, 2√(βδ))`. Infinite when the certificate is not rigorous.
    pub trace_distance_bound: f64,
}

/// Converts an operator-norm error `δ` of `H̃_L` into a trace-distance bound on the state.
pub fn trace_distance_from_certificate(beta: f64, certificate: &Certificate) -> f64 {
    if certificate.rigorous {
        (2.0 * (beta * certificate.value).sqrt()).min(2.0)
    } else {
        f64::INFINITY
    }
}

pub fn reduced_state(h: &Hamiltonian, region: &[usize], order: usize, config: &ExpansionConfig) -> Result<ReducedState> {
    let expansion = effective_hamiltonian(h, region, order, config)?;
    let heff = expansion.effective_hamiltonian()?;
    // the scalar part only shifts the spectrum; dropping it before exponentiating avoids overflow
    let shifted = heff.add_scaled(&SupportedOperator::identity(heff.support().to_vec(), heff.local_dim()), -expansion.scalar_part)?;
    let unnormalized = shifted.expm_hermitian(-h.beta())?;
    let z = unnormalized.trace().re;
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: z });
    }
    let state = unnormalized.scale(1.0 / z);
    let trace_distance_bound = trace_distance_from_certificate(h.beta(), &expansion.truncation);
    Ok(ReducedState { state, expansion, trace_distance_bound })
}

/// An expectation value with its error bound.
#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error_bound: f64,
    pub region: Vec<usize>,
}

/// `tr(ρ̂ O)` on the support of `O` enlarged by `padding` graph steps. The error is
/// at most `‖O‖ · ‖ρ̂ − ρ‖₁`.
pub fn local_observable(
    h: &Hamiltonian,
    observable: &SupportedOperator,
    order: usize,
    padding: usize,
    config: &ExpansionConfig,
) -> Result<Estimate> {
    let region = h.graph().ball(observable.support(), padding);
    let rs = reduced_state(h, &region, order, config)?;
    let o = observable.embed(&region)?;
    let value = (rs.state.matrix() * o.matrix()).trace().re;
    Ok(Estimate { value, error_bound: o.op_norm() * rs.trace_distance_bound, region })
}

/// Von Neumann entropy of `ρ̂^L`. The error uses the Audenaert–Fannes inequality
/// `|S(ρ) − S(σ)| ≤ T log(D − 1) + h₂(T)` with `T = ½‖ρ − σ‖₁ ≤ 1 − 1/D`,
/// and `log D` beyond that.
pub fn local_entropy(h: &Hamiltonian, region: &[usize], order: usize, config: &ExpansionConfig) -> Result<Estimate> {
    let rs = reduced_state(h, region, order, config)?;
    let value = entropy_of_spectrum(&rs.state.eigenvalues()?);
    let dim = rs.state.dim() as f64;
    let t = rs.trace_distance_bound / 2.0;
    let error_bound = if !t.is_finite() || t >= 1.0 - 1.0 / dim {
        dim.ln()
    } else if t == 0.0 {
        0.0
    } else {
        t * (dim - 1.0).ln() - t * t.ln() - (1.0 - t) * (1.0 - t).ln()
    };
    Ok(Estimate { value, error_bound, region: rs.state.support().to_vec() })
}

/// Norm table for one order of the conditional-mutual-information operator.
#[derive(Clone, Debug, Serialize)]
pub struct CmiOrder {
    pub order: usize,
    pub clusters: usize,
    /// `‖Σ_w (n_w/m!) K_w‖`.
    pub norm_of_sum: f64,
    /// `Σ_w (n_w/m!) ‖K_w‖`.
    pub sum_of_norms: f64,
}

/// Truncated operator `K` with `I(A:C|B) = tr(ρ K)`, where
/// `K = −(log ρ^{AB} + log ρ^{BC} − log ρ^{ABC} − log ρ^B)` with un-normalized reduced operators.
#[derive(Clone, Debug)]
pub struct CmiExpansionResult {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
    pub order: usize,
    pub per_order: Vec<CmiOrder>,
    /// `K` on `ABC`.
    pub operator: SupportedOperator,
    pub operator_norm: f64,
    /// `tr(ρ^{ABC} K)` when a reference state was supplied.
    pub trace_estimate: Option<f64>,
    /// `e · min(|∂A_r|, |∂C_r|) · (β/β_c)^{m₀+1} / (1 − β/β_c)`.
    pub truncation: Certificate,
}

/// Serializable digest of a [`CmiExpansionResult`].
#[derive(Clone, Debug, Serialize)]
pub struct CmiSummary {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
    pub order: usize,
    pub per_order: Vec<CmiOrder>,
    pub operator_norm: f64,
    pub trace_estimate: Option<f64>,
    pub truncation: Certificate,
}

impl CmiExpansionResult {
    pub fn summary(&self) -> CmiSummary {
        CmiSummary {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            order: self.order,
            per_order: self.per_order.clone(),
            operator_norm: self.operator_norm,
            trace_estimate: self.trace_estimate,
            truncation: self.truncation.clone(),
        }
    }
}

fn union(parts: &[&[usize]]) -> Vec<usize> {
    let mut r: Vec<usize> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    r.sort_unstable();
    r
}

/// `K_w = −(D_w log ρ̃^{AB} + D_w log ρ̃^{BC} − D_w log ρ̃^{ABC} − D_w log ρ̃^B)` on `ABC`.
pub fn cmi_cluster_operator(
    h: &Hamiltonian,
    w: &Cluster,
    a: &[usize],
    b: &[usize],
    c: &[usize],
    options: &DerivativeOptions,
) -> Result<SupportedOperator> {
    let abc = union(&[a, b, c]);
    let regions = [(union(&[a, b]), -1.0), (union(&[b, c]), -1.0), (abc.clone(), 1.0), (b.to_vec(), 1.0)];
    let mut acc = SupportedOperator::zeros(abc.clone(), h.local_dim());
    for (l, sign) in regions {
        let d = cluster_derivative(h, w, &l, options)?;
        acc = acc.add_scaled(&d.embed(&abc)?, sign)?;
    }
    Ok(acc)
}

/// Truncated cluster expansion of the conditional mutual information operator.
/// Only clusters linking `A` and `C` contribute.
pub fn cmi_expansion(
    h: &Hamiltonian,
    a: &[usize],
    b: &[usize],
    c: &[usize],
    order: usize,
    config: &ExpansionConfig,
    state: Option<&ExactGibbs>,
) -> Result<CmiExpansionResult> {
    let range = require_finite_range(h)?;
    let (a, b, c) = (sorted_region(h, a)?, sorted_region(h, b)?, sorted_region(h, c)?);
    let abc = union(&[&a, &b, &c]);
    if abc.windows(2).any(|p| p[0] == p[1]) {
        return Err(Error::Overlap);
    }
    let mut total = SupportedOperator::zeros(abc.clone(), h.local_dim());
    let mut per_order = Vec::with_capacity(order);
    for m in 1..=order {
        let weight = 1.0 / factorial(m) as f64;
        let evaluated = map_ordered(linking_clusters(h, &a, &c, m), |w| {
            cmi_cluster_operator(h, w, &a, &b, &c, &config.derivative).map(|k| k.scale(w.multiplicity() as f64 * weight))
        })?;
        let mut sum = SupportedOperator::zeros(abc.clone(), h.local_dim());
        let mut sum_of_norms = 0.0;
        for (_, k) in &evaluated {
            sum = sum.add(k)?;
            sum_of_norms += k.op_norm();
        }
        per_order.push(CmiOrder { order: m, clusters: evaluated.len(), norm_of_sum: sum.op_norm(), sum_of_norms });
        total = total.add(&sum)?;
    }
    let trace_estimate = match state {
        Some(st) => Some((st.reduced(&abc)?.matrix() * total.matrix()).trace().re),
        None => None,
    };
    let g = h.graph();
    let minsurf = surface_region(g, &a, range).len().min(surface_region(g, &c, range).len());
    let truncation = Certificate::geometric(E * minsurf as f64, h.beta(), critical_beta(h.k()), order);
    let operator_norm = total.op_norm();
    Ok(CmiExpansionResult { a, b, c, order, per_order, operator: total, operator_norm, trace_estimate, truncation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::exact_gibbs;
    use crate::ensembles::tfim_chain;
    use crate::operator::pauli_string;
    use crate::spin_model::SpinGraph;

    #[test]
    fn certificate_arithmetic() {
        let h = tfim_chain(6, 0.3, 0.4, critical_beta(2) / 2.0).unwrap();
        // L = {0..2}: ∂L_1 = {2}
        let c = truncation_certificate(&h, &[0, 1, 2], 1).unwrap();
        let expected = E / (4.0 * h.beta()) * 0.25 / 0.5;
        assert!((c - expected).abs() < 1e-12 * expected);
        let hot = h.with_beta(critical_beta(2)).unwrap();
        assert!(matches!(truncation_certificate(&hot, &[0], 1), Err(Error::AboveThreshold { .. })));
    }

    #[test]
    fn fields_only_have_no_boundary_terms() {
        let h = tfim_chain(4, 0.0, 0.5, 1e-3).unwrap();
        let r = effective_hamiltonian(&h, &[0, 1], 3, &ExpansionConfig::default()).unwrap();
        assert!(r.boundary_terms.iter().all(Vec::is_empty));
        // −β⁻¹ log Z_{L^c} with two free spins: log (2 cosh(β/2))²
        let expected = -2.0 * (2.0 * (1e-3f64 * 0.5).cosh()).ln() / 1e-3;
        assert!((r.scalar_part - expected).abs() < 1e-9);
    }

    #[test]
    fn single_coupling_series_approaches_exact() {
        let g = SpinGraph::chain(2, 2).unwrap();
        let op = SupportedOperator::new(vec![0, 1], 2, pauli_string("XZ").unwrap().scale(0.6) + pauli_string("ZZ").unwrap().scale(0.4))
            .unwrap();
        let h = Hamiltonian::new(g, vec![op], InteractionClass::FiniteRange(1), 0.1).unwrap();
        let exact = exact_gibbs(&h, 12).unwrap().effective_hamiltonian(&[0]).unwrap();
        let r = effective_hamiltonian(&h, &[0], 3, &ExpansionConfig::default()).unwrap();
        let errors: Vec<f64> =
            (0..=3).map(|m| exact.add_scaled(&r.phi_at(m).unwrap(), -1.0).unwrap().op_norm()).collect();
        assert!(errors[3] < errors[1] && errors[1] < errors[0] + 1e-12, "{errors:?}");
        assert!(errors[3] < 1e-4, "{errors:?}");
    }

    #[test]
    fn log_partition_of_single_z_field() {
        let g = SpinGraph::chain(1, 2).unwrap();
        let z = SupportedOperator::new(vec![0], 2, pauli_string("Z").unwrap()).unwrap();
        let h = Hamiltonian::new(g, vec![z], InteractionClass::FiniteRange(1), 0.3).unwrap();
        let exact = (2.0 * 0.3f64.cosh()).ln();
        let mut prev = f64::INFINITY;
        for m in [0, 2, 4, 6] {
            let err = (log_partition_function(&h, m, &ExpansionConfig::default()).unwrap().value - exact).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn cmi_without_linking_clusters_is_zero() {
        let g = SpinGraph::chain(3, 2).unwrap();
        let op = SupportedOperator::new(vec![0, 1], 2, pauli_string("ZZ").unwrap().scale(0.5)).unwrap();
        let h = Hamiltonian::new(g, vec![op], InteractionClass::FiniteRange(1), 1e-3).unwrap();
        let r = cmi_expansion(&h, &[0], &[1], &[2], 3, &ExpansionConfig::default(), None).unwrap();
        assert_eq!(r.operator_norm, 0.0);
        assert!(r.per_order.iter().all(|o| o.clusters == 0));
    }

    #[test]
    fn zero_hamiltonian_entropy_is_maximal() {
        let g = SpinGraph::chain(3, 2).unwrap();
        let h = Hamiltonian::new(g, vec![], InteractionClass::FiniteRange(1), 1e-3).unwrap();
        let s = local_entropy(&h, &[0, 1], 2, &ExpansionConfig::default()).unwrap();
        assert!((s.value - 2.0 * 2f64.ln()).abs() < 1e-12);
    }
}
