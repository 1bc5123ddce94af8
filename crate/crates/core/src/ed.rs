//! Exact diagonalization reference for small systems.

use crate::error::{Error, Result};
use crate::operator::{eigh, eigvalsh, Matrix, SupportedOperator, C64};
use crate::spin_model::Hamiltonian;

/// Default largest number of sites handled by exact diagonalization.
pub const DEFAULT_ED_LIMIT: usize = 12;

/// `log Σ_i exp(-β λ_i)`, evaluated stably.
pub fn log_sum_exp_neg(beta: f64, eigenvalues: &[f64]) -> f64 {
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = eigenvalues.iter().map(|&l| (-beta * (l - min)).exp()).sum();
    -beta * min + s.ln()
}

/// `log tr exp(-β H_L)` for the terms inside `region`. An empty region gives 0.
pub fn restricted_log_partition(h: &Hamiltonian, region: &[usize], ed_limit: usize) -> Result<f64> {
    if region.len() > ed_limit {
        return Err(Error::SizeLimit { sites: region.len(), limit: ed_limit });
    }
    let op = h.restricted(region)?;
    Ok(log_sum_exp_neg(h.beta(), &eigvalsh(op.matrix())))
}

/// The Gibbs state `e^{-βH}/Z` of a whole system.
#[derive(Clone, Debug)]
pub struct ExactGibbs {
    rho: SupportedOperator,
    log_z: f64,
    beta: f64,
}

/// Diagonalizes the full Hamiltonian. Fails above `ed_limit` sites.
pub fn exact_gibbs(h: &Hamiltonian, ed_limit: usize) -> Result<ExactGibbs> {
    let n = h.num_vertices();
    if n > ed_limit {
        return Err(Error::SizeLimit { sites: n, limit: ed_limit });
    }
    let full = h.full()?;
    let (values, u) = eigh(full.matrix());
    let beta = h.beta();
    let log_z = log_sum_exp_neg(beta, &values);
    let mut weighted = u.clone();
    for (c, &l) in values.iter().enumerate() {
        weighted.column_mut(c).scale_mut((-beta * l - log_z).exp());
    }
    let rho = SupportedOperator::new(full.support().to_vec(), h.local_dim(), weighted * u.adjoint())?;
    Ok(ExactGibbs { rho, log_z, beta })
}

impl ExactGibbs {
    pub fn log_partition_function(&self) -> f64 {
        self.log_z
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn state(&self) -> &SupportedOperator {
        &self.rho
    }

    /// Normalized reduced state on `region`.
    pub fn reduced(&self, region: &[usize]) -> Result<SupportedOperator> {
        self.rho.partial_trace(region)
    }

    /// Von Neumann entropy of the reduced state (0 for the empty region).
    pub fn entropy(&self, region: &[usize]) -> Result<f64> {
        if region.is_empty() {
            return Ok(0.0);
        }
        self.reduced(region)?.entropy()
    }

    /// `S(AB) + S(BC) - S(ABC) - S(B)`.
    pub fn cmi(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        state_cmi(&self.rho, a, b, c)
    }

    /// `S(A) + S(B) - S(AB)`.
    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        self.cmi(a, &[], b)
    }

    /// `-β^{-1} log tr_{L^c} e^{-βH}` on `L`, including the scalar shift.
    pub fn effective_hamiltonian(&self, region: &[usize]) -> Result<SupportedOperator> {
        let rho_l = self.reduced(region)?;
        let log = rho_l.logm_posdef()?;
        let dim = log.dim();
        let shifted = log.matrix() + Matrix::identity(dim, dim).scale(self.log_z);
        SupportedOperator::new(log.support().to_vec(), log.local_dim(), shifted.scale(-1.0 / self.beta))
    }

    /// `tr(ρ O)` for a Hermitian observable.
    pub fn expectation(&self, o: &SupportedOperator) -> Result<f64> {
        let r = self.reduced(o.support())?;
        let t: C64 = (r.matrix() * o.matrix()).trace();
        Ok(t.re)
    }

    /// `⟨O_A O_B⟩ - ⟨O_A⟩⟨O_B⟩`.
    pub fn correlation(&self, oa: &SupportedOperator, ob: &SupportedOperator) -> Result<f64> {
        let joint = oa.multiply(ob)?;
        Ok(self.expectation(&joint)? - self.expectation(oa)? * self.expectation(ob)?)
    }
}


/// Conditional mutual information `S(AB) + S(BC) - S(ABC) - S(B)` of an arbitrary
/// normalized state.
pub fn state_cmi(rho: &SupportedOperator, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    let mut all: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
    all.sort_unstable();
    let n = all.len();
    all.dedup();
    if all.len() != n {
        return Err(Error::Overlap);
    }
    let entropy = |region: &[usize]| -> Result<f64> {
        if region.is_empty() {
            return Ok(0.0);
        }
        rho.partial_trace(region)?.entropy()
    };
    let join = |x: &[usize], y: &[usize]| -> Vec<usize> {
        let mut r: Vec<usize> = x.iter().chain(y).copied().collect();
        r.sort_unstable();
        r
    };
    Ok(entropy(&join(a, b))? + entropy(&join(b, c))? - entropy(&all)? - entropy(b)?)
}
