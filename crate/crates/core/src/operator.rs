//! Operators carried together with the ordered set of vertices they act on.
//!
//! Matrix indices follow ascending vertex order, with the smallest vertex as the
//! most significant digit. `Z` on `{1}` embedded into `{0, 1}` is therefore `I ⊗ Z`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;

/// Relative tolerance used when deciding whether a matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Eigenvalues below this are treated as zero in entropy evaluations.
pub const ENTROPY_FLOOR: f64 = 1e-15;

/// Largest entrywise deviation `|m_ij - conj(m_ji)|`.
pub fn hermitian_deviation(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

fn is_hermitian(m: &Matrix) -> bool {
    hermitian_deviation(m) <= HERMITIAN_TOL * max_abs(m).max(1.0)
}

/// `(m + m†) / 2`.
pub fn hermitian_part(m: &Matrix) -> Matrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn eigh(m: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn eigvalsh(m: &Matrix) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(hermitian_part(m)).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// `U diag(f(λ)) U†` for the Hermitian part of `m`.
pub fn spectral_map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let (values, u) = eigh(m);
    let mut scaled = u.clone();
    for (c, &v) in values.iter().enumerate() {
        let fv = f(v);
        scaled.column_mut(c).scale_mut(fv);
    }
    scaled * u.adjoint()
}

/// `-Σ λ log λ` over eigenvalues above [`ENTROPY_FLOOR`].
pub fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values.iter().filter(|&&x| x > ENTROPY_FLOOR).map(|&x| -x * x.ln()).sum()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Single-qubit Pauli matrix for `I`, `X`, `Y` or `Z`.
pub fn pauli(c: char) -> Result<Matrix> {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let data = match c.to_ascii_uppercase() {
        'I' => [l, o, o, l],
        'X' => [o, l, l, o],
        'Y' => [o, -i, i, o],
        'Z' => [l, o, o, -l],
        other => return Err(Error::Parse(format!("unknown Pauli letter '{other}'"))),
    };
    Ok(Matrix::from_row_slice(2, 2, &data))
}

/// Tensor product of Pauli letters, first letter most significant.
pub fn pauli_string(s: &str) -> Result<Matrix> {
    let mut out = Matrix::from_element(1, 1, C64::new(1.0, 0.0));
    for c in s.chars() {
        out = kron(&out, &pauli(c)?);
    }
    Ok(out)
}

/// Maps a sub-index (digits over `positions`, first most significant) to its
/// contribution to a full index over `total` qudits.
pub(crate) fn index_offsets(total: usize, positions: &[usize], d: usize) -> Vec<usize> {
    let strides: Vec<usize> = positions.iter().map(|&p| d.pow((total - 1 - p) as u32)).collect();
    let count = d.pow(positions.len() as u32);
    (0..count)
        .map(|mut s| {
            let mut off = 0;
            for k in (0..positions.len()).rev() {
                off += (s % d) * strides[k];
                s /= d;
            }
            off
        })
        .collect()
}

fn complement_positions(total: usize, positions: &[usize]) -> Vec<usize> {
    (0..total).filter(|p| !positions.contains(p)).collect()
}

/// Returns `(op ⊗ 1) m` where `op` acts on the qudits at `positions` of a
/// `total`-qudit space.
pub fn apply_local_left(m: &Matrix, op: &Matrix, positions: &[usize], total: usize, d: usize) -> Matrix {
    let off_p = index_offsets(total, positions, d);
    let off_r = index_offsets(total, &complement_positions(total, positions), d);
    let k = off_p.len();
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    let mut buf = vec![C64::new(0.0, 0.0); k];
    for c in 0..m.ncols() {
        for &r in &off_r {
            for j in 0..k {
                buf[j] = m[(off_p[j] + r, c)];
            }
            for i in 0..k {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..k {
                    acc += op[(i, j)] * buf[j];
                }
                out[(off_p[i] + r, c)] = acc;
            }
        }
    }
    out
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

fn positions_in(inner: &[usize], outer: &[usize]) -> Result<Vec<usize>> {
    inner
        .iter()
        .map(|v| {
            outer.binary_search(v).map_err(|_| Error::NotSubset { inner: inner.to_vec(), outer: outer.to_vec() })
        })
        .collect()
}

/// A finite matrix acting on an explicit, ascending set of vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportedOperator {
    support: Vec<usize>,
    local_dim: usize,
    matrix: Matrix,
}

impl SupportedOperator {
    /// Builds an operator on a strictly ascending support.
    pub fn new(support: Vec<usize>, local_dim: usize, matrix: Matrix) -> Result<Self> {
        if local_dim < 2 {
            return Err(Error::Dimension(format!("local dimension {local_dim} must be at least 2")));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("support {support:?} must be strictly ascending")));
        }
        let dim = local_dim.pow(support.len() as u32);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, support of {} qudits needs {dim}x{dim}",
                matrix.nrows(),
                matrix.ncols(),
                support.len()
            )));
        }
        Ok(Self { support, local_dim, matrix })
    }

    /// Builds an operator whose matrix is written in the given (possibly unsorted)
    /// vertex order, permuting qudits into ascending order.
    pub fn from_ordered(support: Vec<usize>, local_dim: usize, matrix: Matrix) -> Result<Self> {
        let n = support.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| support[i]);
        let sorted: Vec<usize> = order.iter().map(|&i| support[i]).collect();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("support {support:?} has repeated vertices")));
        }
        let dim = local_dim.pow(n as u32);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension(format!("matrix is {}x{}, expected {dim}x{dim}", matrix.nrows(), matrix.ncols())));
        }
        let mut inv = vec![0; n];
        for (new_pos, &old) in order.iter().enumerate() {
            inv[old] = new_pos;
        }
        let map = index_offsets(n, &inv, local_dim);
        let mut permuted = Matrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                permuted[(map[i], map[j])] = matrix[(i, j)];
            }
        }
        Self::new(sorted, local_dim, permuted)
    }

    pub fn identity(support: Vec<usize>, local_dim: usize) -> Self {
        let dim = local_dim.pow(support.len() as u32);
        Self { support, local_dim, matrix: Matrix::identity(dim, dim) }
    }

    pub fn zeros(support: Vec<usize>, local_dim: usize) -> Self {
        let dim = local_dim.pow(support.len() as u32);
        Self { support, local_dim, matrix: Matrix::zeros(dim, dim) }
    }

    /// A multiple of the identity with empty support.
    pub fn scalar(value: f64, local_dim: usize) -> Self {
        Self { support: Vec::new(), local_dim, matrix: Matrix::from_element(1, 1, C64::new(value, 0.0)) }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    /// Tensors with the identity on `target \ support`.
    pub fn embed(&self, target: &[usize]) -> Result<Self> {
        if target == self.support.as_slice() {
            return Ok(self.clone());
        }
        if target.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("support {target:?} must be strictly ascending")));
        }
        let d = self.local_dim;
        let pos = positions_in(&self.support, target)?;
        let total = target.len();
        let off_a = index_offsets(total, &pos, d);
        let off_r = index_offsets(total, &complement_positions(total, &pos), d);
        let dim = d.pow(total as u32);
        let mut out = Matrix::zeros(dim, dim);
        for &r in &off_r {
            for (ia, &oa) in off_a.iter().enumerate() {
                for (ja, &ob) in off_a.iter().enumerate() {
                    out[(oa + r, ob + r)] = self.matrix[(ia, ja)];
                }
            }
        }
        Ok(Self { support: target.to_vec(), local_dim: d, matrix: out })
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.local_dim != other.local_dim {
            return Err(Error::Dimension(format!("local dimensions {} and {} differ", self.local_dim, other.local_dim)));
        }
        Ok(())
    }

    /// Product on the union of supports.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let u = sorted_union(&self.support, &other.support);
        let a = self.embed(&u)?;
        let b = other.embed(&u)?;
        Ok(Self { support: u, local_dim: self.local_dim, matrix: a.matrix * b.matrix })
    }

    /// Sum on the union of supports.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, 1.0)
    }

    /// `self + c·other` on the union of supports.
    pub fn add_scaled(&self, other: &Self, c: f64) -> Result<Self> {
        self.check_dim(other)?;
        let u = sorted_union(&self.support, &other.support);
        let a = self.embed(&u)?;
        let b = other.embed(&u)?;
        Ok(Self { support: u, local_dim: self.local_dim, matrix: a.matrix + b.matrix.scale(c) })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { support: self.support.clone(), local_dim: self.local_dim, matrix: self.matrix.scale(c) }
    }

    pub fn adjoint(&self) -> Self {
        Self { support: self.support.clone(), local_dim: self.local_dim, matrix: self.matrix.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Traces out `support \ keep`; `keep` must lie inside the support.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep == self.support {
            return Ok(self.clone());
        }
        let d = self.local_dim;
        let total = self.support.len();
        let pos = positions_in(&keep, &self.support)?;
        let off_k = index_offsets(total, &pos, d);
        let off_t = index_offsets(total, &complement_positions(total, &pos), d);
        let dk = off_k.len();
        let mut out = Matrix::zeros(dk, dk);
        for (i, &oi) in off_k.iter().enumerate() {
            for (j, &oj) in off_k.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &off_t {
                    acc += self.matrix[(oi + t, oj + t)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Self { support: keep, local_dim: d, matrix: out })
    }

    /// Un-normalized reduced operator `tr_{L^c}(O) ⊗ 1`, kept on the full support.
    pub fn reduced(&self, region: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = self.support.iter().copied().filter(|v| region.contains(v)).collect();
        self.partial_trace(&keep)?.embed(&self.support)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.matrix)
    }

    pub fn is_hermitian(&self) -> bool {
        is_hermitian(&self.matrix)
    }

    /// Ascending eigenvalues; fails for non-Hermitian input.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.require_hermitian()?;
        Ok(eigvalsh(&self.matrix))
    }

    fn require_hermitian(&self) -> Result<()> {
        if self.is_hermitian() {
            Ok(())
        } else {
            Err(Error::NotHermitian { deviation: self.hermitian_deviation() })
        }
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> f64 {
        if self.is_hermitian() {
            eigvalsh(&self.matrix).iter().fold(0.0_f64, |a, x| a.max(x.abs()))
        } else {
            self.matrix.clone().singular_values().iter().fold(0.0_f64, |a, &x| a.max(x))
        }
    }

    /// Trace (nuclear) norm.
    pub fn trace_norm(&self) -> f64 {
        if self.is_hermitian() {
            eigvalsh(&self.matrix).iter().map(|x| x.abs()).sum()
        } else {
            self.matrix.clone().singular_values().iter().sum()
        }
    }

    /// `exp(scale · O)` for Hermitian `O`.
    pub fn expm_hermitian(&self, scale: f64) -> Result<Self> {
        self.require_hermitian()?;
        let m = spectral_map(&self.matrix, |x| (scale * x).exp());
        Ok(Self { support: self.support.clone(), local_dim: self.local_dim, matrix: m })
    }

    /// Principal logarithm of a positive-definite operator.
    pub fn logm_posdef(&self) -> Result<Self> {
        self.require_hermitian()?;
        let (values, _) = eigh(&self.matrix);
        let min = values.first().copied().unwrap_or(1.0);
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let m = spectral_map(&self.matrix, f64::ln);
        Ok(Self { support: self.support.clone(), local_dim: self.local_dim, matrix: m })
    }

    /// Von Neumann entropy of the operator read as a density matrix.
    pub fn entropy(&self) -> Result<f64> {
        Ok(entropy_of_spectrum(&self.eigenvalues()?))
    }
}

/// `log O^{AB} + log O^{BC} − log O^{ABC} − log O^B` for positive `O`, with every
/// reduced operator un-normalized and tensored with the identity on the support of `O`.
pub fn conditional_log_combo(op: &SupportedOperator, a: &[usize], b: &[usize], c: &[usize]) -> Result<SupportedOperator> {
    let mut seen: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
    seen.sort_unstable();
    let n = seen.len();
    seen.dedup();
    if seen.len() != n {
        return Err(Error::Overlap);
    }
    positions_in(&seen, op.support())?;
    let region = |parts: &[&[usize]]| -> Vec<usize> {
        let mut r: Vec<usize> = parts.iter().flat_map(|p| p.iter().copied()).collect();
        r.sort_unstable();
        r
    };
    let terms: [(Vec<usize>, f64); 4] = [
        (region(&[a, b]), 1.0),
        (region(&[b, c]), 1.0),
        (region(&[a, b, c]), -1.0),
        (region(&[b]), -1.0),
    ];
    let mut out = SupportedOperator::zeros(op.support().to_vec(), op.local_dim());
    for (l, sign) in terms {
        let log = op.partial_trace(&l)?.logm_posdef()?.embed(op.support())?;
        out = out.add_scaled(&log, sign)?;
    }
    Ok(out)
}
