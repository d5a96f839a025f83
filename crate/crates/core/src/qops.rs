//! Operator and superoperator algebra for a finite-dimensional system.
//!
//! Operators are dense complex `D×D` matrices. Superoperators act on the
//! column-stacked vectorization of an operator: entry `(i, j)` of `A` lands
//! at index `j·D + i`. With this convention
//!
//! * `left_mult(X)  = I ⊗ X`   (ρ ↦ Xρ)
//! * `right_mult(X) = Xᵀ ⊗ I`  (ρ ↦ ρX)
//!
//! and superoperators compose by ordinary matrix multiplication.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used when validating Hermitian inputs (Hamiltonians, couplings).
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operator is not Hermitian (max |A - A^dagger| = {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix exponential overflowed (norm {norm:.3e})")]
    Overflow { norm: f64 },
    #[error("non-finite entries in input")]
    NonFinite,
}

/// Dense operator on the system Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn new(mat: DMatrix<C64>) -> Result<Self, AlgebraError> {
        if mat.nrows() != mat.ncols() {
            return Err(AlgebraError::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        Ok(Self { mat })
    }

    /// Row-major construction, convenient for literals.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self, AlgebraError> {
        if entries.len() != dim * dim {
            return Err(AlgebraError::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(Self {
            mat: DMatrix::from_row_slice(dim, dim, entries),
        })
    }

    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self, AlgebraError> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_rows(dim, &c)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn sigma_x() -> Self {
        Self::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn sigma_y() -> Self {
        Self::from_rows(2, &[ZERO, -I, I, ZERO]).unwrap()
    }

    pub fn sigma_z() -> Self {
        Self::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    /// `|i⟩⟨j|` in a `dim`-dimensional space.
    pub fn ket_bra(dim: usize, i: usize, j: usize) -> Self {
        let mut mat = DMatrix::zeros(dim, dim);
        mat[(i, j)] = ONE;
        Self { mat }
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) state vector.
    pub fn projector(psi: &[C64]) -> Self {
        let v = DVector::from_column_slice(psi);
        Self {
            mat: &v * v.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn dagger(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// `max |A - A†|` entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn ensure_hermitian(&self, tol: f64) -> Result<(), AlgebraError> {
        let defect = self.hermiticity_defect();
        if defect > tol {
            Err(AlgebraError::NotHermitian { defect })
        } else {
            Ok(())
        }
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self {
            mat: (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0),
        }
    }

    pub fn scale(&self, z: C64) -> Self {
        Self {
            mat: &self.mat * z,
        }
    }

    pub fn add(&self, other: &Operator) -> Self {
        Self {
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &Operator) -> Self {
        Self {
            mat: &self.mat - &other.mat,
        }
    }

    pub fn matmul(&self, other: &Operator) -> Self {
        Self {
            mat: &self.mat * &other.mat,
        }
    }

    /// `tr(A·B)` without forming the product.
    pub fn trace_product(&self, other: &Operator) -> C64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.mat[(i, k)] * other.mat[(k, i)];
            }
        }
        acc
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_dim(&self, dim: usize) -> Result<(), AlgebraError> {
        if self.dim() != dim {
            Err(AlgebraError::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            })
        } else {
            Ok(())
        }
    }
}

/// Which trace-preservation contract a superoperator is expected to obey.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceContract {
    /// `w†L = 0`: generators and memory kernels.
    Generator,
    /// `w†V = w†`: dynamical maps.
    Map,
    /// No contract (e.g. bare left/right multiplication).
    None,
}

/// Dense superoperator acting on column-stacked vectorizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    mat: DMatrix<C64>,
    contract: TraceContract,
}

impl SuperOperator {
    pub fn new(mat: DMatrix<C64>, contract: TraceContract) -> Result<Self, AlgebraError> {
        if mat.nrows() != mat.ncols() {
            return Err(AlgebraError::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        let n = mat.nrows();
        let d = (n as f64).sqrt().round() as usize;
        if d * d != n {
            return Err(AlgebraError::DimensionMismatch {
                expected: d * d,
                found: n,
            });
        }
        Ok(Self { mat, contract })
    }

    /// Wraps a column-major buffer of length `n²`, `n = D²`.
    pub fn from_column_slice(n: usize, data: &[C64], contract: TraceContract) -> Self {
        Self {
            mat: DMatrix::from_column_slice(n, n, data),
            contract,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let n = dim * dim;
        Self {
            mat: DMatrix::identity(n, n),
            contract: TraceContract::Map,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        let n = dim * dim;
        Self {
            mat: DMatrix::zeros(n, n),
            contract: TraceContract::Generator,
        }
    }

    /// Hilbert-space dimension `D`.
    pub fn dim(&self) -> usize {
        (self.mat.nrows() as f64).sqrt().round() as usize
    }

    /// Superoperator dimension `D²`.
    pub fn size(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn as_slice(&self) -> &[C64] {
        self.mat.as_slice()
    }

    pub fn contract(&self) -> TraceContract {
        self.contract
    }

    pub fn with_contract(mut self, contract: TraceContract) -> Self {
        self.contract = contract;
        self
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &SuperOperator) -> SuperOperator {
        let contract = match (self.contract, other.contract) {
            (TraceContract::Map, c) => c,
            (TraceContract::Generator, _) => TraceContract::Generator,
            _ => TraceContract::None,
        };
        SuperOperator {
            mat: &self.mat * &other.mat,
            contract,
        }
    }

    pub fn add(&self, other: &SuperOperator) -> SuperOperator {
        SuperOperator {
            mat: &self.mat + &other.mat,
            contract: if self.contract == other.contract {
                self.contract
            } else {
                TraceContract::None
            },
        }
    }

    pub fn sub(&self, other: &SuperOperator) -> SuperOperator {
        SuperOperator {
            mat: &self.mat - &other.mat,
            contract: if self.contract == other.contract {
                self.contract
            } else {
                TraceContract::None
            },
        }
    }

    pub fn scale(&self, z: C64) -> SuperOperator {
        SuperOperator {
            mat: &self.mat * z,
            contract: self.contract,
        }
    }

    /// Applies the superoperator to an operator.
    pub fn apply(&self, rho: &Operator) -> Result<Operator, AlgebraError> {
        rho.check_dim(self.dim())?;
        let v = vectorize(rho);
        devectorize(&(&self.mat * v))
    }

    /// `max_j |(w†S)_j - target_j|` where `w` vectorizes the identity and the
    /// target row is `w†` for maps and `0` for generators.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim();
        let n = self.size();
        let mut worst = 0.0f64;
        for col in 0..n {
            let mut acc = ZERO;
            for k in 0..d {
                acc += self.mat[(k * d + k, col)];
            }
            let target = match self.contract {
                TraceContract::Map => {
                    let (i, j) = (col % d, col / d);
                    if i == j {
                        ONE
                    } else {
                        ZERO
                    }
                }
                _ => ZERO,
            };
            worst = worst.max((acc - target).norm());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &SuperOperator) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Column-stacking vectorization: `(i, j)` maps to index `j·D + i`.
pub fn vectorize(a: &Operator) -> DVector<C64> {
    DVector::from_column_slice(a.mat.as_slice())
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &DVector<C64>) -> Result<Operator, AlgebraError> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(AlgebraError::DimensionMismatch {
            expected: d * d,
            found: n,
        });
    }
    Ok(Operator {
        mat: DMatrix::from_column_slice(d, d, v.as_slice()),
    })
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Superoperator of `ρ ↦ Xρ`, i.e. `I ⊗ X`.
pub fn left_mult(x: &Operator) -> SuperOperator {
    let d = x.dim();
    SuperOperator {
        mat: kron(&DMatrix::identity(d, d), &x.mat),
        contract: TraceContract::None,
    }
}

/// Superoperator of `ρ ↦ ρX`, i.e. `Xᵀ ⊗ I`.
pub fn right_mult(x: &Operator) -> SuperOperator {
    let d = x.dim();
    SuperOperator {
        mat: kron(&x.mat.transpose(), &DMatrix::identity(d, d)),
        contract: TraceContract::None,
    }
}

/// `ρ ↦ −i[H, ρ]`.
pub fn liouvillian(h: &Operator) -> Result<SuperOperator, AlgebraError> {
    h.ensure_hermitian(HERMITIAN_TOL)?;
    let comm = left_mult(h).sub(&right_mult(h));
    Ok(SuperOperator {
        mat: comm.mat * (-I),
        contract: TraceContract::Generator,
    })
}

/// `exp(L·t)`. The returned superoperator carries the map contract when `L`
/// is a generator.
pub fn superop_exp(l: &SuperOperator, t: f64) -> Result<SuperOperator, AlgebraError> {
    let a = &l.mat * C64::new(t, 0.0);
    let mat = expm(&a)?;
    let contract = match l.contract {
        TraceContract::Generator => TraceContract::Map,
        _ => TraceContract::None,
    };
    Ok(SuperOperator { mat, contract })
}

/// Summary of a (putative) density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityDiagnostics {
    pub trace: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub purity: f64,
}

pub fn density_diagnostics(rho: &Operator) -> DensityDiagnostics {
    let herm = rho.hermitian_part();
    let eig = herm.mat.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    DensityDiagnostics {
        trace: rho.trace().re,
        hermiticity_defect: rho.hermiticity_defect(),
        min_eigenvalue,
        purity: rho.trace_product(rho).re,
    }
}

fn one_norm(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn frobenius(a: &DMatrix<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn is_normal(a: &DMatrix<C64>) -> bool {
    let adj = a.adjoint();
    let comm = a * &adj - &adj * a;
    let scale = frobenius(a);
    frobenius(&comm) <= 1e-13 * scale * scale.max(1.0)
}

/// Matrix exponential.
///
/// Hermitian and anti-Hermitian matrices go through a Hermitian
/// eigendecomposition, other normal matrices through a complex Schur form,
/// and everything else through scaling-and-squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &DMatrix<C64>) -> Result<DMatrix<C64>, AlgebraError> {
    if a.nrows() != a.ncols() {
        return Err(AlgebraError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if !a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(AlgebraError::NonFinite);
    }
    let out = match NormalExp::try_new(a) {
        Some(ne) => ne.exp(1.0),
        None => expm_pade(a),
    };
    if !out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(AlgebraError::Overflow { norm: one_norm(a) });
    }
    Ok(out)
}

/// Unitary diagonalization `A = U·diag(λ)·U†` of a normal matrix, reusable
/// for `exp(A·t)` at many `t`.
#[derive(Debug, Clone)]
pub struct NormalExp {
    basis: DMatrix<C64>,
    eigenvalues: Vec<C64>,
}

impl NormalExp {
    pub fn try_new(a: &DMatrix<C64>) -> Option<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || !is_normal(a) {
            return None;
        }
        let herm_defect = frobenius(&(a - a.adjoint()));
        let anti_defect = frobenius(&(a + a.adjoint()));
        let scale = frobenius(a).max(f64::MIN_POSITIVE);
        if anti_defect <= 1e-14 * scale || herm_defect <= 1e-14 * scale {
            let anti = anti_defect <= herm_defect;
            // iA is Hermitian when A is anti-Hermitian.
            let h = if anti { a * I } else { a.clone() };
            let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
            let eig = h.symmetric_eigen();
            let eigenvalues = eig
                .eigenvalues
                .iter()
                .map(|&x| if anti { C64::new(0.0, -x) } else { C64::new(x, 0.0) })
                .collect();
            return Some(Self {
                basis: eig.eigenvectors,
                eigenvalues,
            });
        }
        let schur = a.clone().try_schur(1e-15, 10_000)?;
        let (q, t) = schur.unpack();
        let off: f64 = (0..n)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .map(|(i, j)| t[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off > 1e-12 * scale {
            return None;
        }
        Some(Self {
            eigenvalues: (0..n).map(|i| t[(i, i)]).collect(),
            basis: q,
        })
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    /// `exp(A·t)`.
    pub fn exp(&self, t: f64) -> DMatrix<C64> {
        let n = self.basis.nrows();
        let mut scaled = self.basis.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            let f = (lam * t).exp();
            for i in 0..n {
                scaled[(i, j)] *= f;
            }
        }
        scaled * self.basis.adjoint()
    }
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Scaling-and-squaring with the [13/13] Padé approximant.
pub fn expm_pade(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * C64::new(0.5f64.powi(s), 0.0);
    let id = DMatrix::<C64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| C64::new(PADE13[k], 0.0);
    let u_inner = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = &a * (&a6 * u_inner + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let v_inner = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * v_inner + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .unwrap_or_else(|| DMatrix::from_element(n, n, C64::new(f64::NAN, 0.0)));
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `acc += w · a · b` for column-major `n×n` buffers.
#[inline]
pub(crate) fn mul_acc(acc: &mut [C64], a: &[C64], b: &[C64], n: usize, w: f64) {
    if n == 4 {
        mul_acc4(acc, a, b, w);
        return;
    }
    for j in 0..n {
        for k in 0..n {
            let bkj = b[k + j * n] * w;
            let col = &a[k * n..k * n + n];
            let out = &mut acc[j * n..j * n + n];
            for i in 0..n {
                out[i] += col[i] * bkj;
            }
        }
    }
}

#[inline]
fn mul_acc4(acc: &mut [C64], a: &[C64], b: &[C64], w: f64) {
    let a: &[C64; 16] = a[..16].try_into().unwrap();
    let b: &[C64; 16] = b[..16].try_into().unwrap();
    let acc: &mut [C64; 16] = (&mut acc[..16]).try_into().unwrap();
    for j in 0..4 {
        let mut c0 = ZERO;
        let mut c1 = ZERO;
        let mut c2 = ZERO;
        let mut c3 = ZERO;
        for k in 0..4 {
            let bkj = b[k + 4 * j];
            c0 += a[4 * k] * bkj;
            c1 += a[4 * k + 1] * bkj;
            c2 += a[4 * k + 2] * bkj;
            c3 += a[4 * k + 3] * bkj;
        }
        acc[4 * j] += c0 * w;
        acc[4 * j + 1] += c1 * w;
        acc[4 * j + 2] += c2 * w;
        acc[4 * j + 3] += c3 * w;
    }
}

/// `out = a · b` for column-major `n×n` buffers.
pub(crate) fn mul_into(out: &mut [C64], a: &[C64], b: &[C64], n: usize) {
    out.iter_mut().for_each(|z| *z = ZERO);
    mul_acc(out, a, b, n, 1.0);
}
