//! Gaussian states of optical modes in the quadrature (covariance) picture.
//!
//! Quadratures are ordered `(X₁, Y₁, X₂, Y₂, …, X_N, Y_N)` everywhere: in the
//! mean vector, in covariance matrices, in symplectic matrices and in every
//! file dump. The vacuum variance `v0` of a single quadrature is carried
//! explicitly by [`Convention`]; the default is `1/4`.

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for covariance symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Slack allowed on eigenvalues of `cov + i·v0·Ω`.
pub const PSD_TOL: f64 = 1e-9;
/// Absolute tolerance for `SᵀΩS = Ω`.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

/// Vacuum-variance convention of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convention {
    v0: f64,
}

impl Convention {
    /// Per-quadrature shot-noise variance of 1/4.
    pub const QUARTER: Convention = Convention { v0: 0.25 };

    pub fn new(v0: f64) -> Result<Self> {
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::invalid(format!("vacuum variance must be positive and finite, got {v0}")));
        }
        Ok(Convention { v0 })
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn is_quarter(&self) -> bool {
        self.v0 == Self::QUARTER.v0
    }
}

impl Default for Convention {
    fn default() -> Self {
        Self::QUARTER
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    Y,
}

impl Quadrature {
    fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::Y => 1,
        }
    }
}

/// One weighted quadrature in a [`QuadCombination`]. Modes are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub mode: usize,
    pub quad: Quadrature,
    pub coeff: f64,
}

/// A real linear form over mode quadratures, e.g. `√2·X₂ + Y₃ + g·X₁`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadCombination {
    terms: Vec<Term>,
}

impl QuadCombination {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn x(mut self, mode: usize, coeff: f64) -> Self {
        self.terms.push(Term { mode, quad: Quadrature::X, coeff });
        self
    }

    pub fn y(mut self, mode: usize, coeff: f64) -> Self {
        self.terms.push(Term { mode, quad: Quadrature::Y, coeff });
        self
    }

    pub fn with_term(mut self, mode: usize, quad: Quadrature, coeff: f64) -> Self {
        self.terms.push(Term { mode, quad, coeff });
        self
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Smallest mode count a state needs for this combination to be valid.
    pub fn required_modes(&self) -> usize {
        self.terms.iter().map(|t| t.mode + 1).max().unwrap_or(0)
    }

    pub fn check(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::invalid("quadrature combination has no terms"));
        }
        if let Some(t) = self.terms.iter().find(|t| !t.coeff.is_finite()) {
            return Err(Error::invalid(format!("non-finite coefficient on mode {}", t.mode + 1)));
        }
        Ok(())
    }

    /// Coefficient vector embedded in the `2N` quadrature space.
    pub fn coefficients(&self, n_modes: usize) -> Result<DVector<f64>> {
        self.check()?;
        if self.required_modes() > n_modes {
            return Err(Error::invalid(format!(
                "combination {self} addresses mode {} but the state has {n_modes} modes",
                self.required_modes()
            )));
        }
        let mut c = DVector::zeros(2 * n_modes);
        for t in &self.terms {
            c[2 * t.mode + t.quad.offset()] += t.coeff;
        }
        Ok(c)
    }

    /// Variance of this combination on the vacuum, `v0·Σ coeff²` after merging
    /// repeated quadratures.
    pub fn vacuum_variance(&self, convention: Convention) -> Result<f64> {
        let c = self.coefficients(self.required_modes())?;
        Ok(convention.v0() * c.norm_squared())
    }
}

impl fmt::Display for QuadCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            let q = match t.quad {
                Quadrature::X => "X",
                Quadrature::Y => "Y",
            };
            if i == 0 {
                write!(f, "{}·{}{}", t.coeff, q, t.mode + 1)?;
            } else if t.coeff < 0.0 {
                write!(f, " - {}·{}{}", -t.coeff, q, t.mode + 1)?;
            } else {
                write!(f, " + {}·{}{}", t.coeff, q, t.mode + 1)?;
            }
        }
        Ok(())
    }
}

/// Block-diagonal symplectic form with 2×2 blocks `[[0, 1], [-1, 0]]`.
pub fn omega(n_modes: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

/// A linear canonical map on the quadratures of `arity` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    matrix: DMatrix<f64>,
    arity: usize,
}

impl SymplecticOp {
    /// Wraps a matrix after checking its shape, finiteness and symplecticity.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || !matrix.nrows().is_multiple_of(2) || matrix.nrows() == 0 {
            return Err(Error::invalid(format!(
                "symplectic matrix must be 2k×2k, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("symplectic matrix has non-finite entries"));
        }
        let op = SymplecticOp { arity: matrix.nrows() / 2, matrix };
        let dev = op.symplectic_deviation();
        if dev > SYMPLECTIC_TOL {
            return Err(Error::invalid(format!("matrix is not symplectic (max |SᵀΩS − Ω| = {dev:e})")));
        }
        Ok(op)
    }

    pub fn identity(arity: usize) -> Self {
        SymplecticOp { matrix: DMatrix::identity(2 * arity, 2 * arity), arity }
    }

    /// Two-mode squeezer of a non-degenerate amplifier run in de-amplification:
    ///
    /// ```text
    /// X₁' = X₁ cosh r − X₂ sinh r     Y₁' = Y₁ cosh r + Y₂ sinh r
    /// X₂' = X₂ cosh r − X₁ sinh r     Y₂' = Y₂ cosh r + Y₁ sinh r
    /// ```
    pub fn squeeze_deamp_pair(r: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::invalid(format!("squeezing factor must be finite and non-negative, got {r}")));
        }
        Ok(Self::two_mode_squeezer(r))
    }

    // Same map without the sign restriction; negative r gives the inverse.
    fn two_mode_squeezer(r: f64) -> Self {
        let (c, s) = (r.cosh(), r.sinh());
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(4, 4, &[
             c, 0.0,  -s, 0.0,
            0.0,  c, 0.0,   s,
             -s, 0.0,  c, 0.0,
            0.0,  s, 0.0,   c,
        ]);
        SymplecticOp { matrix: m, arity: 2 }
    }

    /// Lossless two-port beam splitter acting on annihilation operators as
    ///
    /// ```text
    /// b₁ = cos θ · a₁ + e^{iφ} sin θ · a₂
    /// b₂ = e^{-iφ} (−e^{-iφ} sin θ · a₁ + cos θ · a₂)
    /// ```
    ///
    /// `θ = 0, φ = 0` is the identity; `θ = π/4, φ = π/2` gives
    /// `b₁ = (a₁ + i a₂)/√2` and `b₂ = (a₁ − i a₂)/√2`.
    pub fn beam_splitter(transmittance_angle: f64, phase: f64) -> Result<Self> {
        if !(transmittance_angle.is_finite() && phase.is_finite()) {
            return Err(Error::invalid("beam splitter parameters must be finite"));
        }
        let (ct, st) = (transmittance_angle.cos(), transmittance_angle.sin());
        let e = Complex::from_polar(1.0, phase);
        let e_conj = e.conj();
        let u = Matrix2::new(Complex::from(ct), e * st, -(e_conj * e_conj) * st, e_conj * ct);
        Ok(Self::from_passive(&u))
    }

    /// 50:50 beam splitter with the given relative phase.
    pub fn balanced_beam_splitter(phase: f64) -> Result<Self> {
        Self::beam_splitter(std::f64::consts::FRAC_PI_4, phase)
    }

    /// Beam splitter with power transmittance `eta`, zero phase.
    pub fn transmittance(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("transmittance must lie in [0, 1], got {eta}")));
        }
        Self::beam_splitter(eta.sqrt().acos(), 0.0)
    }

    /// Single-mode phase shift `a → e^{iφ} a`.
    pub fn phase_rotation(phase: f64) -> Result<Self> {
        if !phase.is_finite() {
            return Err(Error::invalid("phase must be finite"));
        }
        let (c, s) = (phase.cos(), phase.sin());
        Ok(SymplecticOp { matrix: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]), arity: 1 })
    }

    /// Mode relabeling: output mode `j` is input mode `order[j]`.
    pub fn permutation(order: &[usize]) -> Result<Self> {
        let k = order.len();
        let mut seen = vec![false; k];
        for &i in order {
            if i >= k || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("{order:?} is not a permutation of 0..{k}")));
            }
        }
        let mut m = DMatrix::zeros(2 * k, 2 * k);
        for (j, &i) in order.iter().enumerate() {
            m[(2 * j, 2 * i)] = 1.0;
            m[(2 * j + 1, 2 * i + 1)] = 1.0;
        }
        Ok(SymplecticOp { matrix: m, arity: k })
    }

    // Real quadrature form of a passive 2×2 unitary: with U = A + iB,
    // X' = A X − B Y and Y' = B X + A Y.
    fn from_passive(u: &Matrix2<Complex<f64>>) -> Self {
        let mut m = DMatrix::zeros(4, 4);
        for j in 0..2 {
            for k in 0..2 {
                let (a, b) = (u[(j, k)].re, u[(j, k)].im);
                m[(2 * j, 2 * k)] = a;
                m[(2 * j, 2 * k + 1)] = -b;
                m[(2 * j + 1, 2 * k)] = b;
                m[(2 * j + 1, 2 * k + 1)] = a;
            }
        }
        SymplecticOp { matrix: m, arity: 2 }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Composite map: `self` first, then `next`.
    pub fn then(&self, next: &SymplecticOp) -> Result<Self> {
        if self.arity != next.arity {
            return Err(Error::invalid(format!("cannot compose arity {} with arity {}", self.arity, next.arity)));
        }
        Ok(SymplecticOp { matrix: &next.matrix * &self.matrix, arity: self.arity })
    }

    /// `S⁻¹ = −Ω Sᵀ Ω`.
    pub fn inverse(&self) -> Self {
        let w = omega(self.arity);
        SymplecticOp { matrix: -(&w * self.matrix.transpose() * &w), arity: self.arity }
    }

    /// `max |SᵀΩS − Ω|`.
    pub fn symplectic_deviation(&self) -> f64 {
        let w = omega(self.arity);
        (self.matrix.transpose() * &w * &self.matrix - &w).amax()
    }

    fn embed(&self, modes: &[usize], n_modes: usize) -> Result<DMatrix<f64>> {
        if modes.len() != self.arity {
            return Err(Error::invalid(format!(
                "operation acts on {} modes but {} were given",
                self.arity,
                modes.len()
            )));
        }
        let mut seen = vec![false; n_modes];
        for &m in modes {
            if m >= n_modes {
                return Err(Error::invalid(format!("mode index {m} out of range for {n_modes} modes")));
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::invalid(format!("mode index {m} repeated")));
            }
        }
        let mut full = DMatrix::identity(2 * n_modes, 2 * n_modes);
        for (j, &mj) in modes.iter().enumerate() {
            for (k, &mk) in modes.iter().enumerate() {
                for a in 0..2 {
                    for b in 0..2 {
                        full[(2 * mj + a, 2 * mk + b)] = self.matrix[(2 * j + a, 2 * k + b)];
                    }
                }
            }
        }
        Ok(full)
    }
}

/// Outcome of [`GaussianState::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub max_asymmetry: f64,
    /// Smallest eigenvalue of the Hermitian matrix `cov + i·v0·Ω`.
    pub min_eigenvalue: f64,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Gaussian state of `N` modes: mean and covariance over `2N` quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    convention: Convention,
}

impl GaussianState {
    /// Builds a state from raw parts. Only shapes and finiteness are checked;
    /// call [`validate`](Self::validate) for the physical constraints.
    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>, convention: Convention) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::invalid(format!("mean vector length must be 2N > 0, got {dim}")));
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::invalid(format!("covariance must be {dim}×{dim}, got {}×{}", cov.nrows(), cov.ncols())));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("state has non-finite entries"));
        }
        Ok(GaussianState { mean, cov, convention })
    }

    pub fn vacuum(n_modes: usize, convention: Convention) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::invalid("a state needs at least one mode"));
        }
        let dim = 2 * n_modes;
        Ok(GaussianState { mean: DVector::zeros(dim), cov: DMatrix::identity(dim, dim) * convention.v0(), convention })
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Shifts the mean of one mode. Covariances are untouched.
    pub fn displace(&self, mode: usize, dx: f64, dy: f64) -> Result<Self> {
        self.check_mode(mode)?;
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(Error::invalid("displacement must be finite"));
        }
        let mut out = self.clone();
        out.mean[2 * mode] += dx;
        out.mean[2 * mode + 1] += dy;
        Ok(out)
    }

    pub fn apply(&self, op: &SymplecticOp, modes: &[usize]) -> Result<Self> {
        let s = op.embed(modes, self.n_modes())?;
        let mut cov = &s * &self.cov * s.transpose();
        // Re-symmetrize to keep rounding asymmetry from accumulating.
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(GaussianState { mean: &s * &self.mean, cov, convention: self.convention })
    }

    /// Pure-loss channel of transmittance `eta` on one mode.
    pub fn loss_channel(&self, mode: usize, eta: f64) -> Result<Self> {
        self.check_mode(mode)?;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("loss transmittance must lie in [0, 1], got {eta}")));
        }
        let mut out = self.clone();
        let t = eta.sqrt();
        let dim = self.mean.len();
        for q in [2 * mode, 2 * mode + 1] {
            out.mean[q] *= t;
            for j in 0..dim {
                if j / 2 != mode {
                    out.cov[(q, j)] *= t;
                    out.cov[(j, q)] *= t;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                let v = &mut out.cov[(2 * mode + a, 2 * mode + b)];
                *v *= eta;
                if a == b {
                    *v += (1.0 - eta) * self.convention.v0();
                }
            }
        }
        Ok(out)
    }

    /// Appends `k` vacuum modes after the existing ones.
    pub fn append_vacuum(&self, k: usize) -> Self {
        let n = self.mean.len();
        let dim = n + 2 * k;
        let mut mean = DVector::zeros(dim);
        mean.rows_mut(0, n).copy_from(&self.mean);
        let mut cov = DMatrix::identity(dim, dim) * self.convention.v0();
        cov.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        GaussianState { mean, cov, convention: self.convention }
    }

    /// Reduced state on the listed modes, in the listed order.
    pub fn reduce(&self, modes: &[usize]) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::invalid("cannot reduce to zero modes"));
        }
        for &m in modes {
            self.check_mode(m)?;
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]);
        Ok(GaussianState { mean, cov, convention: self.convention })
    }

    /// `cᵀ·cov·c` for the combination's coefficient vector `c`.
    pub fn combination_variance(&self, combo: &QuadCombination) -> Result<f64> {
        let c = combo.coefficients(self.n_modes())?;
        Ok((c.transpose() * &self.cov * &c)[(0, 0)].max(0.0))
    }

    pub fn combination_mean(&self, combo: &QuadCombination) -> Result<f64> {
        let c = combo.coefficients(self.n_modes())?;
        Ok(c.dot(&self.mean))
    }

    /// Covariance between two combinations, `aᵀ·cov·b`.
    pub fn combination_covariance(&self, a: &QuadCombination, b: &QuadCombination) -> Result<f64> {
        let ca = a.coefficients(self.n_modes())?;
        let cb = b.coefficients(self.n_modes())?;
        Ok((ca.transpose() * &self.cov * &cb)[(0, 0)])
    }

    /// Re-expresses the state in a different vacuum-variance convention.
    pub fn rescale_convention(&self, v0_new: f64) -> Result<Self> {
        let convention = Convention::new(v0_new)?;
        let k = v0_new / self.convention.v0();
        Ok(GaussianState { mean: &self.mean * k.sqrt(), cov: &self.cov * k, convention })
    }

    /// Checks symmetry and the uncertainty relation `cov + i·v0·Ω ≥ 0`.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let max_asymmetry = (&self.cov - self.cov.transpose()).amax();
        if max_asymmetry > SYMMETRY_TOL {
            violations.push(format!("covariance asymmetric by {max_asymmetry:e}"));
        }
        // Hermitian H = A + iB has the spectrum of the real symmetric
        // [[A, −B], [B, A]], each eigenvalue doubled.
        let dim = self.mean.len();
        let a = (&self.cov + self.cov.transpose()) * 0.5;
        let b = omega(self.n_modes()) * self.convention.v0();
        let mut big = DMatrix::zeros(2 * dim, 2 * dim);
        big.view_mut((0, 0), (dim, dim)).copy_from(&a);
        big.view_mut((dim, dim), (dim, dim)).copy_from(&a);
        big.view_mut((0, dim), (dim, dim)).copy_from(&(-&b));
        big.view_mut((dim, 0), (dim, dim)).copy_from(&b);
        let min_eigenvalue = SymmetricEigen::new(big).eigenvalues.min();
        if min_eigenvalue < -PSD_TOL {
            violations.push(format!(
                "uncertainty relation violated: smallest eigenvalue of cov + i·v0·Ω is {min_eigenvalue:e}"
            ));
        }
        ValidationReport { max_asymmetry, min_eigenvalue, violations }
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(Error::invalid(format!("mode index {mode} out of range for {} modes", self.n_modes())));
        }
        Ok(())
    }
}
