//! Structural and stability analysis of small dense systems.
//!
//! Characteristic polynomials and the adjugate of `sI - A` both come from the
//! Faddeev–LeVerrier recursion, so the transfer-function denominator is the
//! characteristic polynomial by construction.

use nalgebra::Schur;
use num_complex::Complex64;

use crate::linalg::{self, Matrix};
use crate::model::StateSpace;
use crate::{Error, Result};

/// Real polynomial, highest-degree coefficient first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Leading zeros are stripped; an all-zero input becomes the zero constant.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let first = coeffs.iter().position(|&c| c != 0.0);
        let coeffs = match first {
            Some(i) => coeffs[i..].to_vec(),
            None => vec![0.0],
        };
        Self { coeffs }
    }

    /// Monic polynomial with the given roots. Complex roots must come in
    /// conjugate pairs so that the coefficients are real.
    pub fn from_roots(roots: &[Complex64]) -> Result<Self> {
        let tol = 1e-9;
        let mut used = vec![false; roots.len()];
        for (i, r) in roots.iter().enumerate() {
            if r.im.abs() <= tol * r.norm().max(1.0) || used[i] {
                continue;
            }
            let partner = roots.iter().enumerate().position(|(j, s)| {
                j != i && !used[j] && (s - r.conj()).norm() <= tol * r.norm().max(1.0)
            });
            match partner {
                Some(j) => {
                    used[i] = true;
                    used[j] = true;
                }
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "root {r} has no conjugate partner"
                    )))
                }
            }
        }

        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
            for (k, c) in acc.iter().enumerate() {
                next[k] += c;
                next[k + 1] -= c * r;
            }
            acc = next;
        }
        Ok(Self::new(acc.iter().map(|c| c.re).collect()))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `s^power`.
    pub fn coeff(&self, power: usize) -> f64 {
        if power > self.degree() {
            0.0
        } else {
            self.coeffs[self.degree() - power]
        }
    }

    pub fn is_monic(&self) -> bool {
        self.coeffs[0] == 1.0
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    fn derivative(&self) -> Polynomial {
        let d = self.degree();
        if d == 0 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs[..d]
                .iter()
                .enumerate()
                .map(|(i, &c)| c * (d - i) as f64)
                .collect(),
        )
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Roots via the eigenvalues of the companion matrix, polished with
    /// Newton steps that are kept only when they reduce `|p|`.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let n = self.degree();
        if n == 0 {
            return Ok(Vec::new());
        }
        let lead = self.coeffs[0];
        let mut companion = Matrix::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -self.coeff(i) / lead;
        }
        let mut roots = complex_eigenvalues(&companion)?;

        let dp = self.derivative();
        for r in roots.iter_mut() {
            for _ in 0..8 {
                let d = dp.eval_complex(*r);
                if d.norm() == 0.0 {
                    break;
                }
                let cand = *r - self.eval_complex(*r) / d;
                if self.eval_complex(cand).norm() < self.eval_complex(*r).norm() {
                    *r = cand;
                } else {
                    break;
                }
            }
        }
        sort_roots(&mut roots);
        Ok(roots)
    }
}

/// `numerator / denominator`, denominator monic.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub numerator: Polynomial,
    pub denominator: Polynomial,
}

impl TransferFunction {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.numerator.eval_complex(s) / self.denominator.eval_complex(s)
    }

    /// `Phi(0)`.
    pub fn dc_gain(&self) -> f64 {
        self.numerator.eval(0.0) / self.denominator.eval(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub matrix: Matrix,
    pub rank: usize,
    pub full_rank: bool,
    /// Singular-value cutoff used to decide the rank.
    pub tolerance: f64,
}

impl RankReport {
    fn new(matrix: Matrix, n: usize) -> Self {
        let (rank, tolerance) = linalg::numerical_rank(&matrix);
        Self {
            matrix,
            rank,
            full_rank: rank == n,
            tolerance,
        }
    }
}

/// Faddeev–LeVerrier: returns the monic characteristic polynomial and the
/// matrices `N_1..N_n` with `adj(sI - M) = sum_k N_k s^(n-k)`.
pub fn faddeev_leverrier(m: &Matrix) -> Result<(Polynomial, Vec<Matrix>)> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "characteristic polynomial of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let id = Matrix::identity(n, n);
    let mut coeffs = vec![1.0];
    let mut adj = Vec::with_capacity(n);
    let mut prev = Matrix::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        let nk = m * &prev + &id * c_prev;
        let c = -(m * &nk).trace() / k as f64;
        adj.push(nk.clone());
        coeffs.push(c);
        prev = nk;
        c_prev = c;
    }
    Ok((Polynomial { coeffs }, adj))
}

/// `det(sI - M)`, monic.
pub fn characteristic_polynomial(m: &Matrix) -> Result<Polynomial> {
    Ok(faddeev_leverrier(m)?.0)
}

fn sort_roots(v: &mut [Complex64]) {
    v.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

fn complex_eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigenvalues of a non-finite matrix".into()));
    }
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(1)).ok_or_else(|| {
        Error::Numerical(format!(
            "Schur iteration did not converge for {n}x{n} matrix (norm {:.3e})",
            linalg::spectral_norm(m)
        ))
    })?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Eigenvalues sorted by descending real part, then descending imaginary part.
///
/// Computed from the real Schur form of `M` itself; they are the roots of
/// `characteristic_polynomial(M)`.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut ev = complex_eigenvalues(m)?;
    sort_roots(&mut ev);
    Ok(ev)
}

/// `C (sI - A)^-1 B` for single-input single-output systems. No pole-zero
/// cancellation is performed.
pub fn transfer_function(ss: &StateSpace) -> Result<TransferFunction> {
    if ss.p() != 1 || ss.q() != 1 {
        return Err(Error::UnsupportedShape(format!(
            "transfer function needs SISO, got {} inputs and {} outputs",
            ss.p(),
            ss.q()
        )));
    }
    let (denominator, adj) = faddeev_leverrier(&ss.a)?;
    let numerator = adj.iter().map(|nk| (&ss.c * nk * &ss.b)[(0, 0)]).collect();
    Ok(TransferFunction {
        numerator: Polynomial::new(numerator),
        denominator,
    })
}

/// `[B, AB, ..., A^(n-1) B]`.
pub fn controllability_matrix(ss: &StateSpace) -> RankReport {
    let n = ss.n();
    let p = ss.p();
    let mut q = Matrix::zeros(n, n * p);
    let mut block = ss.b.clone();
    for k in 0..n {
        q.view_mut((0, k * p), (n, p)).copy_from(&block);
        block = &ss.a * block;
    }
    RankReport::new(q, n)
}

/// `[C; CA; ...; C A^(n-1)]`.
pub fn observability_matrix(ss: &StateSpace) -> RankReport {
    let n = ss.n();
    let q = ss.q();
    let mut o = Matrix::zeros(n * q, n);
    let mut block = ss.c.clone();
    for k in 0..n {
        o.view_mut((k * q, 0), (q, n)).copy_from(&block);
        block *= &ss.a;
    }
    RankReport::new(o, n)
}

/// Every eigenvalue of `A` has real part below `-1e-10 * max(1, ||A||)`.
pub fn is_asymptotically_stable(ss: &StateSpace) -> bool {
    let tol = 1e-10 * linalg::spectral_norm(&ss.a).max(1.0);
    match eigenvalues(&ss.a) {
        Ok(ev) => ev.iter().all(|l| l.re < -tol),
        Err(e) => {
            log::warn!("stability check failed: {e}");
            false
        }
    }
}
