//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Matrices are `DMatrix<Complex64>`. Every public routine validates that its
//! inputs are finite before doing any work.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Numerical tolerances shared by the routines in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative floor on the smallest singular value for a matrix to count as full rank.
    pub rank_rel: f64,
    /// Principal angles below this (radians) are reported as exactly zero.
    pub angle_zero: f64,
    /// Most negative eigenvalue accepted as positive semidefinite.
    pub psd_neg: f64,
    /// Hermitian symmetry tolerance, relative to the Frobenius norm.
    pub hermitian: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rank_rel: 1e-12, angle_zero: 1e-8, psd_neg: 1e-10, hermitian: 1e-10 }
    }
}

/// Builds a matrix from row-major entries.
pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> Result<ComplexMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("matrix must have at least one row and column".into()));
    }
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    let m = DMatrix::from_row_slice(rows, cols, entries);
    check_finite(&m)?;
    Ok(m)
}

/// Builds a matrix from row-major real and imaginary parts.
pub fn from_parts(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> Result<ComplexMatrix> {
    if re.len() != im.len() {
        return Err(Error::DimensionMismatch("real and imaginary parts differ in length".into()));
    }
    let entries: Vec<Complex64> = re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect();
    from_rows(rows, cols, &entries)
}

pub fn identity(k: usize) -> ComplexMatrix {
    DMatrix::identity(k, k)
}

pub fn check_finite(m: &ComplexMatrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Singular values in descending order, `min(rows, cols)` of them.
pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    check_finite(m)?;
    let mut s: Vec<f64> = m.clone().singular_values().iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn spectral_norm(m: &ComplexMatrix) -> Result<f64> {
    check_finite(m)?;
    if m.nrows() == 2 && m.ncols() == 2 {
        return Ok(spectral_norm_2x2(m));
    }
    Ok(singular_values(m)?[0])
}

// Largest eigenvalue of the 2x2 Gram matrix in closed form; the spectral
// tail-threshold sweeps call this millions of times.
fn spectral_norm_2x2(m: &ComplexMatrix) -> f64 {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let fro = a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr();
    let det = (a * d - b * c).norm_sqr();
    let disc = (fro * fro - 4.0 * det).max(0.0).sqrt();
    ((fro + disc) / 2.0).sqrt()
}

/// Eigenvalues of a Hermitian matrix in descending order.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    hermitian_eigenvalues_with(m, &Tolerances::default())
}

pub fn hermitian_eigenvalues_with(m: &ComplexMatrix, tol: &Tolerances) -> Result<Vec<f64>> {
    check_finite(m)?;
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    let asym = frobenius_norm(&(m - m.adjoint()));
    if asym > tol.hermitian * frobenius_norm(m).max(1.0) {
        return Err(Error::Domain(format!("matrix is not Hermitian (asymmetry {asym:e})")));
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// `log det(m)` of a Hermitian positive-definite matrix, as a sum of log-eigenvalues.
pub fn logdet_psd(m: &ComplexMatrix) -> Result<f64> {
    logdet_psd_with(m, &Tolerances::default())
}

pub fn logdet_psd_with(m: &ComplexMatrix, tol: &Tolerances) -> Result<f64> {
    let ev = hermitian_eigenvalues_with(m, tol)?;
    if let Some(&min) = ev.last() {
        if min < -tol.psd_neg {
            return Err(Error::Domain(format!("matrix is not PSD (eigenvalue {min:e})")));
        }
    }
    Ok(ev.iter().map(|&l| l.max(0.0).ln()).sum())
}

fn check_full_column_rank(m: &ComplexMatrix, tol: &Tolerances) -> Result<()> {
    let s = singular_values(m)?;
    let limit = tol.rank_rel * s[0];
    let smallest = *s.last().unwrap();
    if m.ncols() > m.nrows() || s[0] == 0.0 || smallest <= limit {
        return Err(Error::DegenerateSpan { smallest, limit });
    }
    Ok(())
}

/// Orthonormal basis of the column span of `m`.
pub fn orthonormalize(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    orthonormalize_with(m, &Tolerances::default())
}

pub fn orthonormalize_with(m: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix> {
    check_full_column_rank(m, tol)?;
    Ok(m.clone().qr().q())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalAngles {
    /// Ascending, each in `[0, pi/2]`.
    pub angles: Vec<f64>,
}

impl PrincipalAngles {
    pub fn degrees(&self) -> Vec<f64> {
        self.angles.iter().map(|a| a.to_degrees()).collect()
    }

    /// Product of the squared sines.
    pub fn sin_sq_product(&self) -> f64 {
        self.angles.iter().map(|a| a.sin().powi(2)).product()
    }
}

fn check_pair(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!("{} rows vs {} rows", a.nrows(), b.nrows())));
    }
    if a.ncols() > b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "first subspace has {} columns, more than the second's {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Principal angles between two already-orthonormal bases.
///
/// Cosines come from the singular values of `qa^H qb` and sines from those of
/// the residual `qa - qb qb^H qa`. Each angle is taken from whichever of the
/// two is better conditioned, so angles near zero keep full precision.
pub fn principal_angles_orthonormal(qa: &ComplexMatrix, qb: &ComplexMatrix, tol: &Tolerances) -> PrincipalAngles {
    let cross = qa.adjoint() * qb;
    let mut cosines: Vec<f64> = cross.singular_values().iter().copied().collect();
    cosines.sort_by(|x, y| y.total_cmp(x));
    let residual = qa - qb * cross.adjoint();
    let mut sines: Vec<f64> = residual.singular_values().iter().copied().collect();
    sines.sort_by(|x, y| x.total_cmp(y));
    let angles = cosines
        .iter()
        .zip(&sines)
        .map(|(c, s)| {
            let c = c.clamp(0.0, 1.0);
            let t = if c * c > 0.5 { s.clamp(0.0, 1.0).asin() } else { c.acos() };
            if t < tol.angle_zero {
                0.0
            } else {
                t
            }
        })
        .collect();
    PrincipalAngles { angles }
}

pub fn principal_angles(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<PrincipalAngles> {
    principal_angles_with(a, b, &Tolerances::default())
}

pub fn principal_angles_with(a: &ComplexMatrix, b: &ComplexMatrix, tol: &Tolerances) -> Result<PrincipalAngles> {
    check_pair(a, b)?;
    let qa = orthonormalize_with(a, tol)?;
    let qb = orthonormalize_with(b, tol)?;
    Ok(principal_angles_orthonormal(&qa, &qb, tol))
}

/// Squared subspace sine: the product of `sin^2` over all principal angles.
pub fn subspace_sin_sq(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    Ok(principal_angles(a, b)?.sin_sq_product())
}

pub fn subspace_sin_sq_with(a: &ComplexMatrix, b: &ComplexMatrix, tol: &Tolerances) -> Result<f64> {
    Ok(principal_angles_with(a, b, tol)?.sin_sq_product())
}

/// Joint decomposition `h_b = L diag(lambda_b) V_b^H`, `h_w = L diag(lambda_w) V_w^H`.
#[derive(Debug, Clone)]
pub struct GsvdResult {
    pub l: ComplexMatrix,
    pub lambda_b: Vec<f64>,
    pub v_b: ComplexMatrix,
    pub lambda_w: Vec<f64>,
    pub v_w: ComplexMatrix,
}

impl GsvdResult {
    pub fn reconstruct_b(&self) -> ComplexMatrix {
        reconstruct(&self.l, &self.lambda_b, &self.v_b)
    }

    pub fn reconstruct_w(&self) -> ComplexMatrix {
        reconstruct(&self.l, &self.lambda_w, &self.v_w)
    }
}

fn reconstruct(l: &ComplexMatrix, lambda: &[f64], v: &ComplexMatrix) -> ComplexMatrix {
    let mut scaled = l.clone();
    for (j, &s) in lambda.iter().enumerate() {
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * v.adjoint()
}

fn full_row_rank(h: &ComplexMatrix, tol: &Tolerances, name: &str) -> Result<()> {
    let s = singular_values(h)?;
    let smallest = *s.last().unwrap();
    if h.nrows() > h.ncols() || s[0] == 0.0 || smallest <= tol.rank_rel * s[0] {
        return Err(Error::FullRankViolation(format!(
            "{name} ({}x{}) does not have rank {}",
            h.nrows(),
            h.ncols(),
            h.nrows()
        )));
    }
    Ok(())
}

pub fn gsvd(h_b: &ComplexMatrix, h_w: &ComplexMatrix) -> Result<GsvdResult> {
    gsvd_with(h_b, h_w, &Tolerances::default())
}

/// QR of the stacked adjoints followed by a cosine-sine split of the
/// orthonormal factor.
pub fn gsvd_with(h_b: &ComplexMatrix, h_w: &ComplexMatrix, tol: &Tolerances) -> Result<GsvdResult> {
    let na = h_b.nrows();
    if h_w.nrows() != na {
        return Err(Error::DimensionMismatch(format!("h_b has {na} rows, h_w has {}", h_w.nrows())));
    }
    full_row_rank(h_b, tol, "h_b")?;
    full_row_rank(h_w, tol, "h_w")?;
    let (nb, nw) = (h_b.ncols(), h_w.ncols());

    let mut stacked = ComplexMatrix::zeros(nb + nw, na);
    stacked.view_mut((0, 0), (nb, na)).copy_from(&h_b.adjoint());
    stacked.view_mut((nb, 0), (nw, na)).copy_from(&h_w.adjoint());
    let qr = stacked.qr();
    let (q, r) = (qr.q(), qr.r());
    let q_b = q.rows(0, nb).into_owned();
    let q_w = q.rows(nb, nw).into_owned();

    let svd = q_b.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    let mut order: Vec<usize> = (0..na).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut v_b = ComplexMatrix::zeros(nb, na);
    let mut z = ComplexMatrix::zeros(na, na);
    let mut cosines = vec![0.0; na];
    for (k, &i) in order.iter().enumerate() {
        v_b.set_column(k, &u.column(i));
        z.set_column(k, &v_t.row(i).adjoint());
        cosines[k] = svd.singular_values[i].min(1.0);
    }

    let qwz = &q_w * &z;
    let mut v_w = ComplexMatrix::zeros(nw, na);
    let mut sines = vec![0.0; na];
    for k in 0..na {
        let col = qwz.column(k);
        let s = col.norm();
        if s <= tol.rank_rel {
            return Err(Error::FullRankViolation("h_w loses rank in the joint basis".into()));
        }
        sines[k] = s;
        v_w.set_column(k, &col.unscale(s));
    }

    let l = r.adjoint() * z;
    Ok(GsvdResult { l, lambda_b: cosines, v_b, lambda_w: sines, v_w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    // Roots of the characteristic polynomial of a 2x2 Hermitian matrix.
    fn eig2(g: &ComplexMatrix) -> (f64, f64) {
        let tr = g[(0, 0)].re + g[(1, 1)].re;
        let det = (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]).re;
        let disc = (tr * tr - 4.0 * det).sqrt();
        ((tr + disc) / 2.0, (tr - disc) / 2.0)
    }

    fn sample_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        // small LCG so these unit tests do not depend on the sampling module
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        DMatrix::from_fn(rows, cols, |_, _| c(next(), next()))
    }

    #[test]
    fn spectral_norm_trivial() {
        assert_eq!(spectral_norm(&identity(2)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(3.0, 0.0), c(4.0, 0.0)]));
        assert!((spectral_norm(&d).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_matches_gram_eigenvalue() {
        for seed in 0..20 {
            let m = sample_matrix(3, 2, seed);
            let (top, _) = eig2(&(m.adjoint() * &m));
            assert!((spectral_norm(&m).unwrap() - top.sqrt()).abs() < 1e-12);
            let sq = sample_matrix(2, 2, seed + 100);
            let (top, _) = eig2(&(sq.adjoint() * &sq));
            assert!((spectral_norm(&sq).unwrap() - top.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = identity(2);
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(spectral_norm(&m), Err(Error::InvalidInput(_))));
        m[(0, 1)] = c(0.0, f64::INFINITY);
        assert!(singular_values(&m).is_err());
    }

    #[test]
    fn singular_values_rank_one() {
        let u = DMatrix::from_column_slice(3, 1, &[c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)]);
        let v = DMatrix::from_column_slice(2, 1, &[c(0.5, 0.5), c(2.0, 0.0)]);
        let m = &u * v.adjoint();
        let s = singular_values(&m).unwrap();
        assert!((s[0] - u.norm() * v.norm()).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12);
        assert_eq!(singular_values(&identity(2)).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn orthonormalize_projector_residual() {
        let m = sample_matrix(6, 3, 7);
        let q = orthonormalize(&m).unwrap();
        assert!(frobenius_norm(&(q.adjoint() * &q - identity(3))) < 1e-10);
        let proj = &q * (q.adjoint() * &m);
        assert!(frobenius_norm(&(proj - &m)) < 1e-10 * frobenius_norm(&m));
        let i = orthonormalize(&identity(3)).unwrap();
        assert!(frobenius_norm(&(i.adjoint() * &i - identity(3))) < 1e-12);
        assert!(principal_angles(&i, &identity(3)).unwrap().angles.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn orthonormalize_rejects_rank_deficiency() {
        let mut m = sample_matrix(4, 2, 3);
        let first = m.column(0).into_owned();
        m.set_column(1, &(first * c(2.0, -1.0)));
        assert!(matches!(orthonormalize(&m), Err(Error::DegenerateSpan { .. })));
    }

    #[test]
    fn principal_angles_trivial_cases() {
        let a = sample_matrix(5, 2, 11);
        assert!(principal_angles(&a, &a).unwrap().angles.iter().all(|&t| t == 0.0));
        assert_eq!(subspace_sin_sq(&a, &a).unwrap(), 0.0);
        let e = identity(4);
        let first = e.columns(0, 2).into_owned();
        let next = e.columns(2, 2).into_owned();
        let pa = principal_angles(&first, &next).unwrap();
        for t in &pa.angles {
            assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        }
        assert!((subspace_sin_sq(&first, &next).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn principal_angles_dimension_errors() {
        let a = sample_matrix(5, 3, 1);
        let b = sample_matrix(5, 2, 2);
        assert!(matches!(principal_angles(&a, &b), Err(Error::DimensionMismatch(_))));
        let c4 = sample_matrix(4, 3, 2);
        assert!(matches!(principal_angles(&b, &c4), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn logdet_cases() {
        assert_eq!(logdet_psd(&identity(3)).unwrap(), 0.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.5, 0.0), c(1.25, 0.0)]));
        assert!((logdet_psd(&d).unwrap() - (1.5f64.ln() + 1.25f64.ln())).abs() < 1e-14);
        for seed in 0..10 {
            let a = sample_matrix(2, 2, seed);
            let g = a.adjoint() * &a + identity(2) * c(0.1, 0.0);
            let (l1, l2) = eig2(&g);
            assert!((logdet_psd(&g).unwrap() - (l1 * l2).ln()).abs() < 1e-10);
        }
        let neg = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(logdet_psd(&neg), Err(Error::Domain(_))));
        let mut non_herm = identity(2);
        non_herm[(0, 1)] = c(0.3, 0.0);
        assert!(matches!(logdet_psd(&non_herm), Err(Error::Domain(_))));
    }

    #[test]
    fn logdet_three_by_three_oracle() {
        // Characteristic polynomial of a 3x3 Hermitian matrix: det = product of roots.
        for seed in 0..10 {
            let a = sample_matrix(3, 3, seed + 50);
            let g = a.adjoint() * &a + identity(3) * c(0.2, 0.0);
            let det = g[(0, 0)] * (g[(1, 1)] * g[(2, 2)] - g[(1, 2)] * g[(2, 1)])
                - g[(0, 1)] * (g[(1, 0)] * g[(2, 2)] - g[(1, 2)] * g[(2, 0)])
                + g[(0, 2)] * (g[(1, 0)] * g[(2, 1)] - g[(1, 1)] * g[(2, 0)]);
            assert!((logdet_psd(&g).unwrap() - det.re.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn gsvd_identity_and_diagonal() {
        let g = gsvd(&identity(2), &identity(2)).unwrap();
        assert!(frobenius_norm(&(g.reconstruct_b() - identity(2))) < 1e-12);
        for (b, w) in g.lambda_b.iter().zip(&g.lambda_w) {
            assert!((b - w).abs() < 1e-12);
        }
        let mut hb = identity(2);
        hb[(0, 0)] = c(2.0, 0.0);
        hb[(1, 1)] = c(3.0, 0.0);
        let g = gsvd(&hb, &identity(2)).unwrap();
        assert!(frobenius_norm(&(g.reconstruct_b() - &hb)) < 1e-12);
        assert!(frobenius_norm(&(g.reconstruct_w() - identity(2))) < 1e-12);
        // ratios of the generalized values are the diagonal entries
        let mut ratios: Vec<f64> = g.lambda_b.iter().zip(&g.lambda_w).map(|(b, w)| b / w).collect();
        ratios.sort_by(|a, b| a.total_cmp(b));
        assert!((ratios[0] - 2.0).abs() < 1e-10 && (ratios[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn gsvd_random_pair_reconstructs() {
        let hb = sample_matrix(2, 3, 5);
        let hw = sample_matrix(2, 2, 6);
        let g = gsvd(&hb, &hw).unwrap();
        assert!(frobenius_norm(&(g.reconstruct_b() - &hb)) <= 1e-8 * frobenius_norm(&hb));
        assert!(frobenius_norm(&(g.reconstruct_w() - &hw)) <= 1e-8 * frobenius_norm(&hw));
        assert!(frobenius_norm(&(g.v_b.adjoint() * &g.v_b - identity(2))) < 1e-10);
        assert!(frobenius_norm(&(g.v_w.adjoint() * &g.v_w - identity(2))) < 1e-10);
        assert!(g.lambda_b.iter().chain(&g.lambda_w).all(|&v| v > 0.0));
    }

    #[test]
    fn gsvd_rank_errors() {
        let hb = sample_matrix(2, 3, 5);
        let mut hw = sample_matrix(2, 2, 6);
        let r0 = hw.row(0).into_owned();
        hw.set_row(1, &r0);
        assert!(matches!(gsvd(&hb, &hw), Err(Error::FullRankViolation(_))));
        let tall = sample_matrix(3, 2, 1);
        assert!(matches!(gsvd(&tall, &tall), Err(Error::FullRankViolation(_))));
    }
}
