//! The closed-form worked-example family over the curve phi(z) = z + eps z^2:
//! the conformal inverse theta (the prototypical inner function of the curve),
//! its powers, the u_{q,r} projection polynomials, the basis fields
//! f_k^{ij} = theta^{n-j} zeta^{-k}, and the pinned cascade-product matrices.
//!
//! theta(w) = 2w / (1 + sqrt(1 + 4 eps w)) with the branch that equals 1 at
//! w = 0; in the pullback coordinate sqrt(1 + 4 eps phi(z)) = 1 + 2 eps z, so
//! theta(phi(z)) = z exactly and |theta| = 1 on the curve.

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::field::{fit_scalar, FunctionField};
use crate::linalg::{c, cr, CMat, C64};
use crate::schur::WeightedSchurFunction;
use crate::weight::Weight;

/// sqrt(1 + 4 eps w), branch with value 1 at w = 0. The branch cut stays in
/// the outer domain for the parameter range we admit, so the principal square
/// root is the right branch on closed G+ and on C.
pub fn sqrt_branch(eps: C64, w: C64) -> C64 {
    (cr(1.0) + cr(4.0) * eps * w).sqrt()
}

/// theta(w) = 2w / (1 + sqrt(1 + 4 eps w)): maps G+ conformally onto the unit
/// disk, inverse of phi.
pub fn theta_at(eps: C64, w: C64) -> C64 {
    cr(2.0) * w / (cr(1.0) + sqrt_branch(eps, w))
}

/// Samples of theta^k on the curve grid: exactly z_m^k by the pullback identity.
pub fn theta_power_samples(curve: &Curve, k: i32) -> Vec<C64> {
    curve.z.iter().map(|&z| z.powi(k)).collect()
}

/// theta as a fitted weighted Schur function (unimodular weights).
/// Representability of the analytic part degrades as the branch point
/// -1/(4 eps) approaches the curve; the fit residual is reported by erroring
/// above `tol`.
pub fn paper_theta(curve: &Curve, order: usize, tol: f64) -> Result<WeightedSchurFunction> {
    let samples = theta_power_samples(curve, 1);
    let (f, resid) = fit_scalar(curve, &samples, order)?;
    if resid > tol {
        return Err(Error::Numerical(format!(
            "theta fit residual {resid:.3e} > {tol:.1e} at eps={} K={order}",
            curve.epsilon
        )));
    }
    WeightedSchurFunction::new(f, Weight::identity(1), Weight::identity(1), curve.clone())
}

/// Generalized binomial coefficient C(n, k) for integer n (possibly negative)
/// and k >= 0.
fn binom(n: i64, k: i64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let mut acc = 1.0f64;
    for i in 0..k {
        acc *= (n - i) as f64 / (k - i) as f64;
    }
    acc
}

/// Closed form of u_{q,r}(w) = 2^{-r} w^{-q} P_-[ w^q (1 + sqrt(1+4 eps w))^r ]
/// for q <= -1: a polynomial of degree -q - 1 with coefficients
///   a_s = eps^s [ C(r-s-1, s) + 2 C(r-s-1, s-1) ],   s = 0 .. -q-1.
/// (Derived by residue calculus; identically 0 for q >= 0.)
pub fn u_qr_closed(eps: C64, q: i64, r: i64) -> FunctionField {
    if q >= 0 {
        return FunctionField::zero(1, 1, 0);
    }
    let deg = (-q - 1) as usize;
    let mut f = FunctionField::zero(1, 1, deg);
    for s in 0..=deg as i64 {
        let a = binom(r - s - 1, s) + 2.0 * binom(r - s - 1, s - 1);
        f.set_coeff(s, CMat::from_element(1, 1, eps.powi(s as i32) * cr(a)));
    }
    f
}

/// u_{q,r} computed through the numerical pipeline: sample the input field
/// w^q (1+sqrt(1+4 eps w))^r 2^{-r} = zeta^q (1+eps z)^r on the grid, take the
/// co-analytic part, shift by w^{-q}. The input has a pole of order exactly -q
/// at 0 and is otherwise analytic in G+, so only the contour functionals
/// c_{-s}, s = 1..-q, are nonzero; extracting just those keeps the computation
/// exact at every admissible eps (no analytic-part representation is needed).
pub fn u_qr_numeric(curve: &Curve, q: i64, r: i64) -> Result<FunctionField> {
    if q >= 0 {
        return Ok(FunctionField::zero(1, 1, 0));
    }
    let eps = curve.epsilon;
    let samples: Vec<C64> = curve
        .z
        .iter()
        .zip(&curve.zeta)
        .map(|(&z, &w)| w.powi(q as i32) * (cr(1.0) + eps * z).powi(r as i32))
        .collect();
    let pole = (-q) as usize;
    let mut minus = FunctionField::zero(1, 1, pole);
    for s in 1..=pole as i64 {
        // c_{-s} = (1/M) sum_j F_j zeta_j^{s-1} phi'_j z_j
        let mut acc = crate::linalg::ZERO;
        for j in 0..curve.m {
            acc += samples[j] * curve.zeta[j].powi(s as i32 - 1) * curve.dphi[j] * curve.z[j];
        }
        minus.set_coeff(-s, CMat::from_element(1, 1, acc / cr(curve.m as f64)));
    }
    Ok(minus.shifted(-q).trimmed())
}

/// Samples of the basis field f_k^{ij} = theta^{n-j} zeta^{-k} on the grid.
pub fn f_basis_samples(curve: &Curve, n: usize, i: usize, j: usize, k: usize) -> Result<Vec<C64>> {
    if !(1 <= j && j <= i && i <= n && 1 <= k && k <= i - j) {
        return Err(Error::Schema(format!("basis indices out of range: n={n} i={i} j={j} k={k}")));
    }
    Ok(curve
        .z
        .iter()
        .zip(&curve.zeta)
        .map(|(&z, &w)| z.powi((n - j) as i32) * w.powi(-(k as i32)))
        .collect())
}

/// The pinned 2x2/4x4 cascade-product matrices of the worked example, as
/// polynomials in eps.
pub struct Sect2Fixture {
    /// Sigma_1 = Sigma_2 = ((0), (1), (1)): 1-dim system realizing theta.
    pub t1: CMat,
    pub m1: CMat,
    pub n1: CMat,
    /// Sigma_3: 2-dim system realizing theta^2.
    pub t3: CMat,
    pub m3: CMat,
    pub n3: CMat,
    /// Sigma_2 . Sigma_1 (2-dim).
    pub t21: CMat,
    pub m21: CMat,
    pub n21: CMat,
    /// Sigma_3 . (Sigma_2 . Sigma_1) (4-dim).
    pub t_left: CMat,
    pub m_left: CMat,
    pub n_left: CMat,
    /// (Sigma_3 . Sigma_2) . Sigma_1 (4-dim).
    pub t_right: CMat,
    pub m_right: CMat,
    pub n_right: CMat,
    /// Similarity X with X * left-grouping * X^{-1} = right-grouping
    /// (acting as T' = X T X^{-1}, M' = M X^{-1}, N' = X N).
    pub x: CMat,
}

pub fn sect2_fixture(eps: C64) -> Sect2Fixture {
    let e = eps;
    let e2 = e * e;
    let e3 = e2 * e;
    let z = cr(0.0);
    let o = cr(1.0);
    Sect2Fixture {
        t1: CMat::from_element(1, 1, z),
        m1: CMat::from_element(1, 1, o),
        n1: CMat::from_element(1, 1, o),
        t3: CMat::from_row_slice(2, 2, &[z, o, z, z]),
        m3: CMat::from_row_slice(1, 2, &[o, z]),
        n3: CMat::from_row_slice(2, 1, &[cr(2.0) * e, o]),
        t21: CMat::from_row_slice(2, 2, &[z, o, z, z]),
        m21: CMat::from_row_slice(1, 2, &[o, e]),
        n21: CMat::from_row_slice(2, 1, &[e, o]),
        t_left: CMat::from_row_slice(
            4,
            4,
            &[z, o, e, z, z, z, o, z, z, z, z, o, z, z, z, z],
        ),
        m_left: CMat::from_row_slice(1, 4, &[o, e, -e2, cr(2.0) * e3]),
        n_left: CMat::from_row_slice(4, 1, &[e3, -e2, cr(2.0) * e, o]),
        t_right: CMat::from_row_slice(
            4,
            4,
            &[z, o, e, -e2, z, z, o, z, z, z, z, o, z, z, z, z],
        ),
        m_right: CMat::from_row_slice(1, 4, &[o, e, z, z]),
        n_right: CMat::from_row_slice(4, 1, &[e3, -e2, cr(2.0) * e, o]),
        x: CMat::from_row_slice(
            4,
            4,
            &[
                o, z, -e2, cr(2.0) * e3,
                z, o, z, z,
                z, z, o, z,
                z, z, z, o,
            ],
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_curve;

    #[test]
    fn branch_and_pullback_identity() {
        for &eps in &[0.0, 0.2, 0.4] {
            let curve = make_curve(cr(eps), 128).unwrap();
            for j in (0..128).step_by(11) {
                let z = curve.z[j];
                let w = curve.zeta[j];
                // branch realized by 1 + 2 eps z on the curve
                assert!((sqrt_branch(cr(eps), w) - (cr(1.0) + cr(2.0 * eps) * z)).norm() < 1e-12);
                // theta o phi = id, |theta| = 1 on C
                assert!((theta_at(cr(eps), w) - z).norm() < 1e-12);
                assert!((theta_at(cr(eps), w).norm() - 1.0).abs() < 1e-12);
            }
            // theta(0) = 0 and theta maps G+ into the disk
            assert!(theta_at(cr(eps), cr(0.0)).norm() < 1e-15);
            assert!(theta_at(cr(eps), cr(0.3)).norm() < 1.0);
        }
    }

    #[test]
    fn theta_fits_at_moderate_eps() {
        let curve = make_curve(cr(0.2), 1024).unwrap();
        let th = paper_theta(&curve, 64, 1e-10).unwrap();
        // refit matches direct samples at off-grid boundary points
        let fine = make_curve(cr(0.2), 2048).unwrap();
        let mut worst = 0.0f64;
        for j in (1..fine.m).step_by(37) {
            let w = fine.zeta[j];
            let err = (th.theta_plus.eval_at(w)[(0, 0)] - theta_at(cr(0.2), w)).norm();
            worst = worst.max(err);
        }
        assert!(worst < 1e-8, "off-grid mismatch {worst:.3e}");
    }

    #[test]
    fn u_closed_forms_match_displayed_polynomials() {
        // u_{-1,r} = 1; u_{-2,r} = 1 + r eps w;
        // u_{-3,r} = 1 + r eps w + r(r-3)/2 eps^2 w^2
        let eps = c(0.17, 0.0);
        for r in 0..=5i64 {
            let u1 = u_qr_closed(eps, -1, r);
            assert!((u1.coeff(0)[(0, 0)] - cr(1.0)).norm() < 1e-15);
            let u2 = u_qr_closed(eps, -2, r);
            assert!((u2.coeff(1)[(0, 0)] - eps * cr(r as f64)).norm() < 1e-15);
            let u3 = u_qr_closed(eps, -3, r);
            let want = eps * eps * cr((r * (r - 3)) as f64 / 2.0);
            assert!((u3.coeff(2)[(0, 0)] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn u_numeric_matches_closed_all_eps() {
        for &eps in &[0.1, 0.25, 0.4] {
            let curve = make_curve(cr(eps), 512).unwrap();
            for q in [-1i64, -2, -3, -4] {
                for r in 0..=5i64 {
                    let num = u_qr_numeric(&curve, q, r).unwrap();
                    let closed = u_qr_closed(cr(eps), q, r);
                    let mut worst = 0.0f64;
                    for k in -50i64..=50 {
                        worst = worst
                            .max(crate::linalg::frob(&(num.coeff(k) - closed.coeff(k))));
                    }
                    assert!(worst <= 1e-9, "eps={eps} q={q} r={r}: coeff err {worst:.3e}");
                }
            }
        }
        // q >= 0: identically zero
        let curve = make_curve(cr(0.3), 256).unwrap();
        for q in [0i64, 1, 2] {
            let num = u_qr_numeric(&curve, q, 3).unwrap();
            assert!(num.sup_grid_norm(&curve) < 1e-10);
        }
    }

    #[test]
    fn fixture_matrices_shape_up() {
        let f = sect2_fixture(cr(0.2));
        assert_eq!(f.t_left.nrows(), 4);
        // both groupings share N, differ in T and M
        assert!(crate::linalg::frob(&(&f.n_left - &f.n_right)) == 0.0);
        assert!(crate::linalg::frob(&(&f.t_left - &f.t_right)) > 0.01);
        // X realizes the similarity on the pinned matrices
        let xinv = crate::linalg::pinv(&f.x, 1e-12);
        let t = &f.x * &f.t_left * &xinv;
        assert!(crate::linalg::frob(&(t - &f.t_right)) < 1e-12);
        let m = &f.m_left * &xinv;
        assert!(crate::linalg::frob(&(m - &f.m_right)) < 1e-12);
        let n = &f.x * &f.n_left;
        assert!(crate::linalg::frob(&(n - &f.n_right)) < 1e-12);
    }
}
