//! Matrix-valued function fields on the boundary curve, stored as truncated
//! Laurent series in the curve coordinate zeta: F(zeta) = sum_{|k|<=K} c_k zeta^k.
//!
//! With this basis the Smirnov spaces split exactly by coefficient sign: k >= 0
//! extends analytically into G+ and k < 0 into G- (vanishing at infinity), so
//! the non-orthogonal Riesz projections act on coefficients directly.
//!
//! Fitting grid samples uses two independent mechanisms:
//! - negative coefficients are exact contour functionals
//!   c_{-k} = (1/2 pi i) \oint F(zeta) zeta^{k-1} d zeta, evaluated by the
//!   trapezoid rule in the pullback coordinate (spectrally accurate);
//! - the remaining analytic part is a least-squares fit in {zeta^k, k >= 0}.
//!
//! The split matters: for strong perturbations the analytic part of a bounded
//! field need not have a Laurent series converging on all of C, while the
//! contour functionals stay exact for the co-analytic part.

use crate::config::{MAX_ORDER, TRUNC_FAIL};
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::linalg::{cr, pinv, CMat, C64, ZERO};
use crate::weight::Weight;

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionField {
    pub rows: usize,
    pub cols: usize,
    /// Truncation order K; coefficients run over k in [-K, K].
    pub order: usize,
    /// Length 2K+1; index k + K.
    coeffs: Vec<CMat>,
}

impl FunctionField {
    pub fn zero(rows: usize, cols: usize, order: usize) -> Self {
        FunctionField {
            rows,
            cols,
            order,
            coeffs: vec![CMat::zeros(rows, cols); 2 * order + 1],
        }
    }

    pub fn constant(m: CMat) -> Self {
        FunctionField { rows: m.nrows(), cols: m.ncols(), order: 0, coeffs: vec![m] }
    }

    pub fn monomial(k: i64, m: CMat) -> Self {
        let order = k.unsigned_abs() as usize;
        let mut f = FunctionField::zero(m.nrows(), m.ncols(), order);
        f.set_coeff(k, m);
        f
    }

    pub fn scalar_monomial(k: i64) -> Self {
        Self::monomial(k, CMat::from_element(1, 1, cr(1.0)))
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(CMat::identity(dim, dim))
    }

    pub fn coeff(&self, k: i64) -> CMat {
        let kk = k + self.order as i64;
        if kk < 0 || kk >= self.coeffs.len() as i64 {
            CMat::zeros(self.rows, self.cols)
        } else {
            self.coeffs[kk as usize].clone()
        }
    }

    pub fn set_coeff(&mut self, k: i64, m: CMat) {
        assert!(m.nrows() == self.rows && m.ncols() == self.cols);
        let kk = k + self.order as i64;
        assert!(kk >= 0 && kk < self.coeffs.len() as i64, "coefficient index out of order range");
        self.coeffs[kk as usize] = m;
    }

    pub fn coeff_indices(&self) -> impl Iterator<Item = i64> {
        let k = self.order as i64;
        -k..=k
    }

    /// Drop outer all-zero coefficients (keeps representations small after products).
    pub fn trimmed(&self) -> Self {
        let k = self.order as i64;
        let mut lo = -k;
        let mut hi = k;
        let is_zero = |m: &CMat| m.iter().all(|x| x.norm() == 0.0);
        while lo < 0 && is_zero(&self.coeff(lo)) && (hi < -lo) {
            lo += 1;
        }
        while hi > 0 && is_zero(&self.coeff(hi)) && (-lo < hi) {
            hi -= 1;
        }
        let new_order = (-lo).max(hi).max(0) as usize;
        if new_order == self.order {
            return self.clone();
        }
        let mut f = FunctionField::zero(self.rows, self.cols, new_order);
        for kk in -(new_order as i64)..=(new_order as i64) {
            f.set_coeff(kk, self.coeff(kk));
        }
        f
    }

    pub fn with_order(&self, order: usize) -> Result<Self> {
        let mut f = FunctionField::zero(self.rows, self.cols, order);
        let mut loss = 0.0f64;
        for k in self.coeff_indices() {
            let c = self.coeff(k);
            if k.unsigned_abs() as usize <= order {
                f.set_coeff(k, c);
            } else {
                loss += c.iter().map(|x| x.norm_sqr()).sum::<f64>();
            }
        }
        let loss = loss.sqrt();
        if loss > TRUNC_FAIL {
            return Err(Error::Numerical(format!(
                "order truncation to K={order} loses {loss:.3e} > {TRUNC_FAIL:.1e}"
            )));
        }
        Ok(f)
    }

    pub fn eval_at(&self, w: C64) -> CMat {
        let k = self.order as i64;
        // analytic part by Horner in w
        let mut pos = self.coeff(k);
        for j in (0..k).rev() {
            pos = pos * w + self.coeff(j);
        }
        let has_neg = (1..=k).any(|j| self.coeff(-j).iter().any(|x| x.norm() != 0.0));
        if k == 0 || !has_neg {
            return pos;
        }
        // co-analytic part by Horner in 1/w
        let wi = cr(1.0) / w;
        let mut neg = self.coeff(-k);
        for j in (1..k).rev() {
            neg = neg * wi + self.coeff(-j);
        }
        neg *= wi;
        pos + neg
    }

    pub fn eval_grid(&self, curve: &Curve) -> Vec<CMat> {
        curve.zeta.iter().map(|&w| self.eval_at(w)).collect()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut f = self.clone();
        for c in &mut f.coeffs {
            *c *= s;
        }
        f
    }

    pub fn add(&self, other: &Self) -> Self {
        assert!(self.rows == other.rows && self.cols == other.cols);
        let order = self.order.max(other.order);
        let mut f = FunctionField::zero(self.rows, self.cols, order);
        for k in f.clone().coeff_indices() {
            f.set_coeff(k, self.coeff(k) + other.coeff(k));
        }
        f
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(cr(-1.0)))
    }

    /// Multiply by zeta^s (exact index shift).
    pub fn shifted(&self, s: i64) -> Self {
        let order = self.order + s.unsigned_abs() as usize;
        let mut f = FunctionField::zero(self.rows, self.cols, order);
        for k in self.coeff_indices() {
            f.set_coeff(k + s, self.coeff(k));
        }
        f
    }

    /// Pointwise product (coefficient convolution). The result order is capped
    /// at MAX_ORDER; the operation fails loudly if the dropped mass exceeds the
    /// truncation threshold.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Incompatible(format!(
                "product dimensions {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let full = self.order + other.order;
        let order = full.min(MAX_ORDER);
        let mut f = FunctionField::zero(self.rows, other.cols, order);
        let mut loss = 0.0f64;
        for ka in self.coeff_indices() {
            let a = self.coeff(ka);
            if a.iter().all(|x| x.norm() == 0.0) {
                continue;
            }
            for kb in other.coeff_indices() {
                let b = other.coeff(kb);
                if b.iter().all(|x| x.norm() == 0.0) {
                    continue;
                }
                let k = ka + kb;
                let prod = &a * &b;
                if k.unsigned_abs() as usize <= order {
                    f.set_coeff(k, f.coeff(k) + prod);
                } else {
                    loss += prod.iter().map(|x| x.norm_sqr()).sum::<f64>();
                }
            }
        }
        let loss = loss.sqrt();
        if loss > TRUNC_FAIL {
            return Err(Error::Numerical(format!(
                "product truncation at K={order} loses {loss:.3e}"
            )));
        }
        Ok(f)
    }

    /// F~(zeta) := F(conj zeta)^*, a field on the conjugate curve; in
    /// coefficients this is the entrywise adjoint at the same index.
    pub fn tilde(&self) -> Self {
        let mut f = FunctionField::zero(self.cols, self.rows, self.order);
        for k in self.coeff_indices() {
            f.set_coeff(k, self.coeff(k).adjoint());
        }
        f
    }

    /// Split into (analytic part k >= 0, co-analytic part k < 0); exact.
    pub fn riesz_split(&self) -> (Self, Self) {
        let mut plus = FunctionField::zero(self.rows, self.cols, self.order);
        let mut minus = FunctionField::zero(self.rows, self.cols, self.order);
        for k in self.coeff_indices() {
            if k >= 0 {
                plus.set_coeff(k, self.coeff(k));
            } else {
                minus.set_coeff(k, self.coeff(k));
            }
        }
        (plus, minus)
    }

    /// Largest coefficient Frobenius norm among k < 0 (analyticity check).
    pub fn neg_mass(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in self.coeff_indices() {
            if k < 0 {
                worst = worst.max(crate::linalg::frob(&self.coeff(k)));
            }
        }
        worst
    }

    pub fn sup_grid_norm(&self, curve: &Curve) -> f64 {
        self.eval_grid(curve).iter().map(crate::linalg::opnorm).fold(0.0, f64::max)
    }
}

/// (1/ 2 pi i) \oint_C F(zeta) d zeta by the trapezoid rule in the pullback
/// coordinate; equals the coefficient c_{-1} for fields resolved by the grid.
pub fn contour_integral_samples(curve: &Curve, samples: &[CMat]) -> CMat {
    let mut acc = CMat::zeros(samples[0].nrows(), samples[0].ncols());
    for (j, s) in samples.iter().enumerate() {
        acc += s * (curve.dphi[j] * curve.z[j]);
    }
    acc / cr(curve.m as f64)
}

pub fn contour_integral(field: &FunctionField, curve: &Curve) -> CMat {
    contour_integral_samples(curve, &field.eval_grid(curve))
}

/// Weighted L2(C) inner product <u, v>_Xi with the arclength measure
/// |phi'(z)| dt / 2 pi: (1/M) sum_m arc_m tr(v_m^* Xi_m u_m).
pub fn inner_product(
    u: &FunctionField,
    v: &FunctionField,
    xi: &Weight,
    curve: &Curve,
) -> Result<C64> {
    if u.rows != v.rows || u.cols != v.cols || xi.dim() != u.rows {
        return Err(Error::Incompatible(format!(
            "inner product dimensions: u {}x{}, v {}x{}, weight {}",
            u.rows, u.cols, v.rows, v.cols, xi.dim()
        )));
    }
    let us = u.eval_grid(curve);
    let vs = v.eval_grid(curve);
    let xs = xi.eval_grid(curve);
    let mut acc = ZERO;
    for j in 0..curve.m {
        let m = vs[j].adjoint() * &xs[j] * &us[j];
        acc += m.diagonal().sum() * cr(curve.arc[j]);
    }
    Ok(acc / cr(curve.m as f64))
}

/// Weighted L2(C) norm of the mismatch between a field and target samples.
pub fn l2_mismatch(curve: &Curve, field: &FunctionField, samples: &[CMat]) -> f64 {
    let fs = field.eval_grid(curve);
    let mut acc = 0.0f64;
    for j in 0..curve.m {
        let d = &fs[j] - &samples[j];
        acc += curve.arc[j] * d.iter().map(|x| x.norm_sqr()).sum::<f64>();
    }
    (acc / curve.m as f64).sqrt()
}

/// Fit grid samples by a Laurent field of order K: exact contour extraction of
/// the co-analytic coefficients, least squares (with column scaling) for the
/// analytic part. Returns the field and the weighted-L2 residual on the grid.
pub fn fit_field(curve: &Curve, samples: &[CMat], order: usize) -> Result<(FunctionField, f64)> {
    if samples.len() != curve.m {
        return Err(Error::Schema(format!(
            "expected {} samples, got {}",
            curve.m,
            samples.len()
        )));
    }
    if order > MAX_ORDER {
        return Err(Error::Budget(format!("order {order} exceeds {MAX_ORDER}")));
    }
    if curve.m < 4 * order + 4 {
        return Err(Error::Schema(format!(
            "grid {} too small for order {order} (need M >= 4K+4)",
            curve.m
        )));
    }
    let rows = samples[0].nrows();
    let cols = samples[0].ncols();
    let mm = curve.m;
    let k = order;
    let mut field = FunctionField::zero(rows, cols, k);

    // co-analytic part: c_{-q} = (1/M) sum_j F_j zeta_j^{q-1} dphi_j z_j.
    // The quadrature sums terms of size |F| |zeta|^{q-1}; coefficients below
    // that noise floor are unresolvable roundoff and must be dropped, or the
    // |zeta|^{-q} amplification on the inner part of the curve turns them into
    // a visible evaluation error.
    let sample_scale = samples.iter().map(|s| s.iter().map(|x| x.norm()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let zeta_max = curve.zeta.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let mut resid: Vec<CMat> = samples.to_vec();
    for q in 1..=k as i64 {
        let mut acc = CMat::zeros(rows, cols);
        for j in 0..mm {
            acc += &samples[j] * (curve.zeta[j].powi(q as i32 - 1) * curve.dphi[j] * curve.z[j]);
        }
        acc /= cr(mm as f64);
        let floor = 100.0 * f64::EPSILON * sample_scale * zeta_max.powi(q as i32 - 1);
        if crate::linalg::frob(&acc) < floor {
            continue;
        }
        for j in 0..mm {
            resid[j] -= &acc * curve.zeta[j].powi(-(q as i32));
        }
        field.set_coeff(-q, acc);
    }

    // analytic part: least squares on the remainder in {zeta^p, p = 0..K}
    let mut vand = CMat::zeros(mm, k + 1);
    let mut scales = vec![0.0f64; k + 1];
    for p in 0..=k {
        let mut smax = 0.0f64;
        for j in 0..mm {
            let v = curve.zeta[j].powi(p as i32);
            vand[(j, p)] = v;
            smax = smax.max(v.norm());
        }
        scales[p] = smax.max(1e-300);
        for j in 0..mm {
            vand[(j, p)] /= cr(scales[p]);
        }
    }
    let vpinv = pinv(&vand, 1e-14);
    // stack all entries as right-hand columns
    let mut rhs = CMat::zeros(mm, rows * cols);
    for j in 0..mm {
        for r in 0..rows {
            for c_ in 0..cols {
                rhs[(j, r * cols + c_)] = resid[j][(r, c_)];
            }
        }
    }
    let mut sol = &vpinv * &rhs;
    // one step of iterative refinement recovers digits lost to the
    // Vandermonde conditioning
    let lsq_resid = &rhs - &vand * &sol;
    sol += &vpinv * lsq_resid;
    for p in 0..=k {
        let mut m = CMat::zeros(rows, cols);
        for r in 0..rows {
            for c_ in 0..cols {
                m[(r, c_)] = sol[(p, r * cols + c_)] / cr(scales[p]);
            }
        }
        field.set_coeff(p as i64, m);
    }
    let residual = l2_mismatch(curve, &field, samples);
    Ok((field, residual))
}

/// Convenience for scalar samples.
pub fn fit_scalar(curve: &Curve, samples: &[C64], order: usize) -> Result<(FunctionField, f64)> {
    let mats: Vec<CMat> = samples.iter().map(|&s| CMat::from_element(1, 1, s)).collect();
    fit_field(curve, &mats, order)
}
