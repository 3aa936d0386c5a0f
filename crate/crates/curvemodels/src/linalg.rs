//! Dense complex linear algebra helpers shared by every module: Hermitian
//! functional calculus, SVD-based range/rank/nullspace with a relative cutoff,
//! subspace arithmetic in orthonormal-basis form, and a small-matrix complex
//! eigensolver (characteristic polynomial + Durand-Kerner).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub const ZERO: C64 = Complex::new(0.0, 0.0);
pub const ONE: C64 = Complex::new(1.0, 0.0);

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest singular value.
pub fn opnorm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().singular_values()[0]
}

pub fn frob(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian eigen-decomposition, eigenvalues sorted descending.
/// The input is assumed Hermitian; only its Hermitian part is used.
pub fn herm_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    let h = (a + a.adjoint()) * cr(0.5);
    let se = nalgebra::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Hermitian p-th power (p may be negative / fractional); eigenvalues are
/// clamped at `floor` before the power to keep inverse powers finite.
pub fn herm_power(a: &CMat, p: f64, floor: f64) -> CMat {
    let (vals, vecs) = herm_eigen(a);
    let n = a.nrows();
    let mut d = CMat::zeros(n, n);
    for i in 0..n {
        let v = vals[i].max(floor);
        d[(i, i)] = cr(v.powf(p));
    }
    &vecs * d * vecs.adjoint()
}

pub fn herm_sqrt(a: &CMat) -> CMat {
    herm_power(a, 0.5, 0.0)
}

/// Numerical rank with a cutoff relative to the largest singular value.
pub fn rank(a: &CMat, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv[0];
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis of the column range, relative singular-value cutoff.
pub fn range_basis(a: &CMat, rel_tol: f64) -> CMat {
    if a.nrows() == 0 || a.ncols() == 0 {
        return CMat::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let r = if smax == 0.0 {
        0
    } else {
        svd.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
    };
    u.columns(0, r).into_owned()
}

/// Orthonormal basis of the (right) nullspace under a relative cutoff.
pub fn nullspace(a: &CMat, rel_tol: f64) -> CMat {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let r = if smax == 0.0 {
        0
    } else {
        svd.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
    };
    // remaining rows of V^H span the nullspace; V columns r..
    let n = a.ncols();
    let k = vt.nrows();
    let mut basis = CMat::zeros(n, n.saturating_sub(r));
    let mut col = 0;
    for i in r..k {
        basis.set_column(col, &vt.row(i).adjoint());
        col += 1;
    }
    // if A has fewer rows than cols, V^H from the thin SVD may omit trailing
    // directions; fall back to a full decomposition in that case.
    if col < basis.ncols() {
        let q = range_basis(&a.adjoint(), rel_tol);
        return complement_within(&eye(n), &q, 1e-12);
    }
    basis.columns(0, col).into_owned()
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pinv(a: &CMat, rel_tol: f64) -> CMat {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let mut d = CMat::zeros(vt.nrows(), u.ncols());
    for i in 0..svd.singular_values.len().min(d.nrows()).min(d.ncols()) {
        let s = svd.singular_values[i];
        if smax > 0.0 && s > rel_tol * smax {
            d[(i, i)] = cr(1.0 / s);
        }
    }
    vt.adjoint() * d * u.adjoint()
}

/// Least squares solve of A X = B.
pub fn lstsq(a: &CMat, b: &CMat, rel_tol: f64) -> CMat {
    pinv(a, rel_tol) * b
}

/// Condition number (ratio of extreme singular values), infinity if singular.
pub fn cond(a: &CMat) -> f64 {
    let sv = a.clone().singular_values();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

/// Orthoprojection matrix onto the span of the (orthonormal) columns of `q`.
pub fn projector(q: &CMat) -> CMat {
    q * q.adjoint()
}

/// Gap between subspaces given by orthonormal bases: ||P1 - P2||.
pub fn subspace_gap(q1: &CMat, q2: &CMat) -> f64 {
    opnorm(&(projector(q1) - projector(q2)))
}

/// Directed containment defect: sup over unit v in span(q_sub) of dist(v, span(q_big)).
pub fn containment_defect(q_sub: &CMat, q_big: &CMat) -> f64 {
    if q_sub.ncols() == 0 {
        return 0.0;
    }
    opnorm(&(q_sub - projector(q_big) * q_sub))
}

/// Orthonormal basis of span(q1) + span(q2).
pub fn span_union(q1: &CMat, q2: &CMat, rel_tol: f64) -> CMat {
    let mut m = CMat::zeros(q1.nrows(), q1.ncols() + q2.ncols());
    m.columns_mut(0, q1.ncols()).copy_from(q1);
    m.columns_mut(q1.ncols(), q2.ncols()).copy_from(q2);
    range_basis(&m, rel_tol)
}

/// Orthonormal basis of span(q1) ∩ span(q2), via principal angles:
/// directions of span(q1) whose singular value against span(q2) is 1 - tol or more.
pub fn subspace_intersection(q1: &CMat, q2: &CMat, tol: f64) -> CMat {
    if q1.ncols() == 0 || q2.ncols() == 0 {
        return CMat::zeros(q1.nrows(), 0);
    }
    let m = q1.adjoint() * q2;
    let svd = m.svd(true, false);
    let u = svd.u.as_ref().unwrap();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] >= 1.0 - tol)
        .collect();
    let mut basis = CMat::zeros(q1.nrows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        basis.set_column(col, &(q1 * u.column(i)));
    }
    basis
}

/// Orthonormal basis of the part of span(q) orthogonal to span(q_sub).
pub fn complement_within(q: &CMat, q_sub: &CMat, rel_tol: f64) -> CMat {
    if q.ncols() == 0 {
        return q.clone();
    }
    let resid = q - projector(q_sub) * q;
    range_basis(&resid, rel_tol.max(1e-10))
}

/// Characteristic polynomial coefficients of a square matrix via
/// Faddeev-LeVerrier: p(x) = x^n + c[n-1] x^(n-1) + ... + c[0].
fn char_poly(a: &CMat) -> Vec<C64> {
    let n = a.nrows();
    let mut coeffs = vec![ZERO; n];
    let mut b = a.clone();
    let mut ck = -b.diagonal().sum();
    if n >= 1 {
        coeffs[n - 1] = ck;
    }
    for k in 2..=n {
        let mut shifted = b;
        for i in 0..n {
            shifted[(i, i)] += ck;
        }
        b = a * shifted;
        ck = -b.diagonal().sum() / cr(k as f64);
        coeffs[n - k] = ck;
    }
    coeffs
}

fn poly_eval(coeffs: &[C64], x: C64) -> C64 {
    // monic: x^n + sum coeffs[k] x^k
    let n = coeffs.len();
    let mut v = ONE;
    for k in (0..n).rev() {
        v = v * x + coeffs[k];
    }
    v
}

/// All eigenvalues of a small complex matrix (Durand-Kerner on the
/// characteristic polynomial, then Newton polish). Intended for n <= ~12.
pub fn eigenvalues(a: &CMat) -> Vec<C64> {
    let n = a.nrows();
    if n == 0 {
        return vec![];
    }
    if n == 1 {
        return vec![a[(0, 0)]];
    }
    let coeffs = char_poly(a);
    // distinct initial guesses on a spiral, scaled to the matrix size
    let scale = 1.0 + frob(a);
    let mut roots: Vec<C64> = (0..n)
        .map(|k| Complex::from_polar(scale * (0.4 + 0.05 * k as f64), 0.7 + 2.4 * k as f64))
        .collect();
    for _ in 0..500 {
        let mut delta_max = 0.0f64;
        let snapshot = roots.clone();
        for i in 0..n {
            let mut denom = ONE;
            for j in 0..n {
                if j != i {
                    denom *= snapshot[i] - snapshot[j];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let step = poly_eval(&coeffs, snapshot[i]) / denom;
            roots[i] = snapshot[i] - step;
            delta_max = delta_max.max(step.norm());
        }
        if delta_max < 1e-14 * scale {
            break;
        }
    }
    roots
}

/// Unit eigenvector for a given (approximate) eigenvalue: smallest singular
/// direction of A - lambda I.
pub fn eigenvector(a: &CMat, lambda: C64) -> CVec {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= lambda;
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.unwrap();
    vt.row(vt.nrows() - 1).adjoint()
}
