//! Conservative curved systems as finite matrices: transfer functions, the
//! cascade product with its contour-integral couplings, adjoints, similarity,
//! simplicity, and the bridge from symbols to systems through the model.
//!
//! Boundary limits [.]_- are direct evaluations of rational matrix functions
//! on the curve; this is exact only when sigma(T) lies inside, so systems
//! with spectrum outside are rejected rather than analytically continued.

use crate::config::MAX_ORDER;
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::field::{fit_field, FunctionField};
use crate::fixtures::{theta_at, theta_power_samples};
use crate::linalg::{cr, eigenvalues, frob, opnorm, rank, CMat, C64, ONE, ZERO};
use crate::model::build_model;
use crate::schur::{NCharFn, WeightedSchurFunction};
use crate::weight::Weight;

/// Symbol attached to a system. The closed-form conformal-inverse powers stay
/// exact at any epsilon and any grid; fitted fields cover everything else.
#[derive(Debug, Clone)]
pub enum CharFnData {
    Field(WeightedSchurFunction),
    ThetaPower { curve: Curve, k: u32 },
    /// psi^{-1} * base with the outgoing weight transported to psi^* Xi psi.
    /// Kept in factored form: the transported weight has a slowly decaying
    /// Laurent tail on a genuinely curved boundary, while the factored dual
    /// symbol (base dual) * psi stays exact on the grid.
    Twisted { base: Box<CharFnData>, psi: FunctionField },
}

impl CharFnData {
    pub fn curve(&self) -> &Curve {
        match self {
            CharFnData::Field(f) => &f.curve,
            CharFnData::ThetaPower { curve, .. } => curve,
            CharFnData::Twisted { base, .. } => base.curve(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            CharFnData::Field(f) => f.in_dim(),
            CharFnData::ThetaPower { .. } => 1,
            CharFnData::Twisted { base, .. } => base.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            CharFnData::Field(f) => f.out_dim(),
            CharFnData::ThetaPower { .. } => 1,
            CharFnData::Twisted { base, .. } => base.out_dim(),
        }
    }

    pub fn xi_plus(&self) -> Weight {
        match self {
            CharFnData::Field(f) => f.xi_plus.clone(),
            CharFnData::ThetaPower { .. } => Weight::identity(1),
            CharFnData::Twisted { base, .. } => base.xi_plus(),
        }
    }

    pub fn xi_minus(&self) -> Weight {
        match self {
            CharFnData::Field(f) => f.xi_minus.clone(),
            CharFnData::ThetaPower { .. } => Weight::identity(1),
            CharFnData::Twisted { base, psi } => {
                // best-effort coefficient form of psi^* Xi psi; compatibility
                // metadata only, the dual symbol never goes through it
                let curve = base.curve();
                let wm = base.xi_minus().eval_grid(curve);
                let ps = psi.eval_grid(curve);
                let samples: Vec<CMat> =
                    (0..curve.m).map(|j| ps[j].adjoint() * &wm[j] * &ps[j]).collect();
                let order = (curve.m / 6).min(MAX_ORDER);
                match fit_field(curve, &samples, order) {
                    Ok((f, _)) => Weight { field: f },
                    Err(_) => base.xi_minus(),
                }
            }
        }
    }

    /// Analytic evaluation of the symbol inside the curve.
    pub fn plus_at(&self, w: C64) -> CMat {
        match self {
            CharFnData::Field(f) => f.theta_plus.eval_at(w),
            CharFnData::ThetaPower { curve, k } => {
                CMat::from_element(1, 1, theta_at(curve.epsilon, w).powu(*k))
            }
            CharFnData::Twisted { base, psi } => {
                let pv = psi
                    .eval_at(w)
                    .try_inverse()
                    .expect("twist factor invertible inside the curve");
                pv * base.plus_at(w)
            }
        }
    }

    /// Dual symbol Xi+^{-1} Theta^* Xi- sampled on an arbitrary grid of the
    /// same geometry (used for coupling quadrature at doubled resolution).
    pub fn minus_grid(&self, curve: &Curve) -> Vec<CMat> {
        match self {
            CharFnData::Field(f) => {
                let th = f.theta_plus.eval_grid(curve);
                let wp = f.xi_plus.power_samples(curve, -1.0);
                let wm = f.xi_minus.eval_grid(curve);
                (0..curve.m).map(|j| &wp[j] * th[j].adjoint() * &wm[j]).collect()
            }
            CharFnData::ThetaPower { k, .. } => theta_power_samples(curve, -(*k as i32))
                .into_iter()
                .map(|v| CMat::from_element(1, 1, v))
                .collect(),
            CharFnData::Twisted { base, psi } => {
                let bm = base.minus_grid(curve);
                let ps = psi.eval_grid(curve);
                (0..curve.m).map(|j| &bm[j] * &ps[j]).collect()
            }
        }
    }

    /// Product symbol second * first.
    pub fn compose(second: &CharFnData, first: &CharFnData) -> Result<CharFnData> {
        if !second.curve().same_geometry(first.curve()) {
            return Err(Error::Incompatible("symbol curves differ".into()));
        }
        if second.in_dim() != first.out_dim() {
            return Err(Error::Incompatible("symbol dimensions do not chain".into()));
        }
        match (second, first) {
            (CharFnData::ThetaPower { curve, k: k2 }, CharFnData::ThetaPower { k: k1, .. }) => {
                Ok(CharFnData::ThetaPower { curve: curve.clone(), k: k1 + k2 })
            }
            _ => {
                let curve = first.curve();
                let a = grid_plus(second, curve);
                let b = grid_plus(first, curve);
                let samples: Vec<CMat> = (0..curve.m).map(|j| &a[j] * &b[j]).collect();
                let order = order_of(second)
                    .saturating_add(order_of(first))
                    .min(MAX_ORDER)
                    .min(curve.m / 6);
                let (f, _) = fit_field(curve, &samples, order)?;
                Ok(CharFnData::Field(WeightedSchurFunction::new(
                    f,
                    first.xi_plus(),
                    second.xi_minus(),
                    curve.clone(),
                )?))
            }
        }
    }

    /// The symbol of the adjoint system on the conjugate curve.
    pub fn dual(&self) -> Result<CharFnData> {
        match self {
            CharFnData::ThetaPower { curve, k } => Ok(CharFnData::ThetaPower {
                curve: curve.conjugate(),
                k: *k,
            }),
            CharFnData::Twisted { .. } => {
                Err(Error::Incompatible("adjoint of a twisted symbol is not supported".into()))
            }
            CharFnData::Field(f) => {
                let cc = f.curve.conjugate();
                Ok(CharFnData::Field(WeightedSchurFunction::new(
                    f.theta_plus.tilde(),
                    f.xi_minus.tilde().inverse(&cc)?,
                    f.xi_plus.tilde().inverse(&cc)?,
                    cc,
                )?))
            }
        }
    }
}

fn grid_plus(c: &CharFnData, curve: &Curve) -> Vec<CMat> {
    match c {
        CharFnData::Field(f) => f.theta_plus.eval_grid(curve),
        CharFnData::ThetaPower { k, .. } => theta_power_samples(curve, *k as i32)
            .into_iter()
            .map(|v| CMat::from_element(1, 1, v))
            .collect(),
        CharFnData::Twisted { base, psi } => {
            let bp = grid_plus(base, curve);
            let ps = psi.eval_grid(curve);
            (0..curve.m)
                .map(|j| {
                    ps[j].clone()
                        .try_inverse()
                        .expect("twist factor invertible on the boundary")
                        * &bp[j]
                })
                .collect()
        }
    }
}

fn order_of(c: &CharFnData) -> usize {
    match c {
        CharFnData::Field(f) => f.theta_plus.order,
        CharFnData::ThetaPower { k, .. } => 8 * (*k as usize).max(1),
        CharFnData::Twisted { base, psi } => order_of(base) + psi.order + 8,
    }
}

#[derive(Debug, Clone)]
pub struct CurvedSystem {
    pub t: CMat,
    pub m: CMat,
    pub n: CMat,
    pub theta_u: Option<CMat>,
    pub xi_plus: Weight,
    pub xi_minus: Weight,
    pub curve: Curve,
    pub charfn: CharFnData,
}

#[derive(Debug, Clone)]
pub struct SimilarityWitness {
    pub x: CMat,
    pub residual: f64,
    pub cond: f64,
}

impl CurvedSystem {
    pub fn new(
        t: CMat,
        m: CMat,
        n: CMat,
        theta_u: Option<CMat>,
        charfn: CharFnData,
    ) -> Result<CurvedSystem> {
        let curve = charfn.curve().clone();
        // eigenvalues must avoid the boundary: |theta| = 1 exactly on C
        for ev in eigenvalues(&t) {
            let gap = (theta_at(curve.epsilon, ev).norm() - 1.0).abs();
            if gap < 1e-9 {
                return Err(Error::Incompatible(format!(
                    "spectrum touches the curve at {ev}"
                )));
            }
        }
        CurvedSystem::assemble(t, m, n, theta_u, charfn)
    }

    /// Construction without the boundary-gap gate. Model compressions of
    /// non-inner symbols have boundary spectrum in the limit, so internally
    /// assembled systems land here; quadrature paths guard themselves.
    pub(crate) fn assemble(
        t: CMat,
        m: CMat,
        n: CMat,
        theta_u: Option<CMat>,
        charfn: CharFnData,
    ) -> Result<CurvedSystem> {
        let d = t.nrows();
        if t.ncols() != d || m.ncols() != d || n.nrows() != d {
            return Err(Error::Schema("system blocks have inconsistent dimensions".into()));
        }
        if m.nrows() != charfn.in_dim() || n.ncols() != charfn.out_dim() {
            return Err(Error::Schema("system ports do not match the symbol".into()));
        }
        let curve = charfn.curve().clone();
        if let Some(u) = &theta_u {
            let defect = opnorm(&(u.adjoint() * u - CMat::identity(u.ncols(), u.ncols())));
            if defect > 1e-10 {
                return Err(Error::Schema(format!("theta_u not unitary: {defect:.3e}")));
            }
        }
        Ok(CurvedSystem {
            xi_plus: charfn.xi_plus(),
            xi_minus: charfn.xi_minus(),
            curve,
            t,
            m,
            n,
            theta_u,
            charfn,
        })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn transfer_function(&self, z: C64) -> Result<CMat> {
        let d = self.dim();
        let a = &self.t - CMat::identity(d, d) * z;
        let inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("{z} is in the spectrum")))?;
        Ok(&self.m * inv * &self.n)
    }

    /// Spectrum strictly inside the curve (required for product couplings).
    pub fn spectrum_inside(&self) -> bool {
        eigenvalues(&self.t).iter().all(|&ev| self.curve.contains_inner(ev))
    }

    /// Cauchy transform of the dual symbol: equals (P+ Theta^-)(z) inside
    /// and -(P- Theta^-)(z) outside.
    fn dual_cauchy(&self, z: C64) -> CMat {
        let c = &self.curve;
        let tm = self.charfn.minus_grid(c);
        let mut acc = CMat::zeros(self.charfn.in_dim(), self.charfn.out_dim());
        for j in 0..c.m {
            acc += &tm[j] * (c.dphi[j] * c.z[j] / (c.zeta[j] - z) / cr(c.m as f64));
        }
        acc
    }

    /// Worst mismatch between the transfer function and the boundary-value
    /// expression of the attached symbol over the sample points.
    pub fn ctot_residual(&self, zs: &[C64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for &z in zs {
            let ups = self.transfer_function(z)?;
            let want = if self.curve.contains_inner(z) {
                let tp = self.charfn.plus_at(z);
                let inv = tp
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical(format!("symbol singular at {z}")))?;
                self.dual_cauchy(z) - inv
            } else {
                self.dual_cauchy(z)
            };
            worst = worst.max(opnorm(&(ups - want)));
        }
        Ok(worst)
    }

    pub fn adjoint(&self) -> Result<CurvedSystem> {
        CurvedSystem::assemble(
            self.t.adjoint(),
            self.n.adjoint(),
            self.m.adjoint(),
            self.theta_u.as_ref().map(|u| u.adjoint()),
            self.charfn.dual()?,
        )
    }

    /// Observability at finite dimension.
    pub fn is_simple(&self) -> bool {
        let d = self.dim();
        let p = self.m.nrows();
        let mut stack = CMat::zeros(p * d, d);
        let mut row = self.m.clone();
        for k in 0..d {
            stack.rows_mut(k * p, p).copy_from(&row);
            row = &row * &self.t;
        }
        rank(&stack, 1e-10) == d
    }
}

fn coupling_blocks(s2: &CurvedSystem, s1: &CurvedSystem, curve: &Curve) -> (CMat, CMat) {
    let d1 = s1.dim();
    let d2 = s2.dim();
    let tm1 = s1.charfn.minus_grid(curve);
    let tm2 = s2.charfn.minus_grid(curve);
    let mut m221 = CMat::zeros(s1.charfn.in_dim(), d2);
    let mut n121 = CMat::zeros(d1, s2.charfn.out_dim());
    for j in 0..curve.m {
        let w = curve.dphi[j] * curve.z[j] / cr(curve.m as f64);
        let r2 = (&s2.t - CMat::identity(d2, d2) * curve.zeta[j])
            .try_inverse()
            .expect("spectrum checked inside the curve");
        let r1 = (&s1.t - CMat::identity(d1, d1) * curve.zeta[j])
            .try_inverse()
            .expect("spectrum checked inside the curve");
        m221 -= &tm1[j] * &s2.m * r2 * w;
        n121 -= r1 * &s1.n * &tm2[j] * w;
    }
    (m221, n121)
}

/// Coupling blocks by residue calculus: with sigma(T) inside the curve only
/// the analytic Laurent modes of the dual symbol contribute, giving
/// sum_k a_k M2 T2^k and sum_k T1^k N1 b_k. Exact when the dual symbols
/// admit accurate Laurent fits (the fit is gated against the grid samples).
fn coupling_blocks_series(s2: &CurvedSystem, s1: &CurvedSystem) -> Result<(CMat, CMat)> {
    let curve = &s1.curve;
    let order = (curve.m / 6).min(MAX_ORDER).max(1);
    let fit_gated = |samples: &[CMat]| -> Result<FunctionField> {
        let (f, _) = fit_field(curve, samples, order)?;
        let back = f.eval_grid(curve);
        let mut worst = 0.0f64;
        for j in 0..curve.m {
            worst = worst.max(frob(&(&back[j] - &samples[j])));
        }
        if worst > 1e-9 {
            return Err(Error::Numerical(format!("dual symbol fit residual {worst:.3e}")));
        }
        Ok(f)
    };
    let f1 = fit_gated(&s1.charfn.minus_grid(curve))?;
    let f2 = fit_gated(&s2.charfn.minus_grid(curve))?;
    let d2 = s2.dim();
    let mut m221 = CMat::zeros(s1.charfn.in_dim(), d2);
    let mut pow2 = s2.m.clone();
    for k in 0..=order as i64 {
        m221 += f1.coeff(k) * &pow2;
        pow2 = &pow2 * &s2.t;
    }
    let d1 = s1.dim();
    let mut n121 = CMat::zeros(d1, s2.charfn.out_dim());
    let mut pow1 = s1.n.clone();
    for k in 0..=order as i64 {
        n121 += &pow1 * f2.coeff(k);
        pow1 = &s1.t * pow1;
    }
    Ok((m221, n121))
}

/// Cascade product. The couplings are contour integrals of the factors' dual
/// symbols against resolvents; quadrature convergence is verified by
/// recomputing on the doubled grid.
pub fn product(s2: &CurvedSystem, s1: &CurvedSystem) -> Result<CurvedSystem> {
    if !s1.curve.same_geometry(&s2.curve) {
        return Err(Error::Incompatible("product factors live on different curves".into()));
    }
    if s1.charfn.out_dim() != s2.charfn.in_dim()
        || !s1.xi_minus.approx_eq(&s2.xi_plus, &s1.curve, 1e-8)
    {
        return Err(Error::Incompatible("inner ports of the factors do not match".into()));
    }
    if !s1.spectrum_inside() || !s2.spectrum_inside() {
        return Err(Error::Incompatible(
            "product needs both spectra inside the curve".into(),
        ));
    }
    let (m221, n121) = {
        let (mq, nq) = coupling_blocks(s2, s1, &s1.curve);
        let fine = s1.curve.doubled()?;
        let (mf, nf) = coupling_blocks(s2, s1, &fine);
        let scale = 1.0 + frob(&mq) + frob(&nq);
        let drift = (frob(&(&mf - &mq)) + frob(&(&nf - &nq))) / scale;
        if drift <= 1e-9 {
            (mq, nq)
        } else {
            // the quadrature integrand peaks when the spectrum sits close to
            // the curve; fall back to evaluating the residue series directly
            // on the analytic Laurent modes of the dual symbols
            coupling_blocks_series(s2, s1).map_err(|_| {
                Error::Numerical(format!(
                    "coupling quadrature has not converged: {drift:.3e}"
                ))
            })?
        }
    };

    let d1 = s1.dim();
    let d2 = s2.dim();
    let mut t = CMat::zeros(d1 + d2, d1 + d2);
    t.view_mut((0, 0), (d1, d1)).copy_from(&s1.t);
    t.view_mut((0, d1), (d1, d2)).copy_from(&(&s1.n * &s2.m));
    t.view_mut((d1, d1), (d2, d2)).copy_from(&s2.t);
    let p = s1.charfn.in_dim();
    let q = s2.charfn.out_dim();
    let mut m = CMat::zeros(p, d1 + d2);
    m.view_mut((0, 0), (p, d1)).copy_from(&s1.m);
    m.view_mut((0, d1), (p, d2)).copy_from(&m221);
    let mut n = CMat::zeros(d1 + d2, q);
    n.view_mut((0, 0), (d1, q)).copy_from(&n121);
    n.view_mut((d1, 0), (d2, q)).copy_from(&s2.n);
    let theta_u = match (&s2.theta_u, &s1.theta_u) {
        (Some(a), Some(b)) => Some(a * b),
        (None, None) => None,
        _ => return Err(Error::Incompatible("unitary tags present on one factor only".into())),
    };
    CurvedSystem::assemble(t, m, n, theta_u, CharFnData::compose(&s2.charfn, &s1.charfn)?)
}

/// Solve the stacked linear system {X T1 = T2 X, M2 X = M1, X N1 = N2} by
/// least squares; accept on residual and conditioning.
pub fn find_similarity(s1: &CurvedSystem, s2: &CurvedSystem) -> Option<SimilarityWitness> {
    if s1.dim() != s2.dim()
        || s1.m.nrows() != s2.m.nrows()
        || s1.n.ncols() != s2.n.ncols()
    {
        return None;
    }
    match (&s1.theta_u, &s2.theta_u) {
        (None, None) => {}
        (Some(a), Some(b)) if opnorm(&(a - b)) <= 1e-8 => {}
        _ => return None,
    }
    if !s1.xi_plus.approx_eq(&s2.xi_plus, &s1.curve, 1e-8)
        || !s1.xi_minus.approx_eq(&s2.xi_minus, &s1.curve, 1e-8)
    {
        return None;
    }
    solve_similarity(&s1.t, &s1.m, &s1.n, &s2.t, &s2.m, &s2.n)
}

/// Matrix-level similarity solve, also usable for candidates that are not
/// admissible systems themselves (e.g. purely normal remainders whose
/// spectrum sits on the curve).
pub fn solve_similarity(
    t1: &CMat,
    m1: &CMat,
    n1: &CMat,
    t2: &CMat,
    m2: &CMat,
    n2: &CMat,
) -> Option<SimilarityWitness> {
    let w = similarity_ls(t1, m1, n1, t2, m2, n2)?;
    if w.residual <= 1e-8 && w.cond <= 1e8 {
        Some(w)
    } else {
        None
    }
}

/// The least-squares candidate with its residual and conditioning, without
/// the acceptance gate.
pub fn similarity_ls(
    t1: &CMat,
    m1: &CMat,
    n1: &CMat,
    t2: &CMat,
    m2: &CMat,
    n2: &CMat,
) -> Option<SimilarityWitness> {
    let d = t1.nrows();
    if t2.nrows() != d {
        return None;
    }
    let p = m1.nrows();
    let q = n1.ncols();
    let unknowns = d * d;
    let rows = d * d + p * d + d * q;
    let mut a = CMat::zeros(rows, unknowns);
    let mut b = CMat::zeros(rows, 1);
    let idx = |r: usize, c: usize| c * d + r;
    // X T1 - T2 X = 0
    for i in 0..d {
        for j in 0..d {
            let row = j * d + i;
            for k in 0..d {
                a[(row, idx(i, k))] += t1[(k, j)];
                a[(row, idx(k, j))] -= t2[(i, k)];
            }
        }
    }
    // M2 X = M1
    for i in 0..p {
        for j in 0..d {
            let row = d * d + j * p + i;
            for k in 0..d {
                a[(row, idx(k, j))] += m2[(i, k)];
            }
            b[(row, 0)] = m1[(i, j)];
        }
    }
    // X N1 = N2
    for i in 0..d {
        for j in 0..q {
            let row = d * d + p * d + j * d + i;
            for k in 0..d {
                a[(row, idx(i, k))] += n1[(k, j)];
            }
            b[(row, 0)] = n2[(i, j)];
        }
    }
    let sol = crate::linalg::lstsq(&a, &b, 1e-12);
    let mut x = CMat::zeros(d, d);
    for c_ in 0..d {
        for r in 0..d {
            x[(r, c_)] = sol[(idx(r, c_), 0)];
        }
    }
    let scale = 1.0 + opnorm(t1) + opnorm(m1) + opnorm(n1);
    let res = (opnorm(&(&x * t1 - t2 * &x))
        + opnorm(&(m2 * &x - m1))
        + opnorm(&(&x * n1 - n2)))
        / scale;
    let cond = crate::linalg::cond(&x);
    Some(SimilarityWitness { x, residual: res, cond })
}

/// System of a symbol through its 2-model.
pub fn f_sc(theta: &WeightedSchurFunction) -> Result<CurvedSystem> {
    let fam = NCharFn::from_factors(vec![theta.clone()])?;
    let md = build_model(&fam)?;
    let sys = md.model_system();
    CurvedSystem::assemble(sys.t, sys.m, sys.n, None, CharFnData::Field(theta.clone()))
}

/// Compare the product of the factor systems with the system compressed out
/// of the joint 3-model. Returns (product, model system, witness).
pub fn model_product_similarity(
    theta2: &WeightedSchurFunction,
    theta1: &WeightedSchurFunction,
) -> Result<(CurvedSystem, CurvedSystem, Option<SimilarityWitness>)> {
    let s21 = product(&f_sc(theta2)?, &f_sc(theta1)?)?;
    let fam = NCharFn::from_factors(vec![theta1.clone(), theta2.clone()])?;
    let md = build_model(&fam)?;
    let sys = md.model_system();
    let hat = CurvedSystem::assemble(
        sys.t,
        sys.m,
        sys.n,
        None,
        CharFnData::compose(&s21.charfn.clone(), &CharFnData::Field(theta1.clone()))
            .map(|_| s21.charfn.clone())?,
    )?;
    let w = find_similarity(&s21, &hat);
    Ok((s21, hat, w))
}

/// Both associations of a 3-chain and a similarity between them.
pub fn associator(
    s1: &CurvedSystem,
    s2: &CurvedSystem,
    s3: &CurvedSystem,
) -> Result<(CurvedSystem, CurvedSystem, Option<SimilarityWitness>)> {
    let lhs = product(s3, &product(s2, s1)?)?;
    let rhs = product(&product(s3, s2)?, s1)?;
    let w = find_similarity(&lhs, &rhs);
    Ok((lhs, rhs, w))
}

/// Twist the input block by an invertible analytic factor: the returned
/// system is similar to the one whose symbol is psi^{-1} Theta with the
/// middle weight transported to psi^* Xi psi.
pub fn adjust_input(s1: &CurvedSystem, psi: &FunctionField) -> Result<CurvedSystem> {
    let curve = &s1.curve;
    if psi.rows != psi.cols || psi.rows != s1.charfn.out_dim() {
        return Err(Error::Incompatible("twist factor has wrong dimensions".into()));
    }
    let samples = psi.eval_grid(curve);
    for sm in &samples {
        if sm.clone().try_inverse().is_none() {
            return Err(Error::Incompatible("twist factor singular on the boundary".into()));
        }
    }
    // the twist acts as a static cascade factor whose dual symbol is psi
    // itself (the transported outgoing weight cancels against psi^{-*})
    let d1 = s1.dim();
    let mut n2 = CMat::zeros(d1, psi.cols);
    for j in 0..curve.m {
        let w = curve.dphi[j] * curve.z[j] / cr(curve.m as f64);
        let r1 = (&s1.t - CMat::identity(d1, d1) * curve.zeta[j])
            .try_inverse()
            .ok_or_else(|| Error::Incompatible("spectrum touches the grid".into()))?;
        n2 -= r1 * &s1.n * &samples[j] * w;
    }
    let charfn = CharFnData::Twisted {
        base: Box::new(s1.charfn.clone()),
        psi: psi.clone(),
    };
    CurvedSystem::assemble(s1.t.clone(), s1.m.clone(), n2, s1.theta_u.clone(), charfn)
}

/// Unitary colligation evaluation on the disk.
pub fn disk_colligation_charfn(t: &CMat, m: &CMat, n: &CMat, l: &CMat, z: C64) -> (CMat, f64) {
    let d = t.nrows();
    let inv = (CMat::identity(d, d) - t.adjoint() * z)
        .try_inverse()
        .expect("|z| < 1 keeps I - z T^* invertible for contractions");
    let val = l.adjoint() + n.adjoint() * z * inv * m.adjoint();
    let top = t.nrows() + m.nrows();
    let wide = t.ncols() + n.ncols();
    let mut coll = CMat::zeros(top, wide);
    coll.view_mut((0, 0), (t.nrows(), t.ncols())).copy_from(t);
    coll.view_mut((0, t.ncols()), (n.nrows(), n.ncols())).copy_from(n);
    coll.view_mut((t.nrows(), 0), (m.nrows(), m.ncols())).copy_from(m);
    coll.view_mut((t.nrows(), t.ncols()), (l.nrows(), l.ncols())).copy_from(l);
    let defect = opnorm(&(coll.adjoint() * &coll - CMat::identity(wide, wide)));
    (val, defect)
}

/// Scalar shorthand used by fixtures and tests.
pub fn scalar_system(t: C64, m: C64, n: C64, charfn: CharFnData) -> Result<CurvedSystem> {
    CurvedSystem::new(
        CMat::from_element(1, 1, t),
        CMat::from_element(1, 1, m),
        CMat::from_element(1, 1, n),
        None,
        charfn,
    )
}

pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}
