//! Weighted Schur-class functions on the curve, their duals, and n-indexed
//! families of factors with the cocycle structure.

use crate::config::{AXIOM_TOL, RANK_TOL};
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::field::{fit_field, FunctionField};
use crate::linalg::{cr, herm_eigen, herm_sqrt, CMat};
use crate::weight::Weight;

/// Theta+ analytic on G+, contractive from the Xi+ norm to the Xi- norm on
/// the boundary: Xi+ - Theta+^* Xi- Theta+ >= 0 at every node.
#[derive(Debug, Clone)]
pub struct WeightedSchurFunction {
    pub theta_plus: FunctionField,
    pub xi_plus: Weight,
    pub xi_minus: Weight,
    pub curve: Curve,
}

/// Diagnostics from the membership test.
#[derive(Debug, Clone)]
pub struct SchurReport {
    pub ok: bool,
    /// Most negative eigenvalue of Xi+ - Theta^* Xi- Theta over the grid
    /// (>= 0 up to tolerance for members).
    pub margin: f64,
    /// Largest co-analytic coefficient norm of Theta+.
    pub neg_mass: f64,
}

impl WeightedSchurFunction {
    pub fn new(
        theta_plus: FunctionField,
        xi_plus: Weight,
        xi_minus: Weight,
        curve: Curve,
    ) -> Result<Self> {
        if xi_plus.dim() != theta_plus.cols || xi_minus.dim() != theta_plus.rows {
            return Err(Error::Incompatible(format!(
                "Schur function dims: Theta {}x{}, Xi+ {}, Xi- {}",
                theta_plus.rows,
                theta_plus.cols,
                xi_plus.dim(),
                xi_minus.dim()
            )));
        }
        Ok(WeightedSchurFunction { theta_plus, xi_plus, xi_minus, curve })
    }

    pub fn in_dim(&self) -> usize {
        self.theta_plus.cols
    }

    pub fn out_dim(&self) -> usize {
        self.theta_plus.rows
    }

    pub fn is_weighted_schur(&self) -> SchurReport {
        let neg_mass = self.theta_plus.neg_mass();
        let th = self.theta_plus.eval_grid(&self.curve);
        let xp = self.xi_plus.eval_grid(&self.curve);
        let xm = self.xi_minus.eval_grid(&self.curve);
        let mut margin = f64::INFINITY;
        for j in 0..self.curve.m {
            let s = &xp[j] - th[j].adjoint() * &xm[j] * &th[j];
            let (vals, _) = herm_eigen(&s);
            margin = margin.min(*vals.last().unwrap());
        }
        SchurReport { ok: neg_mass <= AXIOM_TOL && margin >= -AXIOM_TOL, margin, neg_mass }
    }

    /// Grid samples of the dual symbol Theta^-(zeta) = Xi+^{-1} Theta+^* Xi-.
    pub fn theta_minus_samples(&self) -> Vec<CMat> {
        let th = self.theta_plus.eval_grid(&self.curve);
        let xp_inv = self.xi_plus.power_samples(&self.curve, -1.0);
        let xm = self.xi_minus.eval_grid(&self.curve);
        (0..self.curve.m)
            .map(|j| &xp_inv[j] * th[j].adjoint() * &xm[j])
            .collect()
    }

    /// Theta^- refit to coefficients. The co-analytic coefficients are exact
    /// contour functionals; the analytic part is a least-squares fit whose
    /// residual is gated by `tol`.
    pub fn theta_minus(&self, order: usize, tol: f64) -> Result<FunctionField> {
        let samples = self.theta_minus_samples();
        let (f, resid) = fit_field(&self.curve, &samples, order)?;
        if resid > tol {
            return Err(Error::Numerical(format!(
                "Theta^- fit residual {resid:.3e} > {tol:.1e}"
            )));
        }
        Ok(f)
    }

    pub fn theta_minus_split(&self, order: usize, tol: f64) -> Result<(FunctionField, FunctionField)> {
        Ok(self.theta_minus(order, tol)?.riesz_split())
    }
}

/// The indexed family Theta_ij = theta_{i-1} ... theta_j (i >= j) generated by
/// n-1 adjacent Schur factors theta_k = Theta_{k+1,k}.
#[derive(Debug, Clone)]
pub struct NCharFn {
    pub curve: Curve,
    pub n: usize,
    /// dims d_1..d_n of the coefficient spaces.
    pub dims: Vec<usize>,
    /// Xi_1..Xi_n.
    pub weights: Vec<Weight>,
    /// factors[k] = Theta_{k+2,k+1 <- k+1}, i.e. the adjacent factor from
    /// space k+1 to space k+2 (0-based storage of Theta_{k+1,k}).
    pub factors: Vec<FunctionField>,
}

impl NCharFn {
    pub fn from_factors(factors: Vec<WeightedSchurFunction>) -> Result<NCharFn> {
        if factors.is_empty() {
            return Err(Error::Schema("need at least one factor".into()));
        }
        let curve = factors[0].curve.clone();
        for f in &factors {
            if !f.curve.same_geometry(&curve) {
                return Err(Error::Incompatible("factors live on different curves".into()));
            }
        }
        // adjacent weights must chain: out-weight of factor k = in-weight of k+1
        for k in 0..factors.len() - 1 {
            if !factors[k].xi_minus.approx_eq(&factors[k + 1].xi_plus, &curve, 1e-8) {
                return Err(Error::Incompatible(format!(
                    "weight mismatch between factors {k} and {}",
                    k + 1
                )));
            }
        }
        let n = factors.len() + 1;
        let mut dims = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        dims.push(factors[0].in_dim());
        weights.push(factors[0].xi_plus.clone());
        for f in &factors {
            dims.push(f.out_dim());
            weights.push(f.xi_minus.clone());
        }
        Ok(NCharFn {
            curve,
            n,
            dims,
            weights,
            factors: factors.into_iter().map(|f| f.theta_plus).collect(),
        })
    }

    /// Theta_ij as a coefficient field (i >= j, 1-based). Fitted from node
    /// samples of the product rather than coefficient convolution: convolution
    /// piles error into high-order coefficients, which the curve amplifies
    /// like max|zeta|^k, while a fresh fit keeps its own noise control.
    pub fn theta_ij(&self, i: usize, j: usize) -> Result<FunctionField> {
        if !(1 <= j && j <= i && i <= self.n) {
            return Err(Error::Schema(format!("theta indices {i},{j} out of range n={}", self.n)));
        }
        if i == j {
            return Ok(FunctionField::identity(self.dims[i - 1]));
        }
        if i == j + 1 {
            return Ok(self.factors[j - 1].clone());
        }
        let samples = self.theta_ij_samples(i, j)?;
        let total: usize = (j - 1..i - 1).map(|k| self.factors[k].order).sum();
        // keep well inside the m/4 fit limit: fits close to it go unstable
        let order = total.min(crate::config::MAX_ORDER).min(self.curve.m / 6);
        let (f, _) = fit_field(&self.curve, &samples, order)?;
        Ok(f)
    }

    /// Node samples of Theta_ij (exact per-node products, no convolution).
    pub fn theta_ij_samples(&self, i: usize, j: usize) -> Result<Vec<CMat>> {
        if !(1 <= j && j <= i && i <= self.n) {
            return Err(Error::Schema(format!("theta indices {i},{j} out of range n={}", self.n)));
        }
        let m = self.curve.m;
        let mut acc: Vec<CMat> = (0..m).map(|_| CMat::identity(self.dims[j - 1], self.dims[j - 1])).collect();
        for k in j - 1..i - 1 {
            let f = self.factors[k].eval_grid(&self.curve);
            for idx in 0..m {
                acc[idx] = &f[idx] * &acc[idx];
            }
        }
        Ok(acc)
    }

    pub fn factor_as_schur(&self, k: usize) -> Result<WeightedSchurFunction> {
        if k >= self.factors.len() {
            return Err(Error::Schema(format!("factor index {k} out of range")));
        }
        WeightedSchurFunction::new(
            self.factors[k].clone(),
            self.weights[k].clone(),
            self.weights[k + 1].clone(),
            self.curve.clone(),
        )
    }

    /// Max grid residual of the cocycle Theta_ik = Theta_ij Theta_jk over all
    /// index triples.
    pub fn cocycle_residual(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 1..=self.n {
            for j in 1..=i {
                for k in 1..=j {
                    let lhs = self.theta_ij_samples(i, k)?;
                    let a = self.theta_ij_samples(i, j)?;
                    let b = self.theta_ij_samples(j, k)?;
                    for idx in 0..self.curve.m {
                        let d = &lhs[idx] - &a[idx] * &b[idx];
                        worst = worst.max(crate::linalg::frob(&d));
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Random strictly contractive factor family for the verification suites.
/// Weights are constant Hermitian positive definite (non-constant Hermitian
/// weights are only representable for small eps; see weight.rs). Factors are
/// random analytic polynomials scaled so the weighted symbol has sup norm
/// `contraction` (< 1 keeps defects uniformly positive).
pub fn random_ncharfn<R: rand::Rng>(
    rng: &mut R,
    curve: &Curve,
    dims: &[usize],
    order: usize,
    contraction: f64,
) -> Result<NCharFn> {
    use crate::linalg::c;
    let n = dims.len();
    if n < 2 {
        return Err(Error::Schema("need at least two spaces".into()));
    }
    let mut weights = Vec::with_capacity(n);
    for &d in dims {
        let mut a = CMat::zeros(d, d);
        for x in a.iter_mut() {
            *x = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let g = CMat::identity(d, d) + &a * a.adjoint() * cr(0.5);
        weights.push(Weight::constant(g));
    }
    let mut factors = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let (din, dout) = (dims[k], dims[k + 1]);
        let mut f = FunctionField::zero(dout, din, order);
        for j in 0..=order as i64 {
            let mut a = CMat::zeros(dout, din);
            for x in a.iter_mut() {
                *x = c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
            f.set_coeff(j, a * cr(1.0 / (1.0 + j as f64)));
        }
        // scale the weighted symbol to the requested sup norm
        let hp = weights[k + 1].power_samples(curve, 0.5);
        let im = weights[k].power_samples(curve, -0.5);
        let fs = f.eval_grid(curve);
        let sup = (0..curve.m)
            .map(|m| crate::linalg::opnorm(&(&hp[m] * &fs[m] * &im[m])))
            .fold(0.0, f64::max);
        let sf = WeightedSchurFunction::new(
            f.scale(cr(contraction / sup)),
            weights[k].clone(),
            weights[k + 1].clone(),
            curve.clone(),
        )?;
        debug_assert!(sf.is_weighted_schur().ok);
        factors.push(sf);
    }
    NCharFn::from_factors(factors)
}

/// Node report for the regularity criterion.
#[derive(Debug, Clone)]
pub struct RegularityNode {
    pub node: usize,
    pub middle: usize,
    pub rank_left_defect: usize,
    pub rank_right_defect: usize,
    pub rank_joint: usize,
    /// Smallest defect eigenvalue near the rank cut (flag for edge cases).
    pub edge_flag: bool,
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub regular: bool,
    pub nodes: Vec<RegularityNode>,
}

/// Regularity of the family: for every middle index j (with k = 1, i = n,
/// which suffices) and every node, the defect range of Theta_{nj} meets the
/// *-defect range of Theta_{j1} trivially:
/// rank[D_l | D_r] = rank D_l + rank D_r under the rank tolerance.
/// Both defects are computed in the Xi_j^{1/2} similarity frame so ranges are
/// compared in one geometry.
pub fn is_regular(fam: &NCharFn) -> Result<RegularityReport> {
    let curve = &fam.curve;
    let m = curve.m;
    let n = fam.n;
    let mut nodes = Vec::new();
    let mut regular = true;
    // precompute Xi^{1/2}, Xi^{-1/2}
    let half: Vec<Vec<CMat>> = fam.weights.iter().map(|w| w.power_samples(curve, 0.5)).collect();
    let ihalf: Vec<Vec<CMat>> = fam.weights.iter().map(|w| w.power_samples(curve, -0.5)).collect();
    // defects are bounded by I, so ranks use an absolute singular-value cutoff;
    // sqrt because the square roots of defect eigenvalues are compared
    let cut = RANK_TOL.sqrt();
    let abs_rank = |m: &CMat| m.clone().singular_values().iter().filter(|&&s| s > cut).count();
    for j in 2..n {
        let top = fam.theta_ij_samples(n, j)?; // Theta_{nj}
        let bot = fam.theta_ij_samples(j, 1)?; // Theta_{j1}
        for idx in 0..m {
            let th_top = &half[n - 1][idx] * &top[idx] * &ihalf[j - 1][idx];
            let th_bot = &half[j - 1][idx] * &bot[idx] * &ihalf[0][idx];
            let d = fam.dims[j - 1];
            let dl = herm_sqrt(&(CMat::identity(d, d) - th_top.adjoint() * &th_top));
            let dr = herm_sqrt(&(CMat::identity(d, d) - &th_bot * th_bot.adjoint()));
            let rl = abs_rank(&dl);
            let rr = abs_rank(&dr);
            let mut joint = CMat::zeros(d, 2 * d);
            joint.columns_mut(0, d).copy_from(&dl);
            joint.columns_mut(d, d).copy_from(&dr);
            let rj = abs_rank(&joint);
            // flag nodes whose defect spectrum sits near the rank cut
            let edge = {
                let sv_l = dl.singular_values();
                let sv_r = dr.singular_values();
                let near = |s: f64| s > cut / 10.0 && s < cut * 10.0;
                sv_l.iter().any(|&s| near(s)) || sv_r.iter().any(|&s| near(s))
            };
            let ok = rj == rl + rr;
            if !ok {
                regular = false;
            }
            if !ok || edge {
                nodes.push(RegularityNode {
                    node: idx,
                    middle: j,
                    rank_left_defect: rl,
                    rank_right_defect: rr,
                    rank_joint: rj,
                    edge_flag: edge,
                });
            }
        }
    }
    Ok(RegularityReport { regular, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_curve;
    use crate::fixtures::paper_theta;
    use crate::linalg::c;

    fn disk_z(curve: &Curve) -> WeightedSchurFunction {
        WeightedSchurFunction::new(
            FunctionField::scalar_monomial(1),
            Weight::identity(1),
            Weight::identity(1),
            curve.clone(),
        )
        .unwrap()
    }

    #[test]
    fn membership_basics() {
        let curve = make_curve(cr(0.0), 64).unwrap();
        let r = disk_z(&curve).is_weighted_schur();
        assert!(r.ok && r.margin.abs() < 1e-12);

        let big = WeightedSchurFunction::new(
            FunctionField::constant(CMat::from_element(1, 1, cr(2.0))),
            Weight::identity(1),
            Weight::identity(1),
            curve.clone(),
        )
        .unwrap();
        let r = big.is_weighted_schur();
        assert!(!r.ok && (r.margin + 3.0).abs() < 1e-12);
    }

    #[test]
    fn theta_is_schur_with_unimodular_boundary() {
        let curve = make_curve(cr(0.2), 1024).unwrap();
        let th = paper_theta(&curve, 64, 1e-10).unwrap();
        let r = th.is_weighted_schur();
        assert!(r.ok, "margin {} neg {}", r.margin, r.neg_mass);
        // |theta| = 1 on C within fit accuracy
        for v in th.theta_plus.eval_grid(&curve).iter().step_by(41) {
            assert!((v[(0, 0)].norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn dual_symbol_on_disk_and_curve() {
        let curve = make_curve(cr(0.0), 64).unwrap();
        let th = disk_z(&curve);
        let tm = th.theta_minus(8, 1e-10).unwrap();
        assert!((tm.coeff(-1)[(0, 0)] - cr(1.0)).norm() < 1e-12);
        // constant L: dual is L^*
        let l = CMat::from_row_slice(1, 2, &[c(0.3, 0.1), c(0.0, -0.2)]);
        let cf = WeightedSchurFunction::new(
            FunctionField::constant(l.clone()),
            Weight::identity(2),
            Weight::identity(1),
            curve.clone(),
        )
        .unwrap();
        let tm = cf.theta_minus(4, 1e-10).unwrap();
        assert!(crate::linalg::frob(&(tm.coeff(0) - l.adjoint())) < 1e-12);
        // curve case: Theta^- equals conj(theta) pointwise on the grid
        let curve2 = make_curve(cr(0.2), 512).unwrap();
        let th2 = paper_theta(&curve2, 48, 1e-9).unwrap();
        let samples = th2.theta_minus_samples();
        for j in (0..curve2.m).step_by(29) {
            let want = crate::fixtures::theta_at(cr(0.2), curve2.zeta[j]).conj();
            assert!((samples[j][(0, 0)] - want).norm() < 1e-8);
        }
    }

    #[test]
    fn dual_split_disk_blaschke() {
        // Theta+ = (z + 1/2)/(1 + z/2) on the disk: Theta+_- part of the dual
        // is the constant Theta+(0)^* = 1/2
        let curve = make_curve(cr(0.0), 256).unwrap();
        let samples: Vec<CMat> = curve
            .z
            .iter()
            .map(|&z| CMat::from_element(1, 1, (z + cr(0.5)) / (cr(1.0) + z * cr(0.5))))
            .collect();
        let (f, resid) = fit_field(&curve, &samples, 44).unwrap();
        assert!(resid < 1e-10);
        let th = WeightedSchurFunction::new(f, Weight::identity(1), Weight::identity(1), curve)
            .unwrap();
        let (plus, minus) = th.theta_minus_split(44, 1e-9).unwrap();
        assert!((plus.coeff(0)[(0, 0)] - cr(0.5)).norm() < 1e-9);
        for k in 1..=44i64 {
            assert!(plus.coeff(k)[(0, 0)].norm() < 1e-9, "analytic tail at {k}");
        }
        assert!((minus.coeff(-1)[(0, 0)] - cr(0.75)).norm() < 1e-9);
        // complementarity
        let tm = th.theta_minus(44, 1e-9).unwrap();
        let back = plus.add(&minus);
        for k in tm.coeff_indices() {
            assert!(crate::linalg::frob(&(back.coeff(k) - tm.coeff(k))) < 1e-14);
        }
    }

    #[test]
    fn family_composition_and_cocycle() {
        let curve = make_curve(cr(0.2), 512).unwrap();
        let th = paper_theta(&curve, 64, 1e-9).unwrap();
        let fam = NCharFn::from_factors(vec![th.clone(), th.clone(), th.clone(), th]).unwrap();
        assert_eq!(fam.n, 5);
        // Theta_ij = theta^{i-j}
        let t31 = fam.theta_ij_samples(3, 1).unwrap();
        for j in (0..curve.m).step_by(67) {
            assert!((t31[j][(0, 0)] - curve.z[j] * curve.z[j]).norm() < 1e-8);
        }
        assert!(fam.cocycle_residual().unwrap() < 1e-8);
        // every derived Theta_ij is Schur
        for i in 1..=fam.n {
            for j in 1..=i {
                let f = fam.theta_ij(i, j).unwrap();
                let s = WeightedSchurFunction::new(
                    f,
                    fam.weights[j - 1].clone(),
                    fam.weights[i - 1].clone(),
                    curve.clone(),
                )
                .unwrap();
                assert!(s.is_weighted_schur().ok, "Theta_{i}{j}");
            }
        }
    }

    #[test]
    fn weight_mismatch_rejected() {
        let curve = make_curve(cr(0.0), 64).unwrap();
        let a = disk_z(&curve);
        let b = WeightedSchurFunction::new(
            FunctionField::scalar_monomial(1),
            Weight::constant_scalar(2.0),
            Weight::constant_scalar(2.0),
            curve.clone(),
        )
        .unwrap();
        assert!(NCharFn::from_factors(vec![a, b]).is_err());
    }

    #[test]
    fn regularity_scalar_cases() {
        let curve = make_curve(cr(0.0), 64).unwrap();
        let z = disk_z(&curve);
        let half = WeightedSchurFunction::new(
            FunctionField::constant(CMat::from_element(1, 1, cr(0.5))),
            Weight::identity(1),
            Weight::identity(1),
            curve.clone(),
        )
        .unwrap();
        // inner * inner: regular
        let fam = NCharFn::from_factors(vec![z.clone(), z.clone()]).unwrap();
        assert!(is_regular(&fam).unwrap().regular);
        // (1/2)(1/2): both defects full -> not regular
        let fam = NCharFn::from_factors(vec![half.clone(), half.clone()]).unwrap();
        assert!(!is_regular(&fam).unwrap().regular);
        // inner * (1/2): one defect vanishes -> regular
        let fam = NCharFn::from_factors(vec![half, z]).unwrap();
        assert!(is_regular(&fam).unwrap().regular);
    }
}
