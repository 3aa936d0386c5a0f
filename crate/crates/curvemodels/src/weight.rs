//! Operator-valued weights on the curve: bounded, boundedly invertible,
//! positive matrix functions defining weighted L2 norms.

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::field::FunctionField;
use crate::linalg::{cr, herm_eigen, herm_power, CMat};

#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    pub field: FunctionField,
}

impl Weight {
    pub fn new(field: FunctionField) -> Result<Self> {
        if field.rows != field.cols {
            return Err(Error::Schema(format!(
                "weight must be square, got {}x{}",
                field.rows, field.cols
            )));
        }
        Ok(Weight { field })
    }

    pub fn identity(dim: usize) -> Self {
        Weight { field: FunctionField::identity(dim) }
    }

    pub fn constant_scalar(v: f64) -> Self {
        Weight { field: FunctionField::constant(CMat::from_element(1, 1, cr(v))) }
    }

    pub fn constant(m: CMat) -> Self {
        Weight { field: FunctionField::constant(m) }
    }

    pub fn dim(&self) -> usize {
        self.field.rows
    }

    pub fn is_identity(&self) -> bool {
        let id = CMat::identity(self.dim(), self.dim());
        self.field
            .coeff_indices()
            .all(|k| if k == 0 { (self.field.coeff(0) - &id).iter().all(|x| x.norm() < 1e-14) } else { self.field.coeff(k).iter().all(|x| x.norm() < 1e-14) })
    }

    pub fn eval_grid(&self, curve: &Curve) -> Vec<CMat> {
        self.field.eval_grid(curve)
    }

    /// Check node-wise Hermitianity and eigenvalue bounds; returns the
    /// condition bound kappa (largest eigenvalue over smallest).
    pub fn validate(&self, curve: &Curve) -> Result<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for m in self.eval_grid(curve) {
            let herm_defect = crate::linalg::frob(&(&m - m.adjoint()));
            if herm_defect > 1e-9 {
                return Err(Error::Numerical(format!(
                    "weight not Hermitian on the grid (defect {herm_defect:.2e})"
                )));
            }
            let (vals, _) = herm_eigen(&m);
            lo = lo.min(*vals.last().unwrap());
            hi = hi.max(vals[0]);
        }
        if lo <= 1e-10 {
            return Err(Error::Numerical(format!(
                "weight not boundedly invertible: min eigenvalue {lo:.2e}"
            )));
        }
        Ok(hi / lo)
    }

    /// Node-wise Hermitian powers Xi^p (p = 0.5 and -0.5 are the common cases).
    pub fn power_samples(&self, curve: &Curve, p: f64) -> Vec<CMat> {
        self.eval_grid(curve)
            .iter()
            .map(|m| herm_power(m, p, 1e-14))
            .collect()
    }

    pub fn approx_eq(&self, other: &Weight, curve: &Curve, tol: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let a = self.eval_grid(curve);
        let b = other.eval_grid(curve);
        a.iter()
            .zip(&b)
            .all(|(x, y)| crate::linalg::frob(&(x - y)) <= tol)
    }

    /// Xi~(zeta) = Xi(conj zeta)^* as a weight on the conjugate curve.
    pub fn tilde(&self) -> Weight {
        Weight { field: self.field.tilde() }
    }

    /// Node-wise inverse, refit as a field on the curve.
    pub fn inverse(&self, curve: &Curve) -> Result<Weight> {
        let inv_samples = self.power_samples(curve, -1.0);
        let order = (self.field.order * 2 + 4).min(crate::config::MAX_ORDER).min((curve.m - 4) / 4);
        let (f, resid) = crate::field::fit_field(curve, &inv_samples, order)?;
        if resid > 1e-8 {
            return Err(Error::Numerical(format!(
                "weight inverse not representable at order {order}: residual {resid:.2e}"
            )));
        }
        Ok(Weight { field: f })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_curve;
    use crate::linalg::c;

    #[test]
    fn identity_weight_validates() {
        let curve = make_curve(cr(0.2), 64).unwrap();
        let w = Weight::identity(2);
        assert!((w.validate(&curve).unwrap() - 1.0).abs() < 1e-12);
        assert!(w.is_identity());
    }

    #[test]
    fn curved_weight_bounds_and_inverse() {
        // Hermitian on the curve means Xi(zeta) = Xi(zeta)^* at the nodes; note
        // conj(zeta) is not zeta^{-1} off the unit circle, so Hermitian weights
        // are built from samples and fitted. conj(zeta) continues into G- only
        // up to a branch point at -1/(4 eps), so non-constant Hermitian weights
        // are representable only while that point stays well away from C;
        // keep eps moderate here.
        let curve = make_curve(cr(0.1), 256).unwrap();
        let a = c(0.25, 0.1);
        let samples: Vec<CMat> = curve
            .zeta
            .iter()
            .map(|&w| CMat::from_element(1, 1, cr(2.0 + 2.0 * (a * w).re)))
            .collect();
        let (f, resid) = crate::field::fit_field(&curve, &samples, 48).unwrap();
        assert!(resid < 1e-10, "weight fit residual {resid:.2e}");
        let w = Weight::new(f).unwrap();
        let kappa = w.validate(&curve).unwrap();
        assert!(kappa > 1.0 && kappa < 10.0);
        let wi = w.inverse(&curve).unwrap();
        let a = w.eval_grid(&curve);
        let b = wi.eval_grid(&curve);
        for j in 0..curve.m {
            assert!((&a[j] * &b[j] - CMat::identity(1, 1)).iter().all(|x| x.norm() < 1e-9));
        }
    }
}
