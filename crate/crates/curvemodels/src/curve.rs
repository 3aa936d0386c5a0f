//! The boundary curve C = phi(unit circle), phi(z) = z + eps*z^2, |eps| < 1/2,
//! with its quadrature grid. phi is conformal on the closed disk, phi(0) = 0,
//! so 0 always lies in the inner domain G+ and zeta^(-k) is analytic on the
//! outer domain G- for k >= 1.

use crate::error::{Error, Result};
use crate::linalg::{c, cr, C64};
use num_complex::Complex;

#[derive(Debug, Clone)]
pub struct Curve {
    pub epsilon: C64,
    /// Grid size M (even). Node m sits at z_m = exp(2 pi i m / M).
    pub m: usize,
    /// Unit-circle pullback nodes z_m.
    pub z: Vec<C64>,
    /// Curve nodes zeta_m = phi(z_m).
    pub zeta: Vec<C64>,
    /// Derivative samples phi'(z_m) = 1 + 2 eps z_m.
    pub dphi: Vec<C64>,
    /// Arclength density |phi'(z_m)| against normalized angle dt/2pi.
    pub arc: Vec<f64>,
}

pub fn make_curve(epsilon: C64, m: usize) -> Result<Curve> {
    if epsilon.norm() >= 0.5 {
        return Err(Error::Schema(format!(
            "|eps| = {} >= 1/2: phi loses conformality on the closed disk",
            epsilon.norm()
        )));
    }
    if m < 8 || m % 2 != 0 {
        return Err(Error::Schema(format!("grid size {m} must be even and >= 8")));
    }
    if m > crate::config::MAX_GRID {
        return Err(Error::Budget(format!("grid size {m} exceeds {}", crate::config::MAX_GRID)));
    }
    let mut z = Vec::with_capacity(m);
    let mut zeta = Vec::with_capacity(m);
    let mut dphi = Vec::with_capacity(m);
    let mut arc = Vec::with_capacity(m);
    for j in 0..m {
        let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
        let zj = Complex::from_polar(1.0, t);
        z.push(zj);
        zeta.push(zj + epsilon * zj * zj);
        let d = cr(1.0) + c(2.0, 0.0) * epsilon * zj;
        dphi.push(d);
        arc.push(d.norm());
    }
    Ok(Curve { epsilon, m, z, zeta, dphi, arc })
}

impl Curve {
    pub fn phi(&self, z: C64) -> C64 {
        z + self.epsilon * z * z
    }

    /// Same eps, doubled grid (for quadrature convergence checks).
    pub fn doubled(&self) -> Result<Curve> {
        make_curve(self.epsilon, self.m * 2)
    }

    /// Curve traced by complex conjugates (the conjugate curve): eps -> conj(eps).
    pub fn conjugate(&self) -> Curve {
        make_curve(self.epsilon.conj(), self.m).expect("conjugate curve parameters stay valid")
    }

    /// Whether `w` lies in the inner domain G+: number of preimages of w under
    /// phi inside the open unit disk (0 outside, 1 inside).
    pub fn contains_inner(&self, w: C64) -> bool {
        let eps = self.epsilon;
        if eps.norm() < 1e-14 {
            return w.norm() < 1.0;
        }
        // roots of eps z^2 + z - w = 0
        let disc = (cr(1.0) + cr(4.0) * eps * w).sqrt();
        let r1 = (-cr(1.0) + disc) / (cr(2.0) * eps);
        let r2 = (-cr(1.0) - disc) / (cr(2.0) * eps);
        let mut count = 0;
        if r1.norm() < 1.0 {
            count += 1;
        }
        if r2.norm() < 1.0 {
            count += 1;
        }
        count == 1
    }

    pub fn same_geometry(&self, other: &Curve) -> bool {
        (self.epsilon - other.epsilon).norm() < 1e-14 && self.m == other.m
    }
}
