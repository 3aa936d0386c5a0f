//! Szego outer factorization of a scalar weight: chi analytic with analytic
//! inverse and |chi|^2 = Xi on the curve. Computed in the pullback coordinate:
//! exponentiate the analytic completion of (1/2) log Xi.

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::field::{fit_field, FunctionField};
use crate::grid::FftCtx;
use crate::linalg::{cr, CMat, C64};
use crate::weight::Weight;

/// Grid samples of the outer factor (cheap, no fit).
pub fn outer_factor_scalar_samples(xi: &Weight, curve: &Curve) -> Result<Vec<C64>> {
    if xi.dim() != 1 {
        return Err(Error::Incompatible("outer factorization is scalar-only".into()));
    }
    let vals = xi.eval_grid(curve);
    let mut pos = Vec::with_capacity(curve.m);
    for v in &vals {
        let x = v[(0, 0)];
        if x.im.abs() > 1e-8 {
            return Err(Error::Numerical(format!(
                "weight not real on the grid: sample {x}"
            )));
        }
        pos.push(x.re);
    }
    outer_from_grid_samples(curve, &pos)
}

/// Outer factor straight from positive grid samples, without a Weight wrapper.
pub fn outer_from_grid_samples(curve: &Curve, vals: &[f64]) -> Result<Vec<C64>> {
    let m = curve.m;
    let mut logs = Vec::with_capacity(m);
    for &x in vals {
        if x <= 1e-12 {
            return Err(Error::Numerical(format!(
                "weight not positive on the grid: sample {x}"
            )));
        }
        logs.push(cr(x.ln()));
    }
    let fft = FftCtx::new(m);
    let lhat = fft.coeffs(&logs);
    // analytic completion g with Re g = log Xi on the grid:
    // g = l0 + 2 sum_{0<k<M/2} l_k z^k + l_{M/2} z^{M/2}
    let half = m / 2;
    let mut ghat = vec![crate::linalg::ZERO; m];
    ghat[0] = lhat[0];
    for k in 1..half {
        ghat[k] = lhat[k] * cr(2.0);
    }
    ghat[half] = lhat[half];
    let g = fft.samples(&ghat);
    Ok(g.iter().map(|&gj| (gj * cr(0.5)).exp()).collect())
}

/// Outer factor as a fitted analytic field; negative coefficients are checked
/// to vanish and dropped.
pub fn outer_factor_scalar(xi: &Weight, curve: &Curve) -> Result<FunctionField> {
    let samples = outer_factor_scalar_samples(xi, curve)?;
    let mats: Vec<CMat> = samples.iter().map(|&s| CMat::from_element(1, 1, s)).collect();
    let order = ((curve.m - 4) / 4).min(64);
    let (f, resid) = fit_field(curve, &mats, order)?;
    if resid > 1e-8 {
        return Err(Error::Numerical(format!(
            "outer factor not representable: fit residual {resid:.2e}"
        )));
    }
    let neg = f.neg_mass();
    if neg > 1e-7 {
        return Err(Error::Numerical(format!(
            "outer factor has co-analytic mass {neg:.2e}"
        )));
    }
    let (plus, _) = f.riesz_split();
    Ok(plus.trimmed())
}
