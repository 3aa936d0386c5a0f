//! Grid realization of the Riesz (Smirnov) projections P+/P- on L2(C).
//!
//! In the pullback coordinate z the Cauchy kernel of the curve splits exactly:
//!     phi'(z) / (phi(z) - phi(z0)) = 1/(z - z0) + eps/(1 + eps(z + z0)),
//! so P+ applied to grid samples is the circle Fourier split plus a rank-style
//! correction: the negative-frequency part of the pullback, evaluated at the
//! exterior point a0 = -1/eps - z0 (|a0| >= 1/|eps| - 1 > 1). This makes P+/P-
//! exact on Laurent fields zeta^k resolved by the grid, and they degenerate to
//! the orthogonal FFT split at eps = 0.

use crate::curve::Curve;
use crate::linalg::{cr, C64, ZERO};
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct FftCtx {
    pub m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl FftCtx {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftCtx { m, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    /// Pullback Fourier coefficients: index k in 0..M, where k >= M/2 stands
    /// for the negative frequency k - M.
    pub fn coeffs(&self, samples: &[C64]) -> Vec<C64> {
        let mut buf = samples.to_vec();
        self.fwd.process(&mut buf);
        let scale = cr(1.0 / self.m as f64);
        for v in &mut buf {
            *v *= scale;
        }
        buf
    }

    /// Inverse of [`coeffs`].
    pub fn samples(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut buf = coeffs.to_vec();
        self.inv.process(&mut buf);
        buf
    }
}

/// Shared context for repeated Riesz applications over one curve.
pub struct RieszCtx {
    pub curve: Curve,
    fft: FftCtx,
    /// 1/a0 per node: -eps/(1 + eps z_m); empty at eps = 0.
    a_inv: Vec<C64>,
}

impl RieszCtx {
    pub fn new(curve: &Curve) -> Self {
        let eps = curve.epsilon;
        let a_inv = if eps.norm() < 1e-14 {
            vec![]
        } else {
            curve.z.iter().map(|&z| -eps / (cr(1.0) + eps * z)).collect()
        };
        RieszCtx { curve: curve.clone(), fft: FftCtx::new(curve.m), a_inv }
    }

    pub fn m(&self) -> usize {
        self.curve.m
    }

    /// P+ on grid samples of a scalar function on C.
    pub fn plus(&self, samples: &[C64]) -> Vec<C64> {
        let m = self.curve.m;
        let half = m / 2;
        let hat = self.fft.coeffs(samples);
        let mut pos = hat.clone();
        for item in pos.iter_mut().take(m).skip(half) {
            *item = ZERO;
        }
        let mut out = self.fft.samples(&pos);
        if !self.a_inv.is_empty() {
            for j in 0..m {
                let x = self.a_inv[j];
                // sum_{k=1..half} hat[m-k] * x^k, Horner
                let mut acc = hat[m - half];
                for k in (1..half).rev() {
                    acc = acc * x + hat[m - k];
                }
                acc *= x;
                out[j] -= acc;
            }
        }
        out
    }

    pub fn minus(&self, samples: &[C64]) -> Vec<C64> {
        let p = self.plus(samples);
        samples.iter().zip(p).map(|(&s, p)| s - p).collect()
    }
}
