//! Functional n-models over the curve: construction from a factor family,
//! recovery of the family, the projection algebra, the compressed model
//! system, and the normal residual.
//!
//! Representation. The model space is realized in half-weighted grid
//! coordinates: a function f in the k-th weighted L2 space becomes the sample
//! vector (arc_m/M)^{1/2} Xi_k^{1/2}(zeta_m) f(zeta_m), so every weighted
//! inner product is the plain l2 pairing (Gram = identity) and all weight
//! geometry is folded into the embeddings. A direct coefficient-space
//! realization with an explicit Gram matrix is catastrophically
//! ill-conditioned at useful orders; the grid realization keeps every
//! node-local operation exact.
//!
//! Ambient space: C^{M * dtot}, node-major, where dtot stacks one block of
//! rank r_k per defect (k = 1..n-1, rank-truncated) and one block of size d_n.
//! The local isometries pihat_k(m) are built by the downward defect
//! completion
//!     pihat_n = embed(I),   pihat_k = pihat_{k+1} That_k + nu_k Sd_k,
//! where That_k = Xi_{k+1}^{1/2} Theta_{k+1,k} Xi_k^{-1/2} is the weighted
//! symbol and Sd_k the truncated square root of I - That_k^* That_k. By
//! construction pihat_i^* pihat_j equals the weighted product symbol exactly
//! at every node.
//!
//! Band policy: the grid Riesz projection is exact on Laurent modes resolved
//! by the grid, but modes near the band edge |k| ~ M/2 alias. All residual
//! measurements therefore probe the model with core generators
//! pi_k(zeta^j e_a), |j| <= M/5; this is a property of the discretization,
//! not of the identities being checked.

use crate::config::{RANK_TOL, TRUNC_FAIL};
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::field::fit_field;
use crate::grid::RieszCtx;
use crate::linalg::{cr, frob, herm_eigen, opnorm, range_basis, CMat, CVec};
use crate::schur::{NCharFn, WeightedSchurFunction};

#[derive(Debug, Clone)]
pub struct NModel {
    pub fam: NCharFn,
    pub curve: Curve,
    pub n: usize,
    pub dims: Vec<usize>,
    /// Truncated defect ranks r_1..r_{n-1}.
    pub ranks: Vec<usize>,
    /// Per-node ambient dimension d_n + sum r_k.
    pub dtot: usize,
    /// Largest discarded defect eigenvalue over all nodes and factors.
    pub trunc_loss: f64,
    /// pihat[k][m]: dtot x d_{k+1} local isometry (k is 0-based space index).
    pihat: Vec<Vec<CMat>>,
    /// Xi_k^{1/2} and Xi_k^{-1/2} per space per node.
    half: Vec<Vec<CMat>>,
    ihalf: Vec<Vec<CMat>>,
    /// sqrt(arc_m / M).
    sqw: Vec<f64>,
    /// Scaled grid Riesz projection S P+ S^{-1} (M x M).
    ptil: CMat,
}

#[derive(Debug, Clone)]
pub struct ModelProjection {
    pub label: String,
    pub mat: CMat,
}

impl ModelProjection {
    /// ||(P^2 - P) p|| / ||p|| over probes (full-space operator norms would
    /// pick up aliased band-edge modes outside the represented model space).
    pub fn idempotency_residual(&self, probes: &[CVec]) -> f64 {
        let p2 = &self.mat * &self.mat;
        worst_action(&(p2 - &self.mat), probes)
    }
}

#[derive(Debug, Clone)]
pub struct Subspace {
    /// Orthonormal columns.
    pub basis: CMat,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Compressed model system of Theta_{n1} in the model-space basis.
#[derive(Debug, Clone)]
pub struct ModelSystem {
    pub t: CMat,
    pub m: CMat,
    pub n: CMat,
    /// Ambient orthonormal basis of the model space K_Theta.
    pub basis: CMat,
}

#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub commute_weight: f64,
    pub weight_lower_bound: f64,
    pub intertwine: f64,
    pub hankel_vanishes: f64,
    pub cocycle: f64,
    pub span_full: bool,
    pub normal_intertwine: f64,
}

impl AxiomReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.commute_weight <= tol
            && self.weight_lower_bound > 0.0
            && self.intertwine <= tol
            && self.hankel_vanishes <= tol
            && self.cocycle <= tol
            && self.span_full
            && self.normal_intertwine <= tol
    }
}

pub fn build_model(fam: &NCharFn) -> Result<NModel> {
    let curve = fam.curve.clone();
    let m = curve.m;
    let n = fam.n;
    let dims = fam.dims.clone();
    let half: Vec<Vec<CMat>> = fam.weights.iter().map(|w| w.power_samples(&curve, 0.5)).collect();
    let ihalf: Vec<Vec<CMat>> = fam.weights.iter().map(|w| w.power_samples(&curve, -0.5)).collect();
    let sqw: Vec<f64> = curve.arc.iter().map(|&a| (a / m as f64).sqrt()).collect();

    // weighted adjacent symbols and their defect data
    let mut that: Vec<Vec<CMat>> = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let fs = fam.factors[k].eval_grid(&curve);
        that.push((0..m).map(|j| &half[k + 1][j] * &fs[j] * &ihalf[k][j]).collect());
    }
    let mut ranks = vec![0usize; n - 1];
    let mut eigs: Vec<Vec<(Vec<f64>, CMat)>> = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let d = dims[k];
        let mut per_node = Vec::with_capacity(m);
        for j in 0..m {
            let b = CMat::identity(d, d) - that[k][j].adjoint() * &that[k][j];
            let (vals, vecs) = herm_eigen(&b);
            ranks[k] = ranks[k].max(vals.iter().filter(|&&v| v > RANK_TOL).count());
            per_node.push((vals, vecs));
        }
        eigs.push(per_node);
    }
    let mut trunc_loss = 0.0f64;
    for k in 0..n - 1 {
        for j in 0..m {
            for &v in eigs[k][j].0.iter().skip(ranks[k]) {
                trunc_loss = trunc_loss.max(v.abs());
            }
        }
    }
    if trunc_loss > TRUNC_FAIL {
        return Err(Error::Numerical(format!(
            "defect rank truncation loses {trunc_loss:.3e} > {TRUNC_FAIL:.1e}"
        )));
    }

    // block offsets: defect blocks 1..n-1, then the n-th space
    let mut off = vec![0usize; n];
    for k in 1..n {
        off[k] = off[k - 1] + if k <= n - 1 { ranks[k - 1] } else { 0 };
    }
    let dtot: usize = ranks.iter().sum::<usize>() + dims[n - 1];
    let off_n = dtot - dims[n - 1];

    // downward recursion for the local isometries
    let mut pihat: Vec<Vec<CMat>> = vec![Vec::new(); n];
    pihat[n - 1] = (0..m)
        .map(|_| {
            let mut e = CMat::zeros(dtot, dims[n - 1]);
            for a in 0..dims[n - 1] {
                e[(off_n + a, a)] = cr(1.0);
            }
            e
        })
        .collect();
    for k in (0..n - 1).rev() {
        let mut cols = Vec::with_capacity(m);
        for j in 0..m {
            let mut p = &pihat[k + 1][j] * &that[k][j];
            let (vals, vecs) = &eigs[k][j];
            for i in 0..ranks[k] {
                let s = vals[i].max(0.0).sqrt();
                for a in 0..dims[k] {
                    p[(off[k] + i, a)] += cr(s) * vecs[(a, i)].conj();
                }
            }
            cols.push(p);
        }
        pihat[k] = cols;
    }

    // scaled grid Riesz projection as a dense matrix
    let ctx = RieszCtx::new(&curve);
    let mut ptil = CMat::zeros(m, m);
    let mut e = vec![crate::linalg::ZERO; m];
    for l in 0..m {
        e[l] = cr(1.0);
        let col = ctx.plus(&e);
        e[l] = crate::linalg::ZERO;
        for j in 0..m {
            ptil[(j, l)] = col[j] * cr(sqw[j] / sqw[l]);
        }
    }

    Ok(NModel { fam: fam.clone(), curve, n, dims, ranks, dtot, trunc_loss, pihat, half, ihalf, sqw, ptil })
}

impl NModel {
    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.curve.m * self.dtot
    }

    fn d(&self, i: usize) -> usize {
        self.dims[i - 1]
    }

    /// pi_i as a matrix from the scaled sample space C^{M d_i} (node-major)
    /// into the ambient space.
    pub fn pi_mat(&self, i: usize) -> CMat {
        let m = self.curve.m;
        let d = self.d(i);
        let mut a = CMat::zeros(self.dim(), m * d);
        for j in 0..m {
            let blk = &self.pihat[i - 1][j] * &self.half[i - 1][j];
            for r in 0..self.dtot {
                for c_ in 0..d {
                    a[(j * self.dtot + r, j * d + c_)] = blk[(r, c_)];
                }
            }
        }
        a
    }

    /// pi_i^dag: the adjoint against the weighted sample geometry,
    /// Xi^{-1/2} pihat^* per node.
    pub fn pidag_mat(&self, i: usize) -> CMat {
        let m = self.curve.m;
        let d = self.d(i);
        let mut a = CMat::zeros(m * d, self.dim());
        for j in 0..m {
            let blk = &self.ihalf[i - 1][j] * self.pihat[i - 1][j].adjoint();
            for r in 0..d {
                for c_ in 0..self.dtot {
                    a[(j * d + r, j * self.dtot + c_)] = blk[(r, c_)];
                }
            }
        }
        a
    }

    /// The normal operator: block multiplication by zeta.
    pub fn u_mat(&self) -> CMat {
        let mut u = CMat::zeros(self.dim(), self.dim());
        for j in 0..self.curve.m {
            for r in 0..self.dtot {
                u[(j * self.dtot + r, j * self.dtot + r)] = self.curve.zeta[j];
            }
        }
        u
    }

    /// Multiplication by zeta on a d-dim scaled sample space.
    pub fn z_mat(&self, d: usize) -> CMat {
        let m = self.curve.m;
        let mut z = CMat::zeros(m * d, m * d);
        for j in 0..m {
            for a in 0..d {
                z[(j * d + a, j * d + a)] = self.curve.zeta[j];
            }
        }
        z
    }

    /// Lift a node-indexed M x M operator to the d-dim sample space.
    fn lift(&self, op: &CMat, d: usize) -> CMat {
        let m = self.curve.m;
        let mut a = CMat::zeros(m * d, m * d);
        for j in 0..m {
            for l in 0..m {
                let v = op[(j, l)];
                if v.norm() == 0.0 {
                    continue;
                }
                for b in 0..d {
                    a[(j * d + b, l * d + b)] = v;
                }
            }
        }
        a
    }

    pub fn p_plus_domain(&self, d: usize) -> CMat {
        self.lift(&self.ptil, d)
    }

    pub fn p_minus_domain(&self, d: usize) -> CMat {
        let m = self.curve.m;
        CMat::identity(m * d, m * d) - self.p_plus_domain(d)
    }

    /// q_{i+} or q_{i-}.
    pub fn q_projection(&self, i: usize, plus: bool) -> ModelProjection {
        let d = self.d(i);
        let p = if plus { self.p_plus_domain(d) } else { self.p_minus_domain(d) };
        ModelProjection {
            label: format!("q_{}{}", i, if plus { "+" } else { "-" }),
            mat: self.pi_mat(i) * p * self.pidag_mat(i),
        }
    }

    /// Orthoprojection onto Ran pi_j v ... v Ran pi_i (node-local).
    pub fn p_orth(&self, i: usize, j: usize) -> ModelProjection {
        let m = self.curve.m;
        let mut a = CMat::zeros(self.dim(), self.dim());
        for nd in 0..m {
            let cols: usize = (j..=i).map(|k| self.d(k)).sum();
            let mut stack = CMat::zeros(self.dtot, cols);
            let mut c0 = 0;
            for k in j..=i {
                stack.columns_mut(c0, self.d(k)).copy_from(&self.pihat[k - 1][nd]);
                c0 += self.d(k);
            }
            let q = range_basis(&stack, 1e-12);
            let p = &q * q.adjoint();
            for r in 0..self.dtot {
                for c_ in 0..self.dtot {
                    a[(nd * self.dtot + r, nd * self.dtot + c_)] = p[(r, c_)];
                }
            }
        }
        ModelProjection { label: format!("P_span({i},{j})"), mat: a }
    }

    /// P_(ij) = P_span (I - q_{j+})(I - q_{i-}).
    pub fn p_pair(&self, i: usize, j: usize) -> ModelProjection {
        let id = CMat::identity(self.dim(), self.dim());
        let qjp = self.q_projection(j, true).mat;
        let qim = self.q_projection(i, false).mat;
        ModelProjection {
            label: format!("P_({i}{j})"),
            mat: self.p_orth(i, j).mat * (&id - qjp) * (&id - qim),
        }
    }

    /// Bracket projection over an ascending chain, via
    /// I - P = prod over adjacent pairs of (I - P_(m_{t+1} m_t)).
    pub fn p_bracket(&self, chain: &[usize]) -> Result<ModelProjection> {
        if chain.len() < 2 || chain.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Schema(format!("bad chain {chain:?}")));
        }
        let id = CMat::identity(self.dim(), self.dim());
        let mut q = id.clone();
        for w in chain.windows(2) {
            q = q * (&id - self.p_pair(w[1], w[0]).mat);
        }
        Ok(ModelProjection { label: format!("P_[{chain:?}]"), mat: id - q })
    }

    /// Scaled sample vector of a function given by node samples.
    pub fn domain_vector(&self, samples: &[CVec]) -> CVec {
        let m = self.curve.m;
        let d = samples[0].nrows();
        let mut v = CVec::zeros(m * d);
        for j in 0..m {
            for a in 0..d {
                v[j * d + a] = samples[j][a] * cr(self.sqw[j]);
            }
        }
        v
    }

    /// Scaled sample vector of zeta^p e_a in the i-th space.
    pub fn domain_mode(&self, i: usize, p: i64, a: usize) -> CVec {
        let m = self.curve.m;
        let d = self.d(i);
        let mut v = CVec::zeros(m * d);
        for j in 0..m {
            v[j * d + a] = self.curve.zeta[j].powi(p as i32) * cr(self.sqw[j]);
        }
        v
    }

    /// Ambient probes pi_k(zeta^p e_a) over the band core |p| <= M/5.
    pub fn core_probes(&self) -> Vec<CVec> {
        let kc = (self.curve.m / 5) as i64;
        let ps = [-kc, -kc / 2, -5, -2, -1, 0, 1, 2, 5, kc / 2, kc];
        let mut out = Vec::new();
        for k in 1..=self.n {
            let pi = self.pi_mat(k);
            for &p in &ps {
                if p.unsigned_abs() as i64 > kc {
                    continue;
                }
                for a in 0..self.d(k) {
                    out.push(&pi * self.domain_mode(k, p, a));
                }
            }
        }
        out
    }

    /// Recover the factor family: adjacent symbols pihat_{k+1}^* pihat_k in
    /// the original weight frame, refit to coefficients.
    pub fn model_charfn(&self) -> Result<NCharFn> {
        let m = self.curve.m;
        let mut factors = Vec::with_capacity(self.n - 1);
        for k in 0..self.n - 1 {
            let samples: Vec<CMat> = (0..m)
                .map(|j| {
                    &self.ihalf[k + 1][j]
                        * self.pihat[k + 1][j].adjoint()
                        * &self.pihat[k][j]
                        * &self.half[k][j]
                })
                .collect();
            let order = self.fam.factors[k].order.max(8).min(m / 6);
            let (f, _) = fit_field(&self.curve, &samples, order)?;
            factors.push(WeightedSchurFunction::new(
                f,
                self.fam.weights[k].clone(),
                self.fam.weights[k + 1].clone(),
                self.curve.clone(),
            )?);
        }
        NCharFn::from_factors(factors)
    }

    /// Isometric counterpart of pi_i with the same range, together with its
    /// Hermitian half-plane projections. Scalar weights only: with chi the
    /// outer factor of Xi_i, pi'_i = pi_i chi^{-1} becomes multiplication by
    /// the unimodular u = Xi^{1/2}/chi in the scaled coordinates, and the
    /// domain split uses the orthoprojection onto the scaled Hardy subspace.
    pub fn orthogonal_counterparts(&self, i: usize) -> Result<(CMat, ModelProjection, ModelProjection)> {
        let w = &self.fam.weights[i - 1];
        if w.dim() != 1 {
            return Err(Error::Incompatible(
                "orthogonal counterparts need a scalar weight".into(),
            ));
        }
        let m = self.curve.m;
        let chi = crate::outer::outer_factor_scalar_samples(w, &self.curve)?;
        let mut pip = CMat::zeros(self.dim(), m);
        for j in 0..m {
            let u = self.half[i - 1][j][(0, 0)] / chi[j];
            for r in 0..self.dtot {
                pip[(j * self.dtot + r, j)] = self.pihat[i - 1][j][(r, 0)] * u;
            }
        }
        // orthoprojection onto Ran Ptil (idempotent: sv in {0} u [1, inf))
        let svd = self.ptil.clone().svd(true, false);
        let rank = svd.singular_values.iter().filter(|&&s| s > 0.5).count();
        let q = svd.u.as_ref().unwrap().columns(0, rank).into_owned();
        let hplus = &q * q.adjoint();
        let hminus = CMat::identity(m, m) - &hplus;
        let qp = ModelProjection {
            label: format!("q'_{i}+"),
            mat: &pip * hplus * pip.adjoint(),
        };
        let qm = ModelProjection {
            label: format!("q'_{i}-"),
            mat: &pip * hminus * pip.adjoint(),
        };
        Ok((pip, qp, qm))
    }

    /// Complement of Ran pi_1 v Ran pi_n (node-local); zero iff regular.
    pub fn unitary_residual(&self) -> Subspace {
        let m = self.curve.m;
        let mut cols = Vec::new();
        for nd in 0..m {
            let d1 = self.d(1);
            let dn = self.d(self.n);
            let mut stack = CMat::zeros(self.dtot, d1 + dn);
            stack.columns_mut(0, d1).copy_from(&self.pihat[0][nd]);
            stack.columns_mut(d1, dn).copy_from(&self.pihat[self.n - 1][nd]);
            let q = range_basis(&stack, 1e-10);
            let comp = crate::linalg::complement_within(
                &CMat::identity(self.dtot, self.dtot),
                &q,
                1e-10,
            );
            for c_ in 0..comp.ncols() {
                let mut v = CVec::zeros(self.dim());
                for r in 0..self.dtot {
                    v[nd * self.dtot + r] = comp[(r, c_)];
                }
                cols.push(v);
            }
        }
        let mut basis = CMat::zeros(self.dim(), cols.len());
        for (c_, v) in cols.iter().enumerate() {
            basis.set_column(c_, v);
        }
        Subspace { basis }
    }

    /// Compressed system of Theta_{n1} on the span of the two outer channels:
    /// P_Theta = P_{span(pi_1, pi_n)} (I - q_{1+})(I - q_{n-}). The span
    /// factor drops the normal directions that the intermediate channels
    /// leave behind (it is the identity whenever some Theta_{nk} is inner),
    /// Mhat f = (1/2 pi i) \oint (pi_1^dag f) d zeta, Nhat eta = P_Theta pi_n eta,
    /// That f = U f - pi_1 (Mhat f).
    pub fn model_system(&self) -> ModelSystem {
        self.compressed_system(false)
    }

    /// Same compression but keeping the normal directions: the state space is
    /// Ran (I - q_{1+})(I - q_{n-}) without the span factor, and the result
    /// decomposes exactly as model_system() plus the multiplication operator
    /// on the complement of span(pi_1, pi_n).
    pub fn model_system_full(&self) -> ModelSystem {
        self.compressed_system(true)
    }

    fn compressed_system(&self, keep_normal: bool) -> ModelSystem {
        let dd = self.dim();
        let id = CMat::identity(dd, dd);
        let q1p = self.q_projection(1, true).mat;
        let qnm = self.q_projection(self.n, false).mat;
        let chop = (&id - q1p) * (&id - qnm);
        let p_theta = if keep_normal {
            chop
        } else {
            let mut span1n = CMat::zeros(dd, dd);
            for nd in 0..self.curve.m {
                let d1 = self.d(1);
                let dn = self.d(self.n);
                let mut stack = CMat::zeros(self.dtot, d1 + dn);
                stack.columns_mut(0, d1).copy_from(&self.pihat[0][nd]);
                stack.columns_mut(d1, dn).copy_from(&self.pihat[self.n - 1][nd]);
                let qb = range_basis(&stack, 1e-12);
                let p = &qb * qb.adjoint();
                for r in 0..self.dtot {
                    for c_ in 0..self.dtot {
                        span1n[(nd * self.dtot + r, nd * self.dtot + c_)] = p[(r, c_)];
                    }
                }
            }
            span1n * chop
        };
        // idempotent projection: singular values are 0 or >= 1
        let svd = p_theta.clone().svd(true, false);
        let rank = svd.singular_values.iter().filter(|&&s| s > 0.5).count();
        let q = svd.u.as_ref().unwrap().columns(0, rank).into_owned();

        let m = self.curve.m;
        let d1 = self.d(1);
        let dn = self.d(self.n);
        // contour functional on the pulled-back samples
        let mut cmat = CMat::zeros(d1, m * d1);
        for j in 0..m {
            let v = self.curve.dphi[j] * self.curve.z[j] / cr(m as f64 * self.sqw[j]);
            for a in 0..d1 {
                cmat[(a, j * d1 + a)] = v;
            }
        }
        let mhat = cmat * self.pidag_mat(1); // d1 x D
        // constant embedding eta -> scaled samples
        let mut e1 = CMat::zeros(m * d1, d1);
        let mut en = CMat::zeros(m * dn, dn);
        for j in 0..m {
            for a in 0..d1 {
                e1[(j * d1 + a, a)] = cr(self.sqw[j]);
            }
            for a in 0..dn {
                en[(j * dn + a, a)] = cr(self.sqw[j]);
            }
        }
        let nhat_amb = &p_theta * self.pi_mat(self.n) * en; // D x dn
        let that_amb = self.u_mat() * &q - self.pi_mat(1) * e1 * &mhat * &q; // D x rank
        ModelSystem {
            t: q.adjoint() * that_amb,
            m: &mhat * &q,
            n: q.adjoint() * nhat_amb,
            basis: q,
        }
    }

    /// Model axioms, measured on core probes.
    pub fn axiom_report(&self) -> AxiomReport {
        let probes = self.core_probes();
        let mut commute_weight = 0.0f64;
        let mut weight_lower = f64::INFINITY;
        for i in 1..=self.n {
            let d = self.d(i);
            // pi_i^* pi_i in the scaled sample space is node-diagonal by
            // construction; measure its commutator with z and its bounds
            let a = self.pi_mat(i).adjoint() * self.pi_mat(i);
            let z = self.z_mat(d);
            commute_weight = commute_weight.max(opnorm(&(&a * &z - &z * &a)));
            // lower bound: smallest node eigenvalue relative to the measure
            for j in 0..self.curve.m {
                let mut blk = CMat::zeros(d, d);
                for r in 0..d {
                    for c_ in 0..d {
                        blk[(r, c_)] = a[(j * d + r, j * d + c_)];
                    }
                }
                let (vals, _) = herm_eigen(&blk);
                weight_lower = weight_lower.min(*vals.last().unwrap() / self.sqw[j].powi(0));
            }
        }
        let mut intertwine = 0.0f64;
        let mut hankel = 0.0f64;
        let mut cocycle = 0.0f64;
        for i in 1..=self.n {
            for j in 1..=i {
                let b = self.pidag_mat(i) * self.pi_mat(j);
                let zi = self.z_mat(self.d(i));
                let zj = self.z_mat(self.d(j));
                intertwine = intertwine.max(opnorm(&(&zi * &b - &b * &zj)));
                // P_-(pi_i^dag pi_j)P_+ on core modes
                let pm = self.p_minus_domain(self.d(i));
                let pp = self.p_plus_domain(self.d(j));
                let h = pm * &b * pp;
                let kc = (self.curve.m / 5) as i64;
                for &p in &[0i64, 1, 2, kc / 2, kc] {
                    for a in 0..self.d(j) {
                        let v = self.domain_mode(j, p, a);
                        let r = &h * &v;
                        hankel = hankel.max(r.norm() / v.norm());
                    }
                }
                for k in 1..=j {
                    let direct = self.pidag_mat(i) * self.pi_mat(k);
                    let via = &b * (self.pidag_mat(j) * self.pi_mat(k));
                    cocycle = cocycle.max(opnorm(&(direct - via)));
                }
            }
        }
        // (iv): node-local span
        let mut span_full = true;
        for nd in 0..self.curve.m {
            let cols: usize = self.dims.iter().sum();
            let mut stack = CMat::zeros(self.dtot, cols);
            let mut c0 = 0;
            for k in 1..=self.n {
                stack.columns_mut(c0, self.d(k)).copy_from(&self.pihat[k - 1][nd]);
                c0 += self.d(k);
            }
            if crate::linalg::rank(&stack, 1e-10) < self.dtot {
                span_full = false;
            }
        }
        let u = self.u_mat();
        let mut normal_intertwine = 0.0f64;
        for i in 1..=self.n {
            let pi = self.pi_mat(i);
            let z = self.z_mat(self.d(i));
            normal_intertwine = normal_intertwine.max(opnorm(&(&u * &pi - &pi * &z)));
        }
        let _ = &probes;
        AxiomReport {
            commute_weight,
            weight_lower_bound: weight_lower,
            intertwine,
            hankel_vanishes: hankel,
            cocycle,
            span_full,
            normal_intertwine,
        }
    }
}

/// Worst relative action ||A p|| / ||p|| over probes (zero for identities
/// that annihilate).
pub fn worst_action(a: &CMat, probes: &[CVec]) -> f64 {
    probes
        .iter()
        .map(|p| (a * p).norm() / p.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub label: String,
    pub residual: f64,
}

/// Lemma suite: the q / span-projection identities.
pub fn lemma_projection_suite(md: &NModel) -> Vec<IdentityReport> {
    let probes = md.core_probes();
    let dd = md.dim();
    let id = CMat::identity(dd, dd);
    let mut out = Vec::new();
    // 1) q_{i-} q_{j+} = 0, i >= j
    for i in 1..=md.n {
        for j in 1..=i {
            let a = md.q_projection(i, false).mat * md.q_projection(j, true).mat;
            out.push(IdentityReport {
                label: format!("q_{i}- q_{j}+ = 0"),
                residual: worst_action(&a, &probes),
            });
        }
    }
    // 2) q_{i+} + q_{i-} = pi_i pi_i^dag
    for i in 1..=md.n {
        let a = md.q_projection(i, true).mat + md.q_projection(i, false).mat
            - md.pi_mat(i) * md.pidag_mat(i);
        out.push(IdentityReport {
            label: format!("q_{i}+ + q_{i}- = P_pi_{i}"),
            residual: worst_action(&a, &probes),
        });
    }
    // 3)+4) span projections absorb the middle factor
    for i in 1..=md.n {
        for j in 1..=i {
            for k in 1..=j {
                for l in 1..=k {
                    for mm in 1..=l {
                        let a = md.p_orth(i, j).mat
                            * (&id - md.pi_mat(k) * md.pidag_mat(k))
                            * md.p_orth(l, mm).mat;
                        out.push(IdentityReport {
                            label: format!("Pspan({i}{j})(I-Ppi_{k})Pspan({l}{mm}) = 0"),
                            residual: worst_action(&a, &probes),
                        });
                        out.push(IdentityReport {
                            label: format!("Pspan({l}{mm})(I-Ppi_{k})Pspan({i}{j}) = 0"),
                            residual: worst_action(&a.adjoint(), &probes),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Pair-projection suite: the six product identities.
pub fn pair_projection_suite(md: &NModel) -> Vec<IdentityReport> {
    let probes = md.core_probes();
    let mut out = Vec::new();
    let mut idem_checked = false;
    for i in 1..=md.n {
        for j in 1..=i {
            let pij = md.p_pair(i, j);
            if !idem_checked {
                out.push(IdentityReport {
                    label: format!("P_({i}{j}) idempotent"),
                    residual: pij.idempotency_residual(&probes),
                });
                idem_checked = true;
            }
            if i == j {
                out.push(IdentityReport {
                    label: format!("P_({i}{i}) = 0"),
                    residual: worst_action(&pij.mat, &probes),
                });
            }
            for k in 1..=j {
                let a = &pij.mat * md.q_projection(k, true).mat;
                out.push(IdentityReport {
                    label: format!("P_({i}{j}) q_{k}+ = 0"),
                    residual: worst_action(&a, &probes),
                });
                for l in 1..=k {
                    let pkl = md.p_pair(k, l);
                    let a = &pij.mat * &pkl.mat;
                    out.push(IdentityReport {
                        label: format!("P_({i}{j}) P_({k}{l}) = 0"),
                        residual: worst_action(&a, &probes),
                    });
                }
            }
            for h in i..=md.n {
                let a = md.q_projection(h, false).mat * &pij.mat;
                out.push(IdentityReport {
                    label: format!("q_{h}- P_({i}{j}) = 0"),
                    residual: worst_action(&a, &probes),
                });
            }
            // absorption: P_(ik)P_(jk) = P_(jk), P_(ij)P_(ik) = P_(ij)
            for k in 1..=j {
                if i > j && j > k {
                    let pik = md.p_pair(i, k);
                    let pjk = md.p_pair(j, k);
                    let a = &pik.mat * &pjk.mat - &pjk.mat;
                    out.push(IdentityReport {
                        label: format!("P_({i}{k})P_({j}{k}) = P_({j}{k})"),
                        residual: worst_action(&a, &probes),
                    });
                    let b = &pij.mat * &pik.mat - &pij.mat;
                    out.push(IdentityReport {
                        label: format!("P_({i}{j})P_({i}{k}) = P_({i}{j})"),
                        residual: worst_action(&b, &probes),
                    });
                    let c = &pjk.mat * &pij.mat;
                    out.push(IdentityReport {
                        label: format!("P_({j}{k})P_({i}{j}) = 0"),
                        residual: worst_action(&c, &probes),
                    });
                }
            }
        }
    }
    out
}

/// Bracket suite over the full chain 1..n, plus the direct-sum property.
pub fn bracket_suite(md: &NModel) -> Result<Vec<IdentityReport>> {
    let probes = md.core_probes();
    let mut out = Vec::new();
    let chain: Vec<usize> = (1..=md.n).collect();
    let pb = md.p_bracket(&chain)?;
    out.push(IdentityReport {
        label: "P_[n..1] idempotent".into(),
        residual: pb.idempotency_residual(&probes),
    });
    // annihilation holds for q indices at or past the chain endpoints
    let a = &pb.mat * md.q_projection(1, true).mat;
    out.push(IdentityReport {
        label: "P_[n..1] q_1+ = 0".into(),
        residual: worst_action(&a, &probes),
    });
    let b = md.q_projection(md.n, false).mat * &pb.mat;
    out.push(IdentityReport {
        label: format!("q_{}- P_[n..1] = 0", md.n),
        residual: worst_action(&b, &probes),
    });
    // disjoint descending blocks annihilate
    if md.n >= 3 {
        let hi = md.p_bracket(&chain[md.n - 2..])?;
        let lo = md.p_bracket(&chain[..2])?;
        let a = &hi.mat * &lo.mat;
        out.push(IdentityReport {
            label: "P_[hi] P_[lo] = 0".into(),
            residual: worst_action(&a, &probes),
        });
    }
    // recursion against the explicit sum for a 3-chain
    if md.n >= 3 {
        let p31 = md.p_bracket(&[1, 2, 3])?;
        let alt = md.p_pair(3, 2).mat + md.p_pair(2, 1).mat;
        out.push(IdentityReport {
            label: "P_[321] = P_(32)+P_(21)".into(),
            residual: worst_action(&(&p31.mat - &alt), &probes),
        });
        // mutually inverse on the two model-space realizations
        let pp = md.p_pair(3, 1).mat;
        let a = &alt * &pp * &alt - &alt;
        let b = &pp * &alt * &pp - &pp;
        out.push(IdentityReport {
            label: "(P32+P21)P31(P32+P21) = P32+P21".into(),
            residual: worst_action(&a, &probes),
        });
        out.push(IdentityReport {
            label: "P31(P32+P21)P31 = P31".into(),
            residual: worst_action(&b, &probes),
        });
    }
    // direct sum H_{n1+} = K_[n..1] + D_{1+}: for f in the core of H_{n1+},
    // the bracket remainder lands in Ran q_{1+}
    let dd = md.dim();
    let id = CMat::identity(dd, dd);
    let qnm = md.q_projection(md.n, false).mat;
    let q1p = md.q_projection(1, true).mat;
    let hplus = (&id - &qnm) * md.p_orth(md.n, 1).mat;
    let mut worst = 0.0f64;
    for p in &probes {
        let f = &hplus * p;
        if f.norm() < 1e-12 {
            continue;
        }
        let rem = &f - &pb.mat * &f;
        let r = (&rem - &q1p * &rem).norm() / f.norm();
        worst = worst.max(r);
    }
    out.push(IdentityReport { label: "H_+ = K_[..] (+) D_+".into(), residual: worst });
    Ok(out)
}

/// Containments K_(ij) in H_{ij+}, H_{jk+} in H_{il+} for i>=j>=k>=l.
pub fn inclusion_suite(md: &NModel) -> Vec<IdentityReport> {
    let probes = md.core_probes();
    let dd = md.dim();
    let id = CMat::identity(dd, dd);
    let mut out = Vec::new();
    for i in 1..=md.n {
        for j in 1..=i {
            if i == j {
                continue;
            }
            let pij = md.p_pair(i, j).mat;
            let qim = md.q_projection(i, false).mat;
            let pspan = md.p_orth(i, j).mat;
            let mut w1 = 0.0f64;
            let mut w2 = 0.0f64;
            for p in &probes {
                let f = &pij * p;
                if f.norm() < 1e-12 {
                    continue;
                }
                w1 = w1.max((&qim * &f).norm() / f.norm());
                w2 = w2.max((&f - &pspan * &f).norm() / f.norm());
            }
            out.push(IdentityReport { label: format!("K_({i}{j}) in Ker q_{i}-"), residual: w1 });
            out.push(IdentityReport { label: format!("K_({i}{j}) in H_{i}{j}"), residual: w2 });
            // H_{ij+} inside H_{n1+}
            let h = (&id - &qim) * &pspan;
            let qn = md.q_projection(md.n, false).mat;
            let pall = md.p_orth(md.n, 1).mat;
            let mut w3 = 0.0f64;
            for p in &probes {
                let f = &h * p;
                if f.norm() < 1e-12 {
                    continue;
                }
                let a = (&qn * &f).norm() / f.norm();
                let b = (&f - &pall * &f).norm() / f.norm();
                w3 = w3.max(a.max(b));
            }
            out.push(IdentityReport { label: format!("H_{i}{j}+ in H_n1+"), residual: w3 });
        }
    }
    out
}

/// Mixed identities between the skew and isometric half-plane projections.
pub fn orthogonal_suite(md: &NModel) -> Result<Vec<IdentityReport>> {
    let probes = md.core_probes();
    let dd = md.dim();
    let id = CMat::identity(dd, dd);
    let mut out = Vec::new();
    let prime: Vec<(CMat, ModelProjection, ModelProjection)> =
        (1..=md.n).map(|i| md.orthogonal_counterparts(i)).collect::<Result<_>>()?;
    for i in 1..=md.n {
        let (_, qp, qm) = &prime[i - 1];
        out.push(IdentityReport {
            label: format!("q'_{i}+ Hermitian"),
            residual: worst_action(&(&qp.mat - qp.mat.adjoint()), &probes),
        });
        out.push(IdentityReport {
            label: format!("q'_{i}+ idempotent"),
            residual: qp.idempotency_residual(&probes),
        });
        for j in 1..=i {
            let (_, qjp, _) = &prime[j - 1];
            let a = md.q_projection(i, false).mat * &qjp.mat;
            out.push(IdentityReport {
                label: format!("q_{i}- q'_{j}+ = 0"),
                residual: worst_action(&a, &probes),
            });
            let b = &qm.mat * md.q_projection(j, true).mat;
            out.push(IdentityReport {
                label: format!("q'_{i}- q_{j}+ = 0"),
                residual: worst_action(&b, &probes),
            });
        }
    }
    // primed pair projections annihilate descending unprimed ones and
    // each other
    let pair_prime = |i: usize, j: usize| -> CMat {
        let (_, qjp, _) = &prime[j - 1];
        let (_, _, qim) = &prime[i - 1];
        md.p_orth(i, j).mat * (&id - &qjp.mat) * (&id - &qim.mat)
    };
    for i in 1..=md.n {
        for j in 1..=i {
            if i == j {
                continue;
            }
            let pp = pair_prime(i, j);
            // orthogonal case closed form: P'_(ij) = P_span - q'_{j+} - q'_{i-}
            let alt = md.p_orth(i, j).mat - &prime[j - 1].1.mat - &prime[i - 1].2.mat;
            out.push(IdentityReport {
                label: format!("P'_({i}{j}) closed form"),
                residual: worst_action(&(&pp - alt), &probes),
            });
            for k in 1..=j {
                for l in 1..=k {
                    if k == l {
                        continue;
                    }
                    let un = md.p_pair(k, l).mat;
                    let pr = pair_prime(k, l);
                    for (tag, a) in [
                        ("P' P", &pp * &un),
                        ("P P'", md.p_pair(i, j).mat * &pr),
                        ("P' P'", &pp * &pr),
                    ] {
                        out.push(IdentityReport {
                            label: format!("{tag} ({i}{j})({k}{l}) = 0"),
                            residual: worst_action(&a, &probes),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// U restricted to the normal residual commutes with its adjoint.
pub fn normal_part_residual(md: &NModel) -> f64 {
    let ku = md.unitary_residual();
    if ku.dim() == 0 {
        return 0.0;
    }
    let u = md.u_mat();
    let a = ku.basis.adjoint() * &u * &ku.basis;
    frob(&(&a * a.adjoint() - a.adjoint() * &a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_curve;
    use crate::field::FunctionField;
    use crate::fixtures::paper_theta;
    use crate::linalg::{c, C64};
    use crate::weight::Weight;
    use crate::schur::random_ncharfn;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn disk_shift_family(m: usize) -> NCharFn {
        let curve = make_curve(cr(0.0), m).unwrap();
        let z = WeightedSchurFunction::new(
            FunctionField::scalar_monomial(1),
            Weight::identity(1),
            Weight::identity(1),
            curve,
        )
        .unwrap();
        NCharFn::from_factors(vec![z.clone(), z]).unwrap()
    }

    fn theta_family(eps: f64, m: usize, n: usize) -> NCharFn {
        // the conformal-inverse fit needs order ~64 for clean residuals at
        // eps=0.2, which in turn needs m >= 4*order + 4
        let curve = make_curve(cr(eps), m.max(384)).unwrap();
        let th = paper_theta(&curve, 64, 1e-8).unwrap();
        NCharFn::from_factors(vec![th; n - 1]).unwrap()
    }

    #[test]
    fn inner_family_gives_multiplication_model() {
        // all factors inner: zero defects, ambient = one scalar block per node
        let fam = theta_family(0.2, 96, 3);
        let md = build_model(&fam).unwrap();
        assert_eq!(md.ranks, vec![0, 0]);
        assert_eq!(md.dtot, 1);
        assert!(md.trunc_loss < 1e-9);
        // pi_k is multiplication by Theta_{nk} = theta^{n-k}
        for k in 1..=3usize {
            for j in (0..md.curve.m).step_by(17) {
                let want = md.curve.z[j].powi(3 - k as i32);
                let got = md.pihat[k - 1][j][(0, 0)];
                assert!((got - want).norm() < 1e-7, "k={k} node {j}");
            }
        }
    }

    #[test]
    fn full_defect_for_constant_half() {
        let curve = make_curve(cr(0.0), 64).unwrap();
        let half = WeightedSchurFunction::new(
            FunctionField::constant(CMat::from_element(1, 1, cr(0.5))),
            Weight::identity(1),
            Weight::identity(1),
            curve,
        )
        .unwrap();
        let fam = NCharFn::from_factors(vec![half]).unwrap();
        let md = build_model(&fam).unwrap();
        assert_eq!(md.ranks, vec![1]);
        assert_eq!(md.dtot, 2);
        assert_eq!(md.dim(), 128);
        // sqrt(3)/2 defect entries
        let sd = md.pihat[0][0][(0, 0)];
        assert!((sd.norm() - (3.0f64).sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn axioms_hold_on_random_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let curve = make_curve(c(0.15, 0.05), 96).unwrap();
        let fam = random_ncharfn(&mut rng, &curve, &[1, 2, 1], 3, 0.85).unwrap();
        let md = build_model(&fam).unwrap();
        let rep = md.axiom_report();
        assert!(rep.ok(1e-7), "{rep:?}");
    }

    #[test]
    fn charfn_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let curve = make_curve(cr(0.2), 96).unwrap();
        let fam = random_ncharfn(&mut rng, &curve, &[2, 1, 2], 3, 0.8).unwrap();
        let md = build_model(&fam).unwrap();
        let back = md.model_charfn().unwrap();
        for k in 0..fam.factors.len() {
            let a = fam.factors[k].eval_grid(&curve);
            let b = back.factors[k].eval_grid(&curve);
            let worst = (0..curve.m)
                .map(|j| opnorm(&(&a[j] - &b[j])))
                .fold(0.0, f64::max);
            assert!(worst < 1e-7, "factor {k}: {worst:.3e}");
        }
    }

    #[test]
    fn disk_q_projection_matches_direct_assembly() {
        // n=3, Theta_ij = z^{i-j} on the disk: q_{1+} = z^2 P+ conj(z)^2
        let fam = disk_shift_family(64);
        let md = build_model(&fam).unwrap();
        let m = md.curve.m;
        let q1p = md.q_projection(1, true).mat;
        // direct assembly in Fourier modes: on samples, mult by z^2, FFT split
        let ctx = crate::grid::RieszCtx::new(&md.curve);
        let mut direct = CMat::zeros(m, m);
        for l in 0..m {
            let mut e = vec![crate::linalg::ZERO; m];
            e[l] = cr(1.0) * cr(md.sqw[l]).inv();
            let shifted: Vec<C64> = (0..m).map(|j| e[j] * md.curve.z[j].conj().powi(2)).collect();
            let p = ctx.plus(&shifted);
            for j in 0..m {
                direct[(j, l)] = p[j] * md.curve.z[j].powi(2) * cr(md.sqw[j]);
            }
        }
        assert!(opnorm(&(q1p - direct)) < 1e-10);
    }

    #[test]
    fn pair_projections_on_theta_powers() {
        // eps=0.2, n=3: K_(21) is spanned by f_1^{21} = theta^2 / w and the
        // three pair spaces fail to add up: K_(32)+K_(21) != K_(31)
        let fam = theta_family(0.2, 96, 3);
        let md = build_model(&fam).unwrap();
        let f = |i: usize, j: usize, k: usize| {
            let s: Vec<CVec> = (0..md.curve.m)
                .map(|nd| {
                    CVec::from_element(
                        1,
                        crate::fixtures::theta_at(md.curve.epsilon, md.curve.zeta[nd])
                            .powi((3 - j) as i32)
                            * md.curve.zeta[nd].powi(-(k as i32)),
                    )
                })
                .collect();
            let _ = i;
            md.domain_vector(&s)
        };
        let p21 = md.p_pair(2, 1).mat;
        let f121 = f(2, 1, 1);
        let r = (&p21 * &f121 - &f121).norm() / f121.norm();
        assert!(r < 1e-7, "f_1^21 not fixed: {r:.3e}");
        // ranks: dim K_(ij) = i - j for this family
        for (i, j, want) in [(2usize, 1usize, 1usize), (3, 2, 1), (3, 1, 2)] {
            let p = md.p_pair(i, j).mat;
            let sv = p.clone().singular_values();
            let rank = sv.iter().filter(|&&s| s > 0.5).count();
            assert_eq!(rank, want, "dim K_({i}{j})");
        }
        // K_(32) + K_(21) misses K_(31): theta^2/w lies in both, but
        // theta^2/w^2 separates the bracket from the pair projection
        let pb = md.p_bracket(&[1, 2, 3]).unwrap().mat;
        let p31 = md.p_pair(3, 1).mat;
        let f131 = f(3, 1, 1);
        let same = (&pb * &f131 - &p31 * &f131).norm() / f131.norm();
        assert!(same < 1e-7, "theta^2/w should be fixed by both: {same:.3e}");
        let f231 = f(3, 1, 2);
        let d = (&pb * &f231 - &p31 * &f231).norm() / f231.norm();
        assert!(d > 0.01, "bracket and pair coincide on theta^2/w^2: {d:.3e}");
    }

    #[test]
    fn five_chain_example_values() {
        // n=5 theta powers at eps=0.2:
        // P_(21) f_1^53 = -eps^2 f_1^21, P_(21) f_2^53 = 2 eps^3 f_1^21
        let eps = 0.2;
        let fam = theta_family(eps, 128, 5);
        let md = build_model(&fam).unwrap();
        let f = |j: usize, k: usize| {
            let s: Vec<CVec> = (0..md.curve.m)
                .map(|nd| {
                    CVec::from_element(
                        1,
                        md.curve.z[nd].powi((5 - j) as i32)
                            * md.curve.zeta[nd].powi(-(k as i32)),
                    )
                })
                .collect();
            md.domain_vector(&s)
        };
        let p21 = md.p_pair(2, 1).mat;
        let f153 = f(3, 1);
        let f253 = f(3, 2);
        let f121 = f(1, 1);
        let r1 = (&p21 * &f153 - &f121 * c(-eps * eps, 0.0)).norm() / f121.norm();
        let r2 = (&p21 * &f253 - &f121 * c(2.0 * eps.powi(3), 0.0)).norm() / f121.norm();
        assert!(r1 < 1e-7, "P21 f_1^53: {r1:.3e}");
        assert!(r2 < 1e-7, "P21 f_2^53: {r2:.3e}");
    }

    #[test]
    fn suites_pass_on_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let curve = make_curve(cr(0.2), 96).unwrap();
        let fam = random_ncharfn(&mut rng, &curve, &[1, 1, 1], 3, 0.8).unwrap();
        let md = build_model(&fam).unwrap();
        for rep in lemma_projection_suite(&md) {
            assert!(rep.residual <= 1e-7, "{}: {:.3e}", rep.label, rep.residual);
        }
        for rep in pair_projection_suite(&md) {
            assert!(rep.residual <= 1e-7, "{}: {:.3e}", rep.label, rep.residual);
        }
        for rep in bracket_suite(&md).unwrap() {
            assert!(rep.residual <= 1e-7, "{}: {:.3e}", rep.label, rep.residual);
        }
        for rep in inclusion_suite(&md) {
            assert!(rep.residual <= 1e-7, "{}: {:.3e}", rep.label, rep.residual);
        }
        for rep in orthogonal_suite(&md).unwrap() {
            assert!(rep.residual <= 1e-7, "{}: {:.3e}", rep.label, rep.residual);
        }
    }

    #[test]
    fn orthogonal_counterpart_disk_identity_weight() {
        // eps = 0: the grid Riesz split is already orthogonal, so q' = q
        let fam = disk_shift_family(64);
        let md = build_model(&fam).unwrap();
        let (pip, qp, qm) = md.orthogonal_counterparts(1).unwrap();
        assert!(opnorm(&(&pip - md.pi_mat(1))) < 1e-10);
        assert!(opnorm(&(&qp.mat - md.q_projection(1, true).mat)) < 1e-10);
        assert!(opnorm(&(&qm.mat - md.q_projection(1, false).mat)) < 1e-10);
        // on the curve the skew and Hermitian splits differ
        let fam = theta_family(0.2, 384, 2);
        let md = build_model(&fam).unwrap();
        let (_, qp, _) = md.orthogonal_counterparts(1).unwrap();
        let q = md.q_projection(1, true).mat;
        assert!(opnorm(&(&qp.mat - &q)) > 1e-3);
        // matrix weights are rejected
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let curve = make_curve(cr(0.1), 64).unwrap();
        let fam = random_ncharfn(&mut rng, &curve, &[2, 2], 2, 0.8).unwrap();
        let md = build_model(&fam).unwrap();
        assert!(md.orthogonal_counterparts(1).is_err());
    }

    #[test]
    fn unitary_residual_cases() {
        // n=2 inner: triviality
        let fam = theta_family(0.1, 384, 2);
        let md = build_model(&fam).unwrap();
        assert_eq!(md.unitary_residual().dim(), 0);
        // n=3 with (1/2)(1/2) on the disk: nontrivial normal part
        let curve0 = make_curve(cr(0.0), 64).unwrap();
        let half = WeightedSchurFunction::new(
            FunctionField::constant(CMat::from_element(1, 1, cr(0.5))),
            Weight::identity(1),
            Weight::identity(1),
            curve0,
        )
        .unwrap();
        let fam = NCharFn::from_factors(vec![half.clone(), half]).unwrap();
        let md = build_model(&fam).unwrap();
        let ku = md.unitary_residual();
        assert!(ku.dim() > 0);
        assert!(normal_part_residual(&md) < 1e-10);
        // inner family: trivial residual
        let fam = theta_family(0.2, 64, 3);
        let md = build_model(&fam).unwrap();
        assert_eq!(md.unitary_residual().dim(), 0);
    }

    #[test]
    fn model_system_disk_square() {
        // Theta = z^2 on the disk through a 3-model of [z, z]:
        // K_Theta = span{1, z}, That nilpotent of order 2
        let fam = disk_shift_family(64);
        let md = build_model(&fam).unwrap();
        let sys = md.model_system();
        assert_eq!(sys.t.nrows(), 2);
        assert!(opnorm(&(&sys.t * &sys.t)) < 1e-9, "T^2 != 0");
        assert!(opnorm(&sys.t) > 1e-3, "T should not vanish for z^2");
    }

    #[test]
    fn model_system_theta_is_one_dimensional() {
        let fam = theta_family(0.2, 96, 2);
        let md = build_model(&fam).unwrap();
        let sys = md.model_system();
        assert_eq!(sys.t.nrows(), 1);
        assert!(sys.t[(0, 0)].norm() < 1e-8, "T = 0 for the conformal inverse");
        // M and N pair to theta'(0)-normalized data: |m n| = 1 for this curve
        let prod = (sys.m[(0, 0)] * sys.n[(0, 0)]).norm();
        assert!((prod - 1.0).abs() < 1e-7, "MN = {prod}");
    }
}
