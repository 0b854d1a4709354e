//! Joint ion-ruler measurement.
//!
//! Each ion branch leaves the ruler in a product of displaced mode ground states.
//! In the reduced local coordinates `phi` (left edge eliminated) that amplitude is
//! the Gaussian `exp(log_norm - (phi - c)^T A (phi - c))` with `A = U~^T D^-1 U~`,
//! `D = diag(4 x0^2)`. Tracing out every dipole except the two at `i1`, `i2`
//! leaves, for each branch pair, a Gaussian kernel in four variables: ket
//! `(phi_i1, phi_i2)` followed by bra `(phi'_i1, phi'_i2)`. Box projectors of
//! half width `c * delta_phi` around the branch-conditioned means are then
//! integrated against those kernels to give `C*`.
//!
//! All kernels are real in the long-time limit. The per-branch phases
//! `exp(-i f)` are constant in `phi` and drop out of every magnitude.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion::IonModel;
use crate::lattice::{local_from_modes, ModeBasis};
use crate::linalg::{marginalize, Matrix};
use crate::quad::gauss_legendre;
use crate::scalar::Real;

/// Box quadrature stops refining once successive orders agree this closely.
pub const BOX_REL_TOL: f64 = 1e-8;
pub const BOX_START_ORDER: usize = 4;
pub const BOX_MAX_ORDER: usize = 64;

/// Tolerance of the internal `T11 = T22`, `|T12| = |T21|` check.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Ruler amplitude for the ion localised at `site`, over the `N-1` reduced coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAmplitude<T> {
    pub site: i64,
    pub precision: Matrix<T>,
    pub center: Vec<T>,
    pub log_norm: T,
}

impl<T: Real> GaussianAmplitude<T> {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn log_eval(&self, phi_reduced: &[T]) -> T {
        let d: Vec<T> = phi_reduced.iter().zip(&self.center).map(|(&p, &c)| p - c).collect();
        self.log_norm - self.precision.quadratic_form(&d)
    }

    pub fn eval(&self, phi_reduced: &[T]) -> T {
        self.log_eval(phi_reduced).exp()
    }

    /// Covariance of `|amplitude|^2`, i.e. `A^-1 / 4`.
    pub fn covariance(&self) -> Result<Matrix<T>> {
        let inv = self.precision.cholesky()?.inverse();
        let q = T::lit(0.25);
        Ok(Matrix::from_fn(inv.rows(), inv.cols(), |i, j| inv[(i, j)] * q))
    }
}

fn precision_matrix<T: Real>(basis: &ModeBasis<T>) -> Matrix<T> {
    let dim = basis.mode_count();
    let mut a = Matrix::zeros(dim, dim);
    for alpha in 1..=dim {
        let row = basis.u_tilde_row(alpha);
        let w = T::one() / (T::lit(4.0) * basis.x0(alpha).powi(2));
        for i in 0..dim {
            let ri = row[i] * w;
            for j in 0..dim {
                a[(i, j)] = a[(i, j)] + ri * row[j];
            }
        }
    }
    a
}

pub fn build_branch_amplitude<T: Real>(
    site: i64,
    model: &IonModel<T>,
    basis: &ModeBasis<T>,
) -> Result<GaussianAmplitude<T>> {
    basis.offset(site)?;
    let lam = model.lambda_column(site)?;
    let mu: Vec<T> = lam.iter().enumerate().map(|(k, &l)| T::lit(2.0) * l * basis.x0(k + 1)).collect();
    // U~ c = mu is solved by the full-site mean with the left edge dropped.
    let full = local_from_modes(basis, &mu)?;
    let center = full[1..].to_vec();
    let precision = precision_matrix(basis);
    precision.cholesky()?;
    let log_norm = -T::lit(0.25)
        * (1..=basis.mode_count()).map(|alpha| (T::lit(2.0) * T::PI() * basis.x0(alpha).powi(2)).ln()).sum::<T>();
    Ok(GaussianAmplitude { site, precision, center, log_norm })
}

/// `rho^{m m'}(u)` for `u = (phi_i1, phi_i2, phi'_i1, phi'_i2)`:
/// `exp(log_prefactor - u^T quad u + 2 linear^T u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubledKernel<T> {
    /// Ket branch, 1 or 2.
    pub m: u8,
    /// Bra branch, 1 or 2.
    pub m_prime: u8,
    pub quad: Matrix<T>,
    pub linear: Vec<T>,
    pub log_prefactor: T,
}

impl<T: Real> DoubledKernel<T> {
    pub fn log_eval(&self, u: &[T; 4]) -> T {
        let lin = self.linear.iter().zip(u).fold(T::zero(), |acc, (&b, &x)| acc + b * x);
        self.log_prefactor - self.quad.quadratic_form(u) + T::lit(2.0) * lin
    }

    pub fn eval(&self, u: &[T; 4]) -> T {
        self.log_eval(u).exp()
    }
}

fn branch_index(m: u8) -> Result<usize> {
    match m {
        1 | 2 => Ok(m as usize - 1),
        _ => Err(Error::InvalidParameter { name: "branch", requirement: "1 or 2", value: m as f64 }),
    }
}

/// Integrates the branch-pair density element over every dipole except `i1`, `i2`.
///
/// `amplitudes[0]` and `amplitudes[1]` are the branches with the ion at `i1` and `i2`.
pub fn trace_to_doubled_kernel<T: Real>(
    m: u8,
    m_prime: u8,
    i1: i64,
    i2: i64,
    amplitudes: &[GaussianAmplitude<T>; 2],
    basis: &ModeBasis<T>,
) -> Result<DoubledKernel<T>> {
    if i1 == i2 {
        return Err(Error::CoincidentSites(i1));
    }
    let ket = &amplitudes[branch_index(m)?];
    let bra = &amplitudes[branch_index(m_prime)?];
    let k1 = basis.reduced_offset(i1)?;
    let k2 = basis.reduced_offset(i2)?;
    let dim = ket.dim();
    let r = dim - 2;

    // Position of every reduced coordinate inside w = (a, a', v) for ket and bra.
    let mut ket_pos = vec![0usize; dim];
    let mut bra_pos = vec![0usize; dim];
    let mut next = 4;
    for j in 0..dim {
        if j == k1 {
            ket_pos[j] = 0;
            bra_pos[j] = 2;
        } else if j == k2 {
            ket_pos[j] = 1;
            bra_pos[j] = 3;
        } else {
            ket_pos[j] = next;
            bra_pos[j] = next;
            next += 1;
        }
    }

    let a = &ket.precision;
    let mut big = Matrix::zeros(4 + r, 4 + r);
    let mut lin = vec![T::zero(); 4 + r];
    let ac = a.mul_vec(&ket.center);
    let ac_bra = bra.precision.mul_vec(&bra.center);
    for i in 0..dim {
        for j in 0..dim {
            big[(ket_pos[i], ket_pos[j])] = big[(ket_pos[i], ket_pos[j])] + a[(i, j)];
            big[(bra_pos[i], bra_pos[j])] = big[(bra_pos[i], bra_pos[j])] + bra.precision[(i, j)];
        }
        lin[ket_pos[i]] = lin[ket_pos[i]] + ac[i];
        lin[bra_pos[i]] = lin[bra_pos[i]] + ac_bra[i];
    }
    let constant = ket.center.iter().zip(&ac).fold(T::zero(), |s, (&c, &v)| s + c * v)
        + bra.center.iter().zip(&ac_bra).fold(T::zero(), |s, (&c, &v)| s + c * v);

    let kept = [0usize, 1, 2, 3];
    let traced: Vec<usize> = (4..4 + r).collect();
    let marg = marginalize(&big, &lin, constant, &kept, &traced)?;
    let nf = T::from_usize_lossy(basis.n());
    let log_prefactor =
        T::lit(0.5).ln() + T::lit(0.5) * nf.ln() + ket.log_norm + bra.log_norm + marg.log_volume - marg.constant;
    Ok(DoubledKernel { m, m_prime, quad: marg.quad, linear: marg.linear, log_prefactor })
}

/// Box windows for the joint projector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxProjectorSpec<T> {
    pub c: T,
    /// `centers[l][m]` is the mean of the dipole at `i_{l+1}` in branch `m+1`.
    pub centers: [[T; 2]; 2],
    /// `c * delta_phi` at `i1` and `i2`.
    pub halfwidths: [T; 2],
}

pub fn build_box_spec<T: Real>(
    c: T,
    i1: i64,
    i2: i64,
    amplitudes: &[GaussianAmplitude<T>; 2],
    basis: &ModeBasis<T>,
) -> Result<BoxProjectorSpec<T>> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::InvalidParameter { name: "c", requirement: "finite and > 0", value: c.as_f64() });
    }
    let k = [basis.reduced_offset(i1)?, basis.reduced_offset(i2)?];
    let centers = [
        [amplitudes[0].center[k[0]], amplitudes[1].center[k[0]]],
        [amplitudes[0].center[k[1]], amplitudes[1].center[k[1]]],
    ];
    let halfwidths = [c * basis.zero_point_sigma_at(i1)?, c * basis.zero_point_sigma_at(i2)?];
    Ok(BoxProjectorSpec { c, centers, halfwidths })
}

/// Log of a box integral together with the quadrature order that met the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxValue<T> {
    pub log_value: T,
    pub order: usize,
}

/// `ln int_box K`, tensor Gauss-Legendre of a fixed order.
fn log_box_fixed<T: Real>(kernel: &DoubledKernel<T>, lo: &[T; 4], hi: &[T; 4], order: usize) -> T {
    let (x, w) = gauss_legendre::<T>(order);
    let half: Vec<T> = (0..4).map(|d| (hi[d] - lo[d]) * T::lit(0.5)).collect();
    let mid: Vec<T> = (0..4).map(|d| (hi[d] + lo[d]) * T::lit(0.5)).collect();
    let nodes: Vec<Vec<T>> = (0..4).map(|d| x.iter().map(|&xi| mid[d] + half[d] * xi).collect()).collect();
    let log_w: Vec<T> = w.iter().map(|&v| v.ln()).collect();

    // Each slab returns (max exponent, sum of exp(exponent - max)); combined in order.
    let slabs: Vec<(T, T)> = (0..order)
        .into_par_iter()
        .map(|i0| {
            let mut terms = Vec::with_capacity(order * order * order);
            for i1 in 0..order {
                for i2 in 0..order {
                    for i3 in 0..order {
                        let u = [nodes[0][i0], nodes[1][i1], nodes[2][i2], nodes[3][i3]];
                        terms.push(kernel.log_eval(&u) + log_w[i0] + log_w[i1] + log_w[i2] + log_w[i3]);
                    }
                }
            }
            let mx = terms.iter().copied().fold(T::neg_infinity(), T::max);
            let s = terms.iter().map(|&t| (t - mx).exp()).sum::<T>();
            (mx, s)
        })
        .collect();
    let mx = slabs.iter().map(|s| s.0).fold(T::neg_infinity(), T::max);
    let total = slabs.iter().map(|&(m, s)| s * (m - mx).exp()).sum::<T>();
    let log_jac = half.iter().map(|h| h.ln()).sum::<T>();
    mx + total.ln() + log_jac
}

/// `ln int_box K` with the order doubled until successive results agree.
pub fn log_box_integral<T: Real>(kernel: &DoubledKernel<T>, lo: &[T; 4], hi: &[T; 4]) -> Result<BoxValue<T>> {
    let tol = T::lit(BOX_REL_TOL).max(T::epsilon() * T::lit(256.0));
    let mut order = BOX_START_ORDER;
    let mut prev = log_box_fixed(kernel, lo, hi, order);
    let mut evaluations = order.pow(4);
    while order < BOX_MAX_ORDER {
        order *= 2;
        let cur = log_box_fixed(kernel, lo, hi, order);
        evaluations += order.pow(4);
        // |ln a - ln b| approximates the relative change.
        if (cur - prev).abs() < tol {
            return Ok(BoxValue { log_value: cur, order });
        }
        prev = cur;
    }
    Err(Error::QuadratureNonConvergence { evaluations, error: f64::NAN, target: tol.as_f64() })
}

/// `ln T_{m m'}`: the kernel between normalised box states, with the `1/2` of the
/// projector's equal-weight superposition.
///
/// Ket variables sit in the branch-`m` boxes, bra variables in the branch-`m'` boxes.
pub fn project_box<T: Real>(kernel: &DoubledKernel<T>, spec: &BoxProjectorSpec<T>) -> Result<BoxValue<T>> {
    let m = branch_index(kernel.m)?;
    let mp = branch_index(kernel.m_prime)?;
    let h = spec.halfwidths;
    let ctr = [spec.centers[0][m], spec.centers[1][m], spec.centers[0][mp], spec.centers[1][mp]];
    let hw = [h[0], h[1], h[0], h[1]];
    let lo = [0, 1, 2, 3].map(|d| ctr[d] - hw[d]);
    let hi = [0, 1, 2, 3].map(|d| ctr[d] + hw[d]);
    let raw = log_box_integral(kernel, &lo, &hi)?;
    let two = T::lit(2.0);
    let norm = (two * h[0]).ln() + (two * h[1]).ln();
    Ok(BoxValue { log_value: raw.log_value - norm + T::lit(0.5).ln(), order: raw.order })
}

/// Audit record of one `C*` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CStarReport<T> {
    pub i1: i64,
    pub i2: i64,
    pub c: T,
    pub cstar: T,
    pub log_cstar: T,
    /// `ln T_{m m'}`, row = ket branch.
    pub log_terms: [[T; 2]; 2],
    pub orders: [[usize; 2]; 2],
    /// `|T11 - T22| / T11`.
    pub diagonal_residual: T,
    /// `| |T12| - |T21| | / |T12|`.
    pub offdiagonal_residual: T,
    /// Branch phases are constant in the dipole coordinates and cancel in every magnitude.
    pub phases_cancel: bool,
    pub box_spec: BoxProjectorSpec<T>,
}

/// Branch amplitudes with the four doubled kernels, indexed `[m-1][m'-1]`.
pub type BranchKernels<T> = ([GaussianAmplitude<T>; 2], [[DoubledKernel<T>; 2]; 2]);

pub fn doubled_kernels<T: Real>(
    i1: i64,
    i2: i64,
    model: &IonModel<T>,
    basis: &ModeBasis<T>,
) -> Result<BranchKernels<T>> {
    let amps = [build_branch_amplitude(i1, model, basis)?, build_branch_amplitude(i2, model, basis)?];
    let k = |m, mp| trace_to_doubled_kernel(m, mp, i1, i2, &amps, basis);
    let kernels = [[k(1, 1)?, k(1, 2)?], [k(2, 1)?, k(2, 2)?]];
    Ok((amps, kernels))
}

/// `C* = |T12| / T11` from prepared kernels.
pub fn cstar_from_kernels<T: Real>(
    i1: i64,
    i2: i64,
    kernels: &[[DoubledKernel<T>; 2]; 2],
    spec: &BoxProjectorSpec<T>,
) -> Result<CStarReport<T>> {
    let mut log_terms = [[T::zero(); 2]; 2];
    let mut orders = [[0usize; 2]; 2];
    for m in 0..2 {
        for mp in 0..2 {
            let v = project_box(&kernels[m][mp], spec)?;
            log_terms[m][mp] = v.log_value;
            orders[m][mp] = v.order;
        }
    }
    let rel = |a: T, b: T| (b - a).exp_m1().abs();
    let diagonal_residual = rel(log_terms[0][0], log_terms[1][1]);
    let offdiagonal_residual = rel(log_terms[0][1], log_terms[1][0]);
    // Single precision cannot reach the double-precision tolerance.
    let tol = T::lit(SYMMETRY_TOL).max(T::epsilon() * T::lit(1024.0));
    if diagonal_residual > tol {
        return Err(Error::Inconsistent { what: "T11 = T22", residual: diagonal_residual.as_f64() });
    }
    if offdiagonal_residual > tol {
        return Err(Error::Inconsistent { what: "|T12| = |T21|", residual: offdiagonal_residual.as_f64() });
    }
    let log_cstar = log_terms[0][1] - log_terms[0][0];
    if log_terms[0][0] < T::min_positive_value().ln() {
        return Err(Error::Underflow { log_denominator: log_terms[0][0].as_f64(), log_ratio: log_cstar.as_f64() });
    }
    Ok(CStarReport {
        i1,
        i2,
        c: spec.c,
        cstar: log_cstar.exp(),
        log_cstar,
        log_terms,
        orders,
        diagonal_residual,
        offdiagonal_residual,
        phases_cancel: true,
        box_spec: spec.clone(),
    })
}

/// Joint measurement coherence for the ion superposed over `i1` and `i2`.
pub fn cstar<T: Real>(i1: i64, i2: i64, c: T, model: &IonModel<T>, basis: &ModeBasis<T>) -> Result<CStarReport<T>> {
    basis.check_edge_safe(i1)?;
    basis.check_edge_safe(i2)?;
    if i1 == i2 {
        return Err(Error::CoincidentSites(i1));
    }
    let (amps, kernels) = doubled_kernels(i1, i2, model, basis)?;
    let spec = build_box_spec(c, i1, i2, &amps, basis)?;
    cstar_from_kernels(i1, i2, &kernels, &spec)
}
