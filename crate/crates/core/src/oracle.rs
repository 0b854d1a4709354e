//! Brute-force reference implementation for small rulers.
//!
//! Nothing here shares code with the Gaussian algebra of the main path: branch
//! amplitudes are literal products of mode wavefunctions, partial traces are dense
//! tensor quadratures and `C*` is a Monte-Carlo estimate. Only `f64` is supported.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion::IonModel;
use crate::lattice::ModeBasis;
use crate::quad::gauss_legendre;
use crate::response::Scenario;

pub const ORACLE_MAX_N: usize = 7;
pub const GRID_POINT_LIMIT: f64 = 1e8;
pub const MIN_MC_SAMPLES: usize = 1_000_000;

/// Samples are drawn in fixed-size chunks, each from its own ChaCha stream, so the
/// result does not depend on the thread count.
const CHUNK: usize = 1 << 14;

/// Composite Gauss-Legendre grid for each traced coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half range in units of the local zero-point width.
    pub sigmas: f64,
    pub panels: usize,
    pub points_per_panel: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { sigmas: 10.0, panels: 4, points_per_panel: 16 }
    }
}

impl GridSpec {
    pub fn points_per_axis(&self) -> usize {
        self.panels * self.points_per_panel
    }

    /// Nodes and weights on `[mid - half, mid + half]`.
    fn axis(&self, mid: f64, half: f64) -> Vec<(f64, f64)> {
        let (x, w) = gauss_legendre::<f64>(self.points_per_panel);
        let width = 2.0 * half / self.panels as f64;
        let mut out = Vec::with_capacity(self.points_per_axis());
        for p in 0..self.panels {
            let a = mid - half + p as f64 * width;
            for (xi, wi) in x.iter().zip(&w) {
                out.push((a + 0.5 * width * (xi + 1.0), 0.5 * width * wi));
            }
        }
        out
    }
}

/// Ruler state for the ion at `site`, kept as explicit per-mode Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBranch {
    pub site: i64,
    pub n: usize,
    /// `2 lambda_{alpha,site} x0_alpha`, index `alpha - 1`.
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    /// `u[alpha-1][k]` over all sites, left edge first.
    u: Vec<Vec<f64>>,
}

impl DenseBranch {
    pub fn new(site: i64, model: &IonModel<f64>, basis: &ModeBasis<f64>) -> Result<Self> {
        basis.offset(site)?;
        let modes = basis.mode_count();
        let widths: Vec<f64> = (1..=modes).map(|a| basis.x0(a)).collect();
        let centers = (1..=modes).map(|a| 2.0 * model.lambda_mode(a, site) * basis.x0(a)).collect();
        let u = (1..=modes).map(|a| basis.u_row(a).to_vec()).collect();
        Ok(Self { site, n: basis.n(), centers, widths, u })
    }

    /// Mode coordinate `x_alpha = sum_{n > left} (u_{alpha,n} - u_{alpha,left}) phi_n`.
    fn mode_coordinate(&self, alpha: usize, phi_reduced: &[f64]) -> f64 {
        let row = &self.u[alpha];
        phi_reduced.iter().enumerate().map(|(k, p)| (row[k + 1] - row[0]) * p).sum()
    }

    /// `prod_alpha psi_alpha(x_alpha)`.
    pub fn amplitude(&self, phi_reduced: &[f64]) -> f64 {
        let mut log = 0.0;
        for alpha in 0..self.centers.len() {
            let x = self.mode_coordinate(alpha, phi_reduced);
            let s = self.widths[alpha];
            log +=
                -0.25 * (2.0 * std::f64::consts::PI * s * s).ln() - (x - self.centers[alpha]).powi(2) / (4.0 * s * s);
        }
        log.exp()
    }

    /// Mean displacement at every site.
    pub fn site_means(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.u.iter().zip(&self.centers).map(|(row, c)| row[k] * c).sum()).collect()
    }

    /// Free zero-point width at every site.
    pub fn site_widths(&self) -> Vec<f64> {
        (0..self.n)
            .map(|k| self.u.iter().zip(&self.widths).map(|(row, s)| (row[k] * s).powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    /// `prod_alpha int |psi_alpha|^2` on `center +- sigmas * width`; close to one.
    pub fn mode_normalization(&self, grid: &GridSpec) -> f64 {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(&c, &s)| {
                grid.axis(c, grid.sigmas * s)
                    .iter()
                    .map(|&(x, w)| {
                        w * (-(x - c).powi(2) / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s).sqrt()
                    })
                    .sum::<f64>()
            })
            .product()
    }
}

fn check_size(basis: &ModeBasis<f64>) -> Result<()> {
    if basis.n() > ORACLE_MAX_N {
        return Err(Error::InvalidParameter {
            name: "N",
            requirement: "at most 7 for the oracle",
            value: basis.n() as f64,
        });
    }
    Ok(())
}

fn offsets(i1: i64, i2: i64, basis: &ModeBasis<f64>) -> Result<(usize, usize)> {
    if i1 == i2 {
        return Err(Error::CoincidentSites(i1));
    }
    Ok((basis.reduced_offset(i1)?, basis.reduced_offset(i2)?))
}

fn branch_pair(i1: i64, i2: i64, model: &IonModel<f64>, basis: &ModeBasis<f64>) -> Result<[DenseBranch; 2]> {
    Ok([DenseBranch::new(i1, model, basis)?, DenseBranch::new(i2, model, basis)?])
}

fn pick(m: u8) -> Result<usize> {
    match m {
        1 | 2 => Ok(m as usize - 1),
        _ => Err(Error::InvalidParameter { name: "branch", requirement: "1 or 2", value: m as f64 }),
    }
}

/// Reduced density element `rho^{m m'}` at `u4 = (phi_i1, phi_i2, phi'_i1, phi'_i2)`,
/// traced over the other `N-3` reduced coordinates by dense quadrature.
#[allow(clippy::too_many_arguments)]
pub fn oracle_kernel_value(
    m: u8,
    m_prime: u8,
    i1: i64,
    i2: i64,
    u4: [f64; 4],
    model: &IonModel<f64>,
    basis: &ModeBasis<f64>,
    grid: &GridSpec,
) -> Result<f64> {
    check_size(basis)?;
    let (k1, k2) = offsets(i1, i2, basis)?;
    let branches = branch_pair(i1, i2, model, basis)?;
    let ket = &branches[pick(m)?];
    let bra = &branches[pick(m_prime)?];
    let dim = basis.mode_count();
    let traced: Vec<usize> = (0..dim).filter(|&k| k != k1 && k != k2).collect();
    let per_axis = grid.points_per_axis();
    let total = (per_axis as f64).powi(traced.len() as i32);
    if total > GRID_POINT_LIMIT {
        return Err(Error::GridTooLarge { points: total, limit: GRID_POINT_LIMIT });
    }

    let ket_means = ket.site_means();
    let bra_means = bra.site_means();
    let widths = ket.site_widths();
    let axes: Vec<Vec<(f64, f64)>> = traced
        .iter()
        .map(|&k| {
            let mid = 0.5 * (ket_means[k + 1] + bra_means[k + 1]);
            grid.axis(mid, grid.sigmas * widths[k + 1])
        })
        .collect();

    let r = traced.len();
    let first = if r == 0 { 1 } else { per_axis };
    let sum: f64 = (0..first)
        .into_par_iter()
        .map(|i0| {
            let mut ket_phi = vec![0.0; dim];
            let mut bra_phi = vec![0.0; dim];
            ket_phi[k1] = u4[0];
            ket_phi[k2] = u4[1];
            bra_phi[k1] = u4[2];
            bra_phi[k2] = u4[3];
            let mut idx = vec![0usize; r];
            if r > 0 {
                idx[0] = i0;
            }
            let inner = per_axis.pow(r.saturating_sub(1) as u32);
            let mut acc = 0.0;
            for _ in 0..inner {
                let mut w = 1.0;
                for (d, &k) in traced.iter().enumerate() {
                    let (x, wx) = axes[d][idx[d]];
                    ket_phi[k] = x;
                    bra_phi[k] = x;
                    w *= wx;
                }
                acc += w * ket.amplitude(&ket_phi) * bra.amplitude(&bra_phi);
                // Odometer over axes 1..r.
                for d in (1..r).rev() {
                    idx[d] += 1;
                    if idx[d] < per_axis {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(0.5 * (basis.n() as f64).sqrt() * sum)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

struct Moments {
    sum: f64,
    sum_sq: f64,
    count: usize,
}

impl Moments {
    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    fn std_error(&self) -> f64 {
        let n = self.count as f64;
        let var = (self.sum_sq / n - self.mean().powi(2)).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    }
}

/// Averages `f(rng)` over `samples` draws split into independent seeded streams.
fn sample_mean(samples: usize, seed: u64, stream_base: u64, f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> Moments {
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let v = f(&mut rng);
                s += v;
                s2 += v * v;
            }
            (s, s2, count)
        })
        .collect();
    let (sum, sum_sq, count) = parts.iter().fold((0.0, 0.0, 0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
    Moments { sum, sum_sq, count }
}

/// Free ground-state covariance of the full-site displacements.
fn free_covariance(basis: &ModeBasis<f64>) -> DMatrix<f64> {
    let n = basis.n();
    DMatrix::from_fn(n, n, |i, j| {
        (1..=basis.mode_count()).map(|a| basis.u_row(a)[i] * basis.u_row(a)[j] * basis.x0(a).powi(2)).sum()
    })
}

/// `C* = |T12| / T11` by importance sampling.
///
/// Kept coordinates are uniform over their boxes (which turns each box average
/// into a plain expectation); traced coordinates come from a Gaussian proposal
/// centred between the two branch means with twice the free covariance.
pub fn oracle_cstar(
    i1: i64,
    i2: i64,
    c: f64,
    model: &IonModel<f64>,
    basis: &ModeBasis<f64>,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_size(basis)?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidParameter { name: "samples", requirement: ">= 1e6", value: samples as f64 });
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParameter { name: "c", requirement: "> 0", value: c });
    }
    let (k1, k2) = offsets(i1, i2, basis)?;
    let branches = branch_pair(i1, i2, model, basis)?;
    let means = [branches[0].site_means(), branches[1].site_means()];
    let widths = branches[0].site_widths();
    let dim = basis.mode_count();
    let traced: Vec<usize> = (0..dim).filter(|&k| k != k1 && k != k2).collect();
    let h = [c * widths[k1 + 1], c * widths[k2 + 1]];

    let cov_full = free_covariance(basis);
    let cov = DMatrix::from_fn(traced.len(), traced.len(), |a, b| 2.0 * cov_full[(traced[a] + 1, traced[b] + 1)]);
    let chol = nalgebra::Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
    let l = chol.l();
    let log_q_norm = -0.5 * traced.len() as f64 * (2.0 * std::f64::consts::PI).ln()
        - l.diagonal().iter().map(|d| d.ln()).sum::<f64>();

    let estimate = |m: usize, mp: usize, stream: u64| {
        let mid = DVector::from_fn(traced.len(), |a, _| 0.5 * (means[m][traced[a] + 1] + means[mp][traced[a] + 1]));
        let ket = &branches[m];
        let bra = &branches[mp];
        sample_mean(samples, seed, stream, |rng| {
            let z = DVector::from_fn(traced.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let v = &mid + &l * &z;
            // v - mid = L z, so the proposal exponent is just |z|^2 / 2.
            let log_q = log_q_norm - 0.5 * z.norm_squared();
            let mut ket_phi = vec![0.0; dim];
            let mut bra_phi = vec![0.0; dim];
            for (a, &k) in traced.iter().enumerate() {
                ket_phi[k] = v[a];
                bra_phi[k] = v[a];
            }
            for (k, hh) in [(k1, h[0]), (k2, h[1])] {
                ket_phi[k] = means[m][k + 1] + hh * (2.0 * rng.random::<f64>() - 1.0);
                bra_phi[k] = means[mp][k + 1] + hh * (2.0 * rng.random::<f64>() - 1.0);
            }
            ket.amplitude(&ket_phi) * bra.amplitude(&bra_phi) / log_q.exp()
        })
    };
    let diag = estimate(0, 0, 0);
    let off = estimate(0, 1, 1 << 32);
    let (d, o) = (diag.mean(), off.mean());
    let value = o.abs() / d;
    let rel = ((off.std_error() / o).powi(2) + (diag.std_error() / d).powi(2)).sqrt();
    Ok(McEstimate { value, std_error: value * rel, samples, seed })
}

/// Sample statistics of the dipole displacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleProfile {
    pub scenario: Scenario,
    pub sites: Vec<i64>,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub variance: Vec<f64>,
    pub variance_se: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// Samples mode coordinates from `|psi|^2` (an equal mixture of the two branches
/// for a superposition, the ion states being orthogonal) and maps them to sites.
pub fn oracle_response(
    scenario: Scenario,
    model: &IonModel<f64>,
    basis: &ModeBasis<f64>,
    samples: usize,
    seed: u64,
) -> Result<OracleProfile> {
    check_size(basis)?;
    let branches: Vec<DenseBranch> = match scenario {
        Scenario::Single { site } => vec![DenseBranch::new(site, model, basis)?],
        Scenario::Superposition { i1, i2 } => {
            vec![DenseBranch::new(i1, model, basis)?, DenseBranch::new(i2, model, basis)?]
        }
    };
    let n = basis.n();
    let chunks = samples.div_ceil(CHUNK);
    // Per chunk: sums of phi, phi^2, phi^3, phi^4 at every site.
    let parts: Vec<Vec<[f64; 4]>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut acc = vec![[0.0; 4]; n];
            for _ in 0..CHUNK.min(samples - c * CHUNK) {
                let b = &branches[if branches.len() == 2 { rng.random_range(0..2) } else { 0 }];
                let x: Vec<f64> = b
                    .centers
                    .iter()
                    .zip(&b.widths)
                    .map(|(&mu, &s)| mu + s * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                for (k, slot) in acc.iter_mut().enumerate() {
                    let phi: f64 = b.u.iter().zip(&x).map(|(row, xa)| row[k] * xa).sum();
                    let p2 = phi * phi;
                    slot[0] += phi;
                    slot[1] += p2;
                    slot[2] += p2 * phi;
                    slot[3] += p2 * p2;
                }
            }
            acc
        })
        .collect();
    let ns = samples as f64;
    let mut mean = Vec::with_capacity(n);
    let mut mean_se = Vec::with_capacity(n);
    let mut variance = Vec::with_capacity(n);
    let mut variance_se = Vec::with_capacity(n);
    for k in 0..n {
        let s: [f64; 4] =
            parts.iter().fold([0.0; 4], |a, p| [a[0] + p[k][0], a[1] + p[k][1], a[2] + p[k][2], a[3] + p[k][3]]);
        let m1 = s[0] / ns;
        let raw2 = s[1] / ns;
        let raw3 = s[2] / ns;
        let raw4 = s[3] / ns;
        let var = (raw2 - m1 * m1) * ns / (ns - 1.0);
        // Fourth central moment from raw moments.
        let mu4 = raw4 - 4.0 * m1 * raw3 + 6.0 * m1 * m1 * raw2 - 3.0 * m1.powi(4);
        mean.push(m1);
        mean_se.push((var / ns).sqrt());
        variance.push(var);
        variance_se.push(((mu4 - var * var).max(0.0) / ns).sqrt());
    }
    Ok(OracleProfile { scenario, sites: basis.sites().collect(), mean, mean_se, variance, variance_se, samples, seed })
}
