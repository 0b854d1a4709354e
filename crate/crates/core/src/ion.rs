//! Tight-binding ion above the ruler: binding constants, the displacement
//! coupling `lambda` and its per-mode projections.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{positive, ModeBasis};
use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::scalar::Real;

/// Below this value of `kappa * w` the coupling integral blows up like `1/(3 z^3)`.
pub const XI_MIN_ARGUMENT: f64 = 1e-3;

/// Upper integration limit for `xi`; the neglected tail is below `exp(-80) / (2 * 40^4)`.
const XI_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonPhysical<T> {
    pub m_i: T,
    pub q_i: T,
    /// Dipole charge magnitude.
    pub q: T,
    /// Charge separation inside a dipole.
    pub l: T,
    /// Perpendicular ion-ruler distance.
    pub w: T,
    pub eps0: T,
}

impl<T: Real> IonPhysical<T> {
    pub fn p_r(&self) -> T {
        self.q * self.l
    }

    pub fn validate(&self) -> Result<()> {
        positive("M_I", self.m_i)?;
        positive("q_I", self.q_i)?;
        positive("q", self.q)?;
        positive("l", self.l)?;
        positive("w", self.w)?;
        positive("eps0", self.eps0)?;
        if self.l >= self.w {
            return Err(Error::DipoleTooLarge { l: self.l.as_f64(), w: self.w.as_f64() });
        }
        Ok(())
    }

    /// Inverse localisation length of the bound state.
    pub fn kappa(&self, hbar: T) -> T {
        self.m_i * self.q_i * self.p_r() / (T::lit(2.0) * T::PI() * hbar * hbar * self.eps0 * self.w)
    }
}

/// Constants that only exist when the ion is specified physically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonConstants<T> {
    pub kappa: T,
    pub nu: T,
    pub gamma: T,
    pub xi: T,
    pub a_r: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IonModel<T> {
    lambda: T,
    half_width: i64,
    /// Row `alpha - 1`, column = site offset.
    lambda_mode: Vec<Vec<T>>,
    physical: Option<IonConstants<T>>,
}

/// `xi(z) = int_0^inf exp(-2x) x (x^2 + z^2)^(-5/2) dx`.
pub fn xi<T: Real>(z: T) -> Result<T> {
    if !(z >= T::lit(XI_MIN_ARGUMENT)) || !z.is_finite() {
        return Err(Error::RegimeViolation(format!(
            "kappa*w = {z} is too small; the coupling integral diverges as (kappa*w)^-3"
        )));
    }
    let cutoff = T::lit(XI_CUTOFF);
    let f = |x: T| (-T::lit(2.0) * x).exp() * x * (x * x + z * z).powf(T::lit(-2.5));
    let mut breaks = vec![T::zero()];
    // The integrand peaks near x = z/2 for small z; resolve that scale explicitly.
    for b in [z * T::lit(0.5), z, z * T::lit(4.0)] {
        if b < cutoff {
            breaks.push(b);
        }
    }
    breaks.push(cutoff);
    let opts = QuadOptions { rel_tol: T::lit(1e-10).max(T::epsilon() * T::lit(64.0)), ..QuadOptions::default() };
    Ok(integrate_with_breaks(f, &breaks, &opts)?.value)
}

fn mode_table<T: Real>(basis: &ModeBasis<T>, lambda: T) -> Vec<Vec<T>> {
    (1..=basis.mode_count())
        .map(|alpha| {
            let scale = lambda * basis.x0(alpha) / (basis.hbar() * basis.omega(alpha));
            basis.u_row(alpha).iter().map(|&u| scale * u).collect()
        })
        .collect()
}

/// Derives every ion constant from physical parameters.
pub fn build_ion_model<T: Real>(phys: &IonPhysical<T>, basis: &ModeBasis<T>, a_r: T) -> Result<IonModel<T>> {
    phys.validate()?;
    positive("a_r", a_r)?;
    let hbar = basis.hbar();
    let kappa = phys.kappa(hbar);
    let xi_val = xi(kappa * phys.w)?;
    let k2 = hbar * hbar * kappa * kappa;
    let ka = kappa * a_r;
    let nu = -k2 / (T::lit(2.0) * phys.m_i);
    let gamma = -(k2 / phys.m_i) * (-ka).exp() * (ka + T::one());
    let lambda =
        T::lit(3.0) * phys.q_i * phys.p_r() * phys.w * kappa.powi(4) * xi_val / (T::lit(4.0) * T::PI() * phys.eps0);
    Ok(IonModel {
        lambda,
        half_width: basis.half_width(),
        lambda_mode: mode_table(basis, lambda),
        physical: Some(IonConstants { kappa, nu, gamma, xi: xi_val, a_r }),
    })
}

/// Model specified directly by `lambda`, in the ruler's own units.
pub fn build_dimensionless_model<T: Real>(basis: &ModeBasis<T>, lambda: T) -> Result<IonModel<T>> {
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidParameter { name: "lambda", requirement: "finite and >= 0", value: lambda.as_f64() });
    }
    Ok(IonModel { lambda, half_width: basis.half_width(), lambda_mode: mode_table(basis, lambda), physical: None })
}

impl<T: Real> IonModel<T> {
    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn physical(&self) -> Option<&IonConstants<T>> {
        self.physical.as_ref()
    }

    pub fn mode_count(&self) -> usize {
        self.lambda_mode.len()
    }

    pub fn lambda_mode(&self, alpha: usize, site: i64) -> T {
        self.lambda_mode[alpha - 1][(site + self.half_width) as usize]
    }

    /// `lambda_{alpha,site}` for all modes, index `alpha - 1`.
    pub fn lambda_column(&self, site: i64) -> Result<Vec<T>> {
        if site.abs() > self.half_width {
            return Err(Error::SiteOutOfRange { site, half_width: self.half_width });
        }
        let k = (site + self.half_width) as usize;
        Ok(self.lambda_mode.iter().map(|row| row[k]).collect())
    }

    /// `|gamma / nu| = 2 exp(-kappa a_r) (kappa a_r + 1)`.
    pub fn hopping_ratio(&self) -> Result<T> {
        let c = self.physical.as_ref().ok_or(Error::NoPhysicalConstants)?;
        Ok((c.gamma / c.nu).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
    NotApplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Warn => "warn",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not applicable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub name: String,
    pub condition: String,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub checks: Vec<RegimeCheck>,
}

/// Warning thresholds for conditions the physics states only as `<<`.
pub const HOPPING_RATIO_LIMIT: f64 = 0.05;
pub const SMALLNESS_LIMIT: f64 = 0.1;

impl RegimeReport {
    pub fn worst(&self) -> CheckStatus {
        let rank = |s: CheckStatus| match s {
            CheckStatus::Fail => 3,
            CheckStatus::Warn => 2,
            CheckStatus::Pass => 1,
            CheckStatus::NotApplicable => 0,
        };
        self.checks.iter().map(|c| c.status).max_by_key(|&s| rank(s)).unwrap_or(CheckStatus::NotApplicable)
    }

    pub fn get(&self, name: &str) -> Option<&RegimeCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<16} {:<28} {:>14} {:>12}  status\n", "check", "condition", "value", "threshold");
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
        for c in &self.checks {
            out.push_str(&format!(
                "{:<16} {:<28} {:>14} {:>12}  {}\n",
                c.name,
                c.condition,
                num(c.value),
                num(c.threshold),
                c.status
            ));
        }
        out
    }
}

fn check(
    name: &str,
    condition: &str,
    value: Option<f64>,
    threshold: f64,
    ok: impl Fn(f64) -> bool,
    bad: CheckStatus,
) -> RegimeCheck {
    let status = match value {
        None => CheckStatus::NotApplicable,
        Some(v) if v.is_finite() && ok(v) => CheckStatus::Pass,
        Some(_) => bad,
    };
    RegimeCheck { name: name.into(), condition: condition.into(), value, threshold: Some(threshold), status }
}

/// Checks the approximations behind the model. Never fails; violations are in the report.
pub fn validate_regime<T: Real>(phys: Option<&IonPhysical<T>>, a_r: T, basis: &ModeBasis<T>) -> RegimeReport {
    let a = a_r.as_f64();
    let (kappa, w, l) = match phys {
        Some(p) => (Some(p.kappa(basis.hbar()).as_f64()), Some(p.w.as_f64()), Some(p.l.as_f64())),
        None => (None, None, None),
    };
    let ka = kappa.map(|k| k * a);
    let dx = kappa.map(|k| 1.0 / (2f64.sqrt() * k));
    let ratio = ka.map(|x| 2.0 * (-x).exp() * (x + 1.0));
    let max_sigma = basis.zero_point_sigma().into_iter().map(|s| s.as_f64()).fold(0.0, f64::max);

    let checks = vec![
        check("localisation", "kappa*a_r > 1", ka, 1.0, |v| v > 1.0, CheckStatus::Fail),
        check("ion_width", "1/(sqrt(2)*kappa) < a_r", dx, a, |v| v < a, CheckStatus::Fail),
        check(
            "hopping",
            "|gamma/nu| < 0.05",
            ratio,
            HOPPING_RATIO_LIMIT,
            |v| v < HOPPING_RATIO_LIMIT,
            CheckStatus::Warn,
        ),
        check("ion_distance", "w <= a_r", w, a, |v| v <= a, CheckStatus::Fail),
        check(
            "dipole_size",
            "l < 0.1*w",
            l.zip(w).map(|(l, w)| l / w),
            SMALLNESS_LIMIT,
            |v| v < SMALLNESS_LIMIT,
            CheckStatus::Warn,
        ),
        check(
            "zero_point",
            "max delta_phi < 0.1*w",
            w.map(|w| max_sigma / w),
            SMALLNESS_LIMIT,
            |v| v < SMALLNESS_LIMIT,
            CheckStatus::Warn,
        ),
    ];
    RegimeReport { checks }
}
