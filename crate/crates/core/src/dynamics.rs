//! Exact ion-ruler evolution: the switching integrals `F1`, `F2`, `F3`, coherent
//! branch amplitudes and the ion coherence `C_I`.
//!
//! Everything is computed in the dimensionless mode time `T = Omega_alpha t`, where
//! the exponential switch-on reads `S(T) = 1 - exp(-T/b)` with `b = Omega_alpha Delta t`.
//! The integrals are linear in `lambda_{alpha,n}`, so they are evaluated once per
//! mode and scaled per site.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion::IonModel;
use crate::lattice::ModeBasis;
use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchingProfile<T> {
    /// `S(t) = 1 - exp(-t / delta_t)`.
    Exponential { delta_t: T },
    /// Sudden switch-on, the `delta_t -> 0` limit.
    Step,
}

impl<T: Real> SwitchingProfile<T> {
    /// Slow switching with `Omega_1 delta_t = 50`.
    pub fn slow(basis: &ModeBasis<T>) -> Self {
        SwitchingProfile::Exponential { delta_t: T::lit(50.0) / basis.omega(1) }
    }

    /// Ten switch-on times, the default "long time".
    pub fn settled_time(&self, basis: &ModeBasis<T>) -> T {
        match *self {
            SwitchingProfile::Exponential { delta_t } => T::lit(10.0) * delta_t,
            SwitchingProfile::Step => T::lit(500.0) / basis.omega(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SwitchingProfile::Exponential { delta_t } if !(delta_t > T::zero()) || !delta_t.is_finite() => {
                Err(Error::InvalidParameter { name: "delta_t", requirement: "finite and > 0", value: delta_t.as_f64() })
            }
            _ => Ok(()),
        }
    }

    /// `Omega * delta_t`, zero for a step.
    fn b(&self, omega: T) -> T {
        match *self {
            SwitchingProfile::Exponential { delta_t } => omega * delta_t,
            SwitchingProfile::Step => T::zero(),
        }
    }
}

/// How `F2`, `F3` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FForm {
    /// Adaptive quadrature of the defining integrals.
    Quadrature,
    /// Closed form valid once the switch-on has finished, with `delta_t` corrections.
    Asymptotic,
    /// `F2 = -lambda sin(Omega t)`, `F3 = lambda cos(Omega t)`.
    LongTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FValues<T> {
    pub f1: T,
    pub f2: T,
    pub f3: T,
}

/// `1 - exp(-T/b)` without cancellation for small arguments.
fn switch<T: Real>(tau: T, b: T) -> T {
    if b == T::zero() {
        T::one()
    } else {
        -(-tau / b).exp_m1()
    }
}

/// `int_0^T S cos` in closed form; the inner integral of `F1`.
fn g_closed<T: Real>(tau: T, b: T) -> T {
    if b == T::zero() {
        return tau.sin();
    }
    let r = b * b / (T::one() + b * b);
    tau.sin() - r * ((-tau / b).exp() * (tau.sin() - tau.cos() / b) + T::one() / b)
}

fn panel_breaks<T: Real>(t_end: T) -> Vec<T> {
    let pi = T::PI();
    let panels = (t_end / pi).ceil().to_usize().unwrap_or(0).max(1);
    (0..=panels).map(|k| (T::from_usize_lossy(k) * pi).min(t_end)).collect()
}

fn options<T: Real>() -> QuadOptions<T> {
    QuadOptions {
        rel_tol: T::lit(1e-10).max(T::epsilon() * T::lit(64.0)),
        abs_tol: T::lit(1e-14).max(T::epsilon() * T::lit(1e-4)),
        max_intervals: 1_000_000,
    }
}

/// Unit-coupling integrals `(int S cos, int S sin)` over `[0, T]` by quadrature.
fn unit_integrals<T: Real>(t_end: T, b: T) -> Result<(T, T)> {
    if t_end == T::zero() {
        return Ok((T::zero(), T::zero()));
    }
    let breaks = panel_breaks(t_end);
    let opts = options();
    let c = integrate_with_breaks(|x: T| switch(x, b) * x.cos(), &breaks, &opts)?;
    let s = integrate_with_breaks(|x: T| switch(x, b) * x.sin(), &breaks, &opts)?;
    Ok((c.value, s.value))
}

/// `-2 int_0^T S sin G`, the unit-coupling `F1`.
fn unit_f1<T: Real>(t_end: T, b: T) -> Result<T> {
    if t_end == T::zero() {
        return Ok(T::zero());
    }
    let breaks = panel_breaks(t_end);
    let v = integrate_with_breaks(|x: T| switch(x, b) * x.sin() * g_closed(x, b), &breaks, &options())?;
    Ok(-T::lit(2.0) * v.value)
}

/// Unit-coupling `(int S cos, int S sin)` after the switch-on transient has decayed.
fn unit_asymptotic<T: Real>(t_end: T, b: T) -> (T, T) {
    let d = T::one() + b * b;
    (t_end.sin() - b / d, T::one() - t_end.cos() - b * b / d)
}

fn check_time<T: Real>(t: T) -> Result<()> {
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::InvalidParameter { name: "t", requirement: "finite and >= 0", value: t.as_f64() });
    }
    Ok(())
}

fn check_alpha<T: Real>(alpha: usize, basis: &ModeBasis<T>) -> Result<()> {
    if alpha == 0 || alpha > basis.mode_count() {
        return Err(Error::InvalidParameter { name: "alpha", requirement: "in 1..N-1", value: alpha as f64 });
    }
    Ok(())
}

/// `(F1, F2, F3)` for mode `alpha`, ion site `site` and time `t`, by quadrature.
pub fn eval_f<T: Real>(
    alpha: usize,
    site: i64,
    t: T,
    switching: &SwitchingProfile<T>,
    model: &IonModel<T>,
    basis: &ModeBasis<T>,
) -> Result<FValues<T>> {
    check_alpha(alpha, basis)?;
    check_time(t)?;
    switching.validate()?;
    basis.offset(site)?;
    let lam = model.lambda_mode(alpha, site);
    let omega = basis.omega(alpha);
    let b = switching.b(omega);
    let t_end = omega * t;
    let (ic, is) = unit_integrals(t_end, b)?;
    let f1 = unit_f1(t_end, b)?;
    Ok(FValues { f1: lam * lam * f1, f2: -lam * ic, f3: -lam * is })
}

/// `(F2, F3)` from the post-transient closed forms.
pub fn eval_f_asymptotic<T: Real>(
    alpha: usize,
    site: i64,
    t: T,
    switching: &SwitchingProfile<T>,
    model: &IonModel<T>,
    basis: &ModeBasis<T>,
) -> Result<(T, T)> {
    check_alpha(alpha, basis)?;
    check_time(t)?;
    switching.validate()?;
    basis.offset(site)?;
    let lam = model.lambda_mode(alpha, site);
    let omega = basis.omega(alpha);
    let (ic, is) = unit_asymptotic(omega * t, switching.b(omega));
    Ok((-lam * ic, -lam * is))
}

/// Unit-coupling `(int S cos, int S sin)` for every mode under the chosen form.
fn unit_table<T: Real>(
    t: T,
    switching: &SwitchingProfile<T>,
    basis: &ModeBasis<T>,
    form: FForm,
) -> Result<Vec<(T, T)>> {
    (1..=basis.mode_count())
        .into_par_iter()
        .map(|alpha| {
            let omega = basis.omega(alpha);
            let t_end = omega * t;
            match form {
                FForm::Quadrature => unit_integrals(t_end, switching.b(omega)),
                FForm::Asymptotic => Ok(unit_asymptotic(t_end, switching.b(omega))),
                FForm::LongTime => Ok((t_end.sin(), -t_end.cos())),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchState<T> {
    pub site: i64,
    pub t: T,
    /// Coherent amplitudes, index `alpha - 1`.
    pub g: Vec<Complex<T>>,
    /// Phases `F1 + F2 F3`, index `alpha - 1`.
    pub f: Vec<T>,
}

/// Ruler state conditioned on the ion sitting at `site`: `g = (F3 - i F2) exp(-i Omega t)`.
pub fn branch_state<T: Real>(
    site: i64,
    t: T,
    switching: &SwitchingProfile<T>,
    model: &IonModel<T>,
    basis: &ModeBasis<T>,
) -> Result<BranchState<T>> {
    check_time(t)?;
    switching.validate()?;
    basis.offset(site)?;
    let per_mode: Vec<(Complex<T>, T)> = (1..=basis.mode_count())
        .into_par_iter()
        .map(|alpha| {
            let v = eval_f(alpha, site, t, switching, model, basis)?;
            let phase = Complex::from_polar(T::one(), -basis.omega(alpha) * t);
            Ok((Complex::new(v.f3, -v.f2) * phase, v.f1 + v.f2 * v.f3))
        })
        .collect::<Result<_>>()?;
    let (g, f) = per_mode.into_iter().unzip();
    Ok(BranchState { site, t, g, f })
}

fn check_pair<T: Real>(i1: i64, i2: i64, basis: &ModeBasis<T>) -> Result<()> {
    basis.check_edge_safe(i1)?;
    basis.check_edge_safe(i2)
}

/// Ion coherence between branches at `i1` and `i2` at time `t`.
pub fn coherence_t<T: Real>(
    i1: i64,
    i2: i64,
    t: T,
    switching: &SwitchingProfile<T>,
    model: &IonModel<T>,
    basis: &ModeBasis<T>,
    form: FForm,
) -> Result<T> {
    check_pair(i1, i2, basis)?;
    check_time(t)?;
    switching.validate()?;
    if i1 == i2 {
        return Ok(T::one());
    }
    let table = unit_table(t, switching, basis, form)?;
    let exponent = table
        .iter()
        .enumerate()
        .map(|(k, &(ic, is))| {
            let dl = model.lambda_mode(k + 1, i1) - model.lambda_mode(k + 1, i2);
            // F2 = -lambda ic and F3 = -lambda is, so both differences scale with dl.
            dl * dl * (ic * ic + is * is)
        })
        .sum::<T>();
    Ok((-T::lit(0.5) * exponent).exp())
}

/// Time-independent coherence once the coupling is fully on, written with the
/// bare eigenfunction cosines.
pub fn coherence_longtime<T: Real>(i1: i64, i2: i64, model: &IonModel<T>, basis: &ModeBasis<T>) -> Result<T> {
    check_pair(i1, i2, basis)?;
    let n = basis.n() as i64;
    let nf = T::from_usize_lossy(basis.n());
    let lam = model.lambda();
    let pref = lam * lam / (T::lit(2.0) * basis.hbar() * nf * basis.mass());
    let cosine = |alpha: usize, site: i64| {
        let k = (alpha as i64 * (2 * site + n)).rem_euclid(4 * n);
        (T::PI() * T::from_i64_lossy(k) / (T::lit(2.0) * nf)).cos()
    };
    let exponent = (1..=basis.mode_count())
        .map(|alpha| {
            let d = cosine(alpha, i1) - cosine(alpha, i2);
            pref * d * d / basis.omega(alpha).powi(3)
        })
        .sum::<T>();
    Ok((-exponent).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ion::build_dimensionless_model;
    use crate::lattice::{build_mode_basis, RulerConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn setup(n: usize, s: f64, lambda: f64) -> (ModeBasis<f64>, IonModel<f64>) {
        let b = build_mode_basis(&RulerConfig::dimensionless(n, s)).unwrap();
        let m = build_dimensionless_model(&b, lambda).unwrap();
        (b, m)
    }

    /// Direct closed forms of the defining integrals for exponential switching.
    fn exact_unit(t: f64, b: f64) -> (f64, f64) {
        let r = b * b / (1.0 + b * b);
        let e = (-t / b).exp();
        let c = t.sin() - r * (e * (t.sin() - t.cos() / b) + 1.0 / b);
        let s = 1.0 - t.cos() - r * (1.0 - e * (t.cos() + t.sin() / b));
        (c, s)
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for &(t, b) in &[(0.3, 0.1), (5.0, 2.0), (137.0, 50.0), (1000.0, 7.0)] {
            let (c, s) = unit_integrals(t, b).unwrap();
            let (ce, se) = exact_unit(t, b);
            assert!((c - ce).abs() < 1e-9, "cos part t={t} b={b}: {c} vs {ce}");
            assert!((s - se).abs() < 1e-9, "sin part t={t} b={b}: {s} vs {se}");
        }
    }

    #[test]
    fn step_switching_closed_forms() {
        let t: f64 = 7.3;
        let (c, s) = unit_integrals(t, 0.0).unwrap();
        assert_relative_eq!(c, t.sin(), epsilon = 1e-12);
        assert_relative_eq!(s, 1.0 - t.cos(), epsilon = 1e-12);
        assert_relative_eq!(unit_f1(t, 0.0).unwrap(), -(t - t.sin() * t.cos()), epsilon = 1e-10);
    }

    #[test]
    fn f1_inner_integral_is_consistent() {
        // G is the running integral of S cos, so G(T) must match the quadrature.
        for &(t, b) in &[(3.0f64, 0.5f64), (40.0, 10.0)] {
            assert!((g_closed(t, b) - unit_integrals(t, b).unwrap().0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_time_and_zero_coupling() {
        let (b, m) = setup(11, 0.0, 1.0);
        let sw = SwitchingProfile::slow(&b);
        let v = eval_f(2, 1, 0.0, &sw, &m, &b).unwrap();
        assert_eq!((v.f1, v.f2, v.f3), (0.0, 0.0, 0.0));
        let (b0, m0) = setup(11, 0.0, 0.0);
        let v = eval_f(2, 1, 5.0, &sw, &m0, &b0).unwrap();
        assert_eq!((v.f1, v.f2, v.f3), (0.0, 0.0, 0.0));
        assert!(eval_f(0, 1, 1.0, &sw, &m, &b).is_err());
        assert!(eval_f(1, 1, -1.0, &sw, &m, &b).is_err());
    }

    #[test]
    fn long_time_forms_within_two_percent() {
        let (b, m) = setup(21, 0.0, 0.3);
        let alpha = 3;
        let omega = b.omega(alpha);
        let sw = SwitchingProfile::Exponential { delta_t: 50.0 / omega };
        let t = 500.0 / omega;
        let lam = m.lambda_mode(alpha, 2);
        let v = eval_f(alpha, 2, t, &sw, &m, &b).unwrap();
        assert!((v.f2 + lam * 500f64.sin()).abs() < 0.02 * lam.abs());
        assert!((v.f3 - lam * 500f64.cos()).abs() < 0.02 * lam.abs());
        let (a2, a3) = eval_f_asymptotic(alpha, 2, t, &sw, &m, &b).unwrap();
        // Only the exp(-T/b) = exp(-10) transient separates the two.
        assert!((a2 - v.f2).abs() < 1e-4 * lam.abs());
        assert!((a3 - v.f3).abs() < 1e-4 * lam.abs());
    }

    #[test]
    fn fast_switching_breaks_long_time_form() {
        let (b, m) = setup(21, 0.0, 0.3);
        let alpha = 3;
        let omega = b.omega(alpha);
        let sw = SwitchingProfile::Exponential { delta_t: 0.1 / omega };
        let t = 500.0 / omega;
        let lam = m.lambda_mode(alpha, 2);
        let (_, a3) = eval_f_asymptotic(alpha, 2, t, &sw, &m, &b).unwrap();
        assert!((a3 - lam * 500f64.cos()).abs() > 0.1 * lam.abs());
        let v = eval_f(alpha, 2, t, &sw, &m, &b).unwrap();
        assert!((v.f3 - lam * 500f64.cos()).abs() > 0.1 * lam.abs());
    }

    #[test]
    fn step_asymptote() {
        let (b, m) = setup(11, 0.0, 1.0);
        let (f2, f3) = eval_f_asymptotic(1, 0, 3.0, &SwitchingProfile::Step, &m, &b).unwrap();
        let lam = m.lambda_mode(1, 0);
        let tt = b.omega(1) * 3.0;
        assert_relative_eq!(f2, -lam * tt.sin(), epsilon = 1e-15);
        assert_relative_eq!(f3, lam * (tt.cos() - 1.0), epsilon = 1e-15);
    }

    #[test]
    fn vacuum_branch() {
        let (b, m) = setup(11, 0.0, 0.0);
        let sw = SwitchingProfile::slow(&b);
        let st = branch_state(1, 10.0, &sw, &m, &b).unwrap();
        assert!(st.g.iter().all(|g| g.norm() == 0.0));
        assert!(st.f.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn branch_settles_to_coupling() {
        let (b, m) = setup(41, 1.0, 2.0);
        let sw = SwitchingProfile::slow(&b);
        let t = sw.settled_time(&b);
        let st = branch_state(0, t, &sw, &m, &b).unwrap();
        for (k, g) in st.g.iter().enumerate() {
            let alpha = k + 1;
            let lam = m.lambda_mode(alpha, 0);
            let bb = b.omega(alpha) * 50.0 / b.omega(1);
            // Residual ripple lambda / sqrt(1 + b^2), up to an exp(-10) transient.
            let dev = (g - Complex::new(lam, 0.0)).norm();
            assert!((dev - lam.abs() / (1.0 + bb * bb).sqrt()).abs() <= 1e-4 * lam.abs(), "alpha {alpha}");
            assert!(dev <= 0.0201 * lam.abs());
        }
    }

    #[test]
    fn branch_long_time_tolerance_with_weak_coupling() {
        let (b, m) = setup(21, 1.0, 0.03);
        let sw = SwitchingProfile::slow(&b);
        let st = branch_state(2, sw.settled_time(&b), &sw, &m, &b).unwrap();
        for (k, g) in st.g.iter().enumerate() {
            assert!((g - Complex::new(m.lambda_mode(k + 1, 2), 0.0)).norm() < 1e-3);
        }
    }

    #[test]
    fn mid_switch_amplitude_is_partial() {
        let (b, m) = setup(21, 1.0, 2.0);
        let sw = SwitchingProfile::slow(&b);
        let SwitchingProfile::Exponential { delta_t } = sw else { unreachable!() };
        let st = branch_state(1, delta_t, &sw, &m, &b).unwrap();
        for (k, g) in st.g.iter().enumerate() {
            let lam = m.lambda_mode(k + 1, 1).abs();
            if lam > 0.0 {
                assert!(g.norm() > 0.0 && g.norm() < 1.2 * lam, "alpha {}", k + 1);
            }
        }
    }

    #[test]
    fn long_time_identity() {
        let (b, m) = setup(21, 0.0, 0.3);
        let sw = SwitchingProfile::slow(&b);
        let t = sw.settled_time(&b);
        let c_lt = coherence_longtime(-2, 2, &m, &b).unwrap();
        let c_forms = coherence_t(-2, 2, t, &sw, &m, &b, FForm::LongTime).unwrap();
        assert!((c_lt - c_forms).abs() < 1e-12);
        let c_q = coherence_t(-2, 2, t, &sw, &m, &b, FForm::Quadrature).unwrap();
        assert!((c_q - c_lt).abs() < 0.02);
        assert!(c_lt > 0.0 && c_lt < 1.0);
    }

    #[test]
    fn identical_sites_and_zero_coupling() {
        let (b, m) = setup(21, 0.0, 0.3);
        let sw = SwitchingProfile::slow(&b);
        assert_eq!(coherence_t(3, 3, 7.0, &sw, &m, &b, FForm::Quadrature).unwrap(), 1.0);
        assert_eq!(coherence_longtime(3, 3, &m, &b).unwrap(), 1.0);
        let (b0, m0) = setup(21, 0.0, 0.0);
        assert_eq!(coherence_longtime(-4, 4, &m0, &b0).unwrap(), 1.0);
        assert!(matches!(coherence_longtime(9, 0, &m, &b), Err(Error::EdgeProximity { .. })));
    }

    #[test]
    fn unscaled_ruler_loses_coherence_with_length() {
        let c: Vec<f64> = [11usize, 21, 31, 41]
            .iter()
            .map(|&n| {
                let (b, m) = setup(n, 0.0, 0.3);
                coherence_longtime(-1, 2, &m, &b).unwrap()
            })
            .collect();
        assert!(c.windows(2).all(|w| w[1] <= w[0]), "{c:?}");
    }

    #[test]
    fn scaled_ruler_gains_coherence_with_length() {
        let c: Vec<f64> = [11usize, 21, 31, 41]
            .iter()
            .map(|&n| {
                let (b, m) = setup(n, 1.0, 2.0);
                coherence_longtime(-1, 2, &m, &b).unwrap()
            })
            .collect();
        assert!(c.windows(2).all(|w| w[1] >= w[0]), "{c:?}");
    }

    #[test]
    fn translation_covariance_near_centre() {
        // Low modes dominate and are not translation invariant, so the 1% band only
        // covers shifts of a few sites; the drift then grows steadily toward the edges.
        let (b, m) = setup(101, 0.0, 0.3);
        let base = coherence_longtime(-3, 3, &m, &b).unwrap();
        for d in [-5i64, -2, 1, 4, 5] {
            let c = coherence_longtime(-3 + d, 3 + d, &m, &b).unwrap();
            assert!((c - base).abs() < 0.01 * base, "shift {d}: {c} vs {base}");
        }
        let drift: Vec<f64> = [5i64, 10, 20, 30, 37]
            .iter()
            .map(|&d| (coherence_longtime(-3 + d, 3 + d, &m, &b).unwrap() - base).abs())
            .collect();
        assert!(drift.windows(2).all(|w| w[1] > w[0]), "{drift:?}");
    }

    proptest! {
        #[test]
        fn coherence_bounded_and_symmetric(i1 in -8i64..=8, i2 in -8i64..=8, lambda in 0.0f64..3.0) {
            let (b, m) = setup(21, 0.0, lambda);
            let c12 = coherence_longtime(i1, i2, &m, &b).unwrap();
            let c21 = coherence_longtime(i2, i1, &m, &b).unwrap();
            prop_assert!(c12 > 0.0 && c12 <= 1.0);
            prop_assert!((c12 - c21).abs() <= 1e-15);
        }
    }
}
