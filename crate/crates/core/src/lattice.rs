//! Free ruler: normal modes of an open chain of `N` equal masses and springs.
//!
//! Sites carry the symmetric labels `n = -(N-1)/2 ..= (N-1)/2` and modes run over
//! `alpha = 1 ..= N-1`. The centre-of-mass mode is never stored, so every
//! displacement built from the basis satisfies `sum_n phi_n = 0` by construction.
//! The reduced coordinates drop the left-edge site, whose displacement is fixed by
//! that constraint.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sites closer than this to either edge are refused by the ion-facing routines.
pub const EDGE_MARGIN: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulerConfig<T> {
    /// Number of dipoles, odd and at least 3.
    pub n: usize,
    pub m_r0: T,
    pub k_r0: T,
    pub a_r: T,
    /// Mass and stiffness are both multiplied by `N^s`.
    pub s: T,
    pub hbar: T,
}

impl<T: Real> RulerConfig<T> {
    /// Units with `hbar = m_r0 = k_r0 = a_r = 1`.
    pub fn dimensionless(n: usize, s: T) -> Self {
        Self { n, m_r0: T::one(), k_r0: T::one(), a_r: T::one(), s, hbar: T::one() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 || self.n.is_multiple_of(2) {
            return Err(Error::InvalidDipoleCount(self.n));
        }
        positive("m_r0", self.m_r0)?;
        positive("k_r0", self.k_r0)?;
        positive("a_r", self.a_r)?;
        positive("hbar", self.hbar)?;
        if !(self.s >= T::zero()) || !self.s.is_finite() {
            return Err(Error::InvalidParameter { name: "s", requirement: "finite and >= 0", value: self.s.as_f64() });
        }
        Ok(())
    }

    fn scale(&self) -> T {
        T::from_usize_lossy(self.n).powf(self.s)
    }

    pub fn mass(&self) -> T {
        self.scale() * self.m_r0
    }

    pub fn stiffness(&self) -> T {
        self.scale() * self.k_r0
    }
}

pub(crate) fn positive<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, requirement: "finite and > 0", value: v.as_f64() })
    }
}

/// Precomputed mode tables. Row `alpha - 1` holds mode `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis<T> {
    cfg: RulerConfig<T>,
    omega_r: T,
    omega: Vec<T>,
    u: Vec<Vec<T>>,
    u_tilde: Vec<Vec<T>>,
    x0: Vec<T>,
}

pub fn build_mode_basis<T: Real>(cfg: &RulerConfig<T>) -> Result<ModeBasis<T>> {
    cfg.validate()?;
    let n = cfg.n;
    let nf = T::from_usize_lossy(n);
    let m_r = cfg.mass();
    let k_r = cfg.stiffness();
    positive("m_r", m_r)?;
    positive("k_r", k_r)?;
    let omega_r = (k_r / m_r).sqrt();
    let norm = (T::lit(2.0) / nf).sqrt();
    let half = (n as i64 - 1) / 2;

    let mut omega = Vec::with_capacity(n - 1);
    let mut u = Vec::with_capacity(n - 1);
    let mut u_tilde = Vec::with_capacity(n - 1);
    let mut x0 = Vec::with_capacity(n - 1);
    for alpha in 1..n {
        let w = T::lit(2.0) * omega_r * (T::from_usize_lossy(alpha) * T::PI() / (T::lit(2.0) * nf)).sin();
        // cos(alpha pi (n + N/2) / N) with the angle reduced exactly in integers first.
        let row: Vec<T> = (-half..=half)
            .map(|site| {
                let k = (alpha as i64 * (2 * site + n as i64)).rem_euclid(4 * n as i64);
                norm * (T::PI() * T::from_i64_lossy(k) / (T::lit(2.0) * nf)).cos()
            })
            .collect();
        let left = row[0];
        u_tilde.push(row[1..].iter().map(|&v| v - left).collect());
        u.push(row);
        x0.push((cfg.hbar / (T::lit(2.0) * m_r * w)).sqrt());
        omega.push(w);
    }
    Ok(ModeBasis { cfg: *cfg, omega_r, omega, u, u_tilde, x0 })
}

impl<T: Real> ModeBasis<T> {
    pub fn config(&self) -> &RulerConfig<T> {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn mode_count(&self) -> usize {
        self.cfg.n - 1
    }

    /// `(N-1)/2`, the largest site label.
    pub fn half_width(&self) -> i64 {
        (self.cfg.n as i64 - 1) / 2
    }

    pub fn hbar(&self) -> T {
        self.cfg.hbar
    }

    pub fn mass(&self) -> T {
        self.cfg.mass()
    }

    pub fn stiffness(&self) -> T {
        self.cfg.stiffness()
    }

    pub fn omega_r(&self) -> T {
        self.omega_r
    }

    /// Mode frequencies, index `alpha - 1`.
    pub fn omegas(&self) -> &[T] {
        &self.omega
    }

    pub fn omega(&self, alpha: usize) -> T {
        self.omega[alpha - 1]
    }

    /// Zero-point widths, index `alpha - 1`.
    pub fn x0s(&self) -> &[T] {
        &self.x0
    }

    pub fn x0(&self, alpha: usize) -> T {
        self.x0[alpha - 1]
    }

    /// Eigenfunction row for mode `alpha` over all `N` sites, left edge first.
    pub fn u_row(&self, alpha: usize) -> &[T] {
        &self.u[alpha - 1]
    }

    /// Reduced row over the `N-1` kept sites.
    pub fn u_tilde_row(&self, alpha: usize) -> &[T] {
        &self.u_tilde[alpha - 1]
    }

    pub fn u(&self, alpha: usize, site: i64) -> T {
        self.u[alpha - 1][self.offset_unchecked(site)]
    }

    fn offset_unchecked(&self, site: i64) -> usize {
        (site + self.half_width()) as usize
    }

    /// 0-based storage offset of a site label.
    pub fn offset(&self, site: i64) -> Result<usize> {
        let h = self.half_width();
        if site.abs() > h {
            return Err(Error::SiteOutOfRange { site, half_width: h });
        }
        Ok(self.offset_unchecked(site))
    }

    /// Offset into the reduced coordinates; the left edge has none.
    pub fn reduced_offset(&self, site: i64) -> Result<usize> {
        match self.offset(site)? {
            0 => Err(Error::EliminatedSite(site)),
            k => Ok(k - 1),
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        let h = self.half_width();
        -h..=h
    }

    /// Refuses sites within `EDGE_MARGIN` of either end.
    pub fn check_edge_safe(&self, site: i64) -> Result<()> {
        let h = self.half_width();
        self.offset(site)?;
        if site.abs() > h - EDGE_MARGIN {
            return Err(Error::EdgeProximity { site, half_width: h, margin: EDGE_MARGIN });
        }
        Ok(())
    }

    /// Free ground-state displacement uncertainty at every site.
    pub fn zero_point_sigma(&self) -> Vec<T> {
        (0..self.cfg.n)
            .map(|k| self.u.iter().zip(&self.x0).map(|(row, &x0)| (row[k] * x0).powi(2)).sum::<T>().sqrt())
            .collect()
    }

    pub fn zero_point_sigma_at(&self, site: i64) -> Result<T> {
        let k = self.offset(site)?;
        Ok(self.u.iter().zip(&self.x0).map(|(row, &x0)| (row[k] * x0).powi(2)).sum::<T>().sqrt())
    }

    /// Writes `alpha,n,u,omega` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "alpha,n,u,omega")?;
        for alpha in 1..self.cfg.n {
            for site in self.sites() {
                writeln!(
                    w,
                    "{},{},{:.11e},{:.11e}",
                    alpha,
                    site,
                    self.u(alpha, site).as_f64(),
                    self.omega(alpha).as_f64()
                )?;
            }
        }
        Ok(())
    }
}

/// `phi_n = sum_alpha u_{alpha,n} x_alpha` over all `N` sites.
pub fn local_from_modes<T: Real>(basis: &ModeBasis<T>, x: &[T]) -> Result<Vec<T>> {
    let modes = basis.mode_count();
    if x.len() != modes {
        return Err(Error::LengthMismatch { expected: modes, got: x.len() });
    }
    let mut phi = vec![T::zero(); basis.n()];
    for (row, &xa) in basis.u.iter().zip(x) {
        for (p, &v) in phi.iter_mut().zip(row) {
            *p = *p + v * xa;
        }
    }
    Ok(phi)
}

/// `x_alpha = sum_n u~_{alpha,n} phi_n` from the reduced coordinates.
pub fn modes_from_local<T: Real>(basis: &ModeBasis<T>, phi_reduced: &[T]) -> Result<Vec<T>> {
    let modes = basis.mode_count();
    if phi_reduced.len() != modes {
        return Err(Error::LengthMismatch { expected: modes, got: phi_reduced.len() });
    }
    Ok(basis
        .u_tilde
        .iter()
        .map(|row| row.iter().zip(phi_reduced).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
        .collect())
}

/// Restores the left-edge displacement so that all `N` sites sum to zero.
pub fn complete_local<T: Real>(basis: &ModeBasis<T>, phi_reduced: &[T]) -> Result<Vec<T>> {
    let modes = basis.mode_count();
    if phi_reduced.len() != modes {
        return Err(Error::LengthMismatch { expected: modes, got: phi_reduced.len() });
    }
    let left = -phi_reduced.iter().copied().sum::<T>();
    Ok(std::iter::once(left).chain(phi_reduced.iter().copied()).collect())
}

/// Drops the left-edge entry of a full displacement vector.
pub fn reduce_local<T: Real>(basis: &ModeBasis<T>, phi: &[T]) -> Result<Vec<T>> {
    if phi.len() != basis.n() {
        return Err(Error::LengthMismatch { expected: basis.n(), got: phi.len() });
    }
    Ok(phi[1..].to_vec())
}

/// Largest residual of the open-chain equations of motion over all modes and sites.
pub fn check_discrete_eom<T: Real>(basis: &ModeBasis<T>) -> T {
    discrete_eom_residual(&basis.u, &basis.omega, basis.omega_r)
}

/// Residual for arbitrary tables, so corrupted input can be fed to it.
pub fn discrete_eom_residual<T: Real>(u: &[Vec<T>], omega: &[T], omega_r: T) -> T {
    let w2 = omega_r * omega_r;
    let mut worst = T::zero();
    for (row, &om) in u.iter().zip(omega) {
        let o2 = om * om;
        let last = row.len() - 1;
        for k in 0..row.len() {
            let coupling = if k == 0 {
                row[1] - row[0]
            } else if k == last {
                row[last - 1] - row[last]
            } else {
                row[k - 1] - T::lit(2.0) * row[k] + row[k + 1]
            };
            let r = (-o2 * row[k] - w2 * coupling).abs();
            worst = worst.max(r);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn basis(n: usize, s: f64) -> ModeBasis<f64> {
        build_mode_basis(&RulerConfig::dimensionless(n, s)).unwrap()
    }

    #[test]
    fn three_site_frequencies() {
        let b = basis(3, 0.0);
        assert_abs_diff_eq!(b.omega(1), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.omega(2), 3f64.sqrt(), epsilon = 1e-15);
        assert!(check_discrete_eom(&b) < 1e-12);
    }

    #[test]
    fn orthonormal_and_zero_sum() {
        for n in [3usize, 5, 11, 41, 101] {
            let b = basis(n, 0.0);
            for a in 1..n {
                let ra = b.u_row(a);
                assert!(ra.iter().sum::<f64>().abs() < 1e-12, "N={n} alpha={a}");
                for c in 1..n {
                    let dot: f64 = ra.iter().zip(b.u_row(c)).map(|(x, y)| x * y).sum();
                    let e = if a == c { 1.0 } else { 0.0 };
                    assert!((dot - e).abs() < 1e-12, "N={n} ({a},{c}) {dot}");
                }
            }
            assert!(check_discrete_eom(&b) < 1e-10);
            assert!(b.omegas().windows(2).all(|w| w[1] > w[0]));
            assert!(b.omega(n - 1) < 2.0 * b.omega_r());
        }
    }

    #[test]
    fn reflection_parity() {
        let b = basis(11, 0.0);
        for a in 1..11 {
            let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
            for site in b.sites() {
                assert_abs_diff_eq!(b.u(a, -site), sign * b.u(a, site), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn corrupted_table_is_caught() {
        let b = basis(11, 0.0);
        let mut u = b.u.clone();
        u[3][4] += 1e-3;
        assert!(discrete_eom_residual(&u, &b.omega, b.omega_r) > 1e-4);
    }

    #[test]
    fn even_or_bad_config_rejected() {
        assert_eq!(build_mode_basis(&RulerConfig::<f64>::dimensionless(4, 0.0)), Err(Error::InvalidDipoleCount(4)));
        assert!(build_mode_basis(&RulerConfig::<f64>::dimensionless(1, 0.0)).is_err());
        let mut cfg = RulerConfig::<f64>::dimensionless(5, 0.0);
        cfg.m_r0 = 0.0;
        assert!(matches!(build_mode_basis(&cfg), Err(Error::InvalidParameter { name: "m_r0", .. })));
        cfg.m_r0 = 1.0;
        cfg.k_r0 = -1.0;
        assert!(build_mode_basis(&cfg).is_err());
    }

    #[test]
    fn unit_vector_gives_basis_column() {
        let b = basis(7, 0.0);
        let mut x = vec![0.0; 6];
        assert!(local_from_modes(&b, &x).unwrap().iter().all(|&v| v == 0.0));
        x[2] = 1.0;
        let phi = local_from_modes(&b, &x).unwrap();
        assert_eq!(phi, b.u_row(3));
        assert!(local_from_modes(&b, &[1.0]).is_err());
        assert!(modes_from_local(&b, &[1.0; 7]).is_err());
    }

    #[test]
    fn equal_reduced_coordinates_complete_consistently() {
        let b = basis(9, 0.0);
        let phi_r = vec![0.3; 8];
        let full = complete_local(&b, &phi_r).unwrap();
        assert_abs_diff_eq!(full.iter().sum::<f64>(), 0.0, epsilon = 1e-14);
        let x = modes_from_local(&b, &phi_r).unwrap();
        let back = local_from_modes(&b, &x).unwrap();
        for (p, q) in full.iter().zip(&back) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_point_width_shrinks_with_scaled_length() {
        let x: Vec<f64> = [11usize, 21, 41].iter().map(|&n| basis(n, 1.0).x0(1)).collect();
        assert!(x[0] > x[1] && x[1] > x[2], "{x:?}");
    }

    #[test]
    fn floppy_edges_when_unscaled() {
        for n in [11usize, 21, 41] {
            let b = basis(n, 0.0);
            let h = b.half_width();
            assert!(b.zero_point_sigma_at(h).unwrap() > b.zero_point_sigma_at(0).unwrap());
        }
    }

    #[test]
    fn site_bookkeeping() {
        let b = basis(7, 0.0);
        assert_eq!(b.offset(-3), Ok(0));
        assert_eq!(b.reduced_offset(-2), Ok(0));
        assert_eq!(b.reduced_offset(-3), Err(Error::EliminatedSite(-3)));
        assert!(b.offset(4).is_err());
        assert!(b.check_edge_safe(1).is_ok());
        assert!(matches!(b.check_edge_safe(2), Err(Error::EdgeProximity { .. })));
    }

    #[test]
    fn csv_dump_shape() {
        let b = basis(3, 0.0);
        let mut out = Vec::new();
        b.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "alpha,n,u,omega");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines[1].starts_with("1,-1,"));
    }

    #[test]
    fn single_precision_basis() {
        let b = build_mode_basis(&RulerConfig::<f32>::dimensionless(11, 0.0)).unwrap();
        let dot: f32 = b.u_row(2).iter().map(|v| v * v).sum();
        assert!((dot - 1.0).abs() < 1e-5);
        assert!(check_discrete_eom(&b) < 1e-5);
    }

    proptest! {
        #[test]
        fn round_trip(half in 1usize..8, seed in proptest::collection::vec(-2.0f64..2.0, 16)) {
            let n = 2 * half + 1;
            let b = basis(n, 0.0);
            let x: Vec<f64> = seed.iter().cycle().take(n - 1).copied().collect();
            let phi = local_from_modes(&b, &x).unwrap();
            prop_assert!(phi.iter().sum::<f64>().abs() < 1e-10);
            let back = modes_from_local(&b, &reduce_local(&b, &phi).unwrap()).unwrap();
            for (p, q) in x.iter().zip(&back) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
