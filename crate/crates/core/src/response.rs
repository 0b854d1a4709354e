//! Long-time ruler response: mean dipole displacements and their spread, with the
//! ion at one site or in a two-site superposition.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion::IonModel;
use crate::lattice::ModeBasis;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Single { site: i64 },
    Superposition { i1: i64, i2: i64 },
}

/// Per-site statistics over all `N` sites, left edge first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseProfile<T> {
    pub scenario: Scenario,
    pub sites: Vec<i64>,
    pub mean: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Real> ResponseProfile<T> {
    pub fn at(&self, site: i64) -> Option<(T, T)> {
        let k = self.sites.iter().position(|&s| s == site)?;
        Some((self.mean[k], self.sigma[k]))
    }

    /// Sites where the mean is strictly larger than both neighbours.
    pub fn local_maxima(&self) -> Vec<i64> {
        (1..self.mean.len().saturating_sub(1))
            .filter(|&k| self.mean[k] > self.mean[k - 1] && self.mean[k] > self.mean[k + 1])
            .map(|k| self.sites[k])
            .collect()
    }

    pub fn mean_sum(&self) -> T {
        self.mean.iter().copied().sum()
    }

    /// Writes `n,mean,sigma` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,mean,sigma")?;
        for ((n, m), s) in self.sites.iter().zip(&self.mean).zip(&self.sigma) {
            writeln!(w, "{},{:.11e},{:.11e}", n, m.as_f64(), s.as_f64())?;
        }
        Ok(())
    }
}

/// `sum_alpha u_{alpha,n} x0_alpha c_alpha` at every site.
fn project<T: Real>(basis: &ModeBasis<T>, coeff: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); basis.n()];
    for alpha in 1..=basis.mode_count() {
        let c = basis.x0(alpha) * coeff[alpha - 1];
        for (o, &u) in out.iter_mut().zip(basis.u_row(alpha)) {
            *o = *o + u * c;
        }
    }
    out
}

pub fn response_single<T: Real>(i: i64, model: &IonModel<T>, basis: &ModeBasis<T>) -> Result<ResponseProfile<T>> {
    basis.check_edge_safe(i)?;
    let lam = model.lambda_column(i)?;
    let mean = project(basis, &lam).into_iter().map(|v| T::lit(2.0) * v).collect();
    Ok(ResponseProfile {
        scenario: Scenario::Single { site: i },
        sites: basis.sites().collect(),
        mean,
        sigma: basis.zero_point_sigma(),
    })
}

/// Equal-weight superposition of the ion at `i1` and `i2`.
pub fn response_superposition<T: Real>(
    i1: i64,
    i2: i64,
    model: &IonModel<T>,
    basis: &ModeBasis<T>,
) -> Result<ResponseProfile<T>> {
    basis.check_edge_safe(i1)?;
    basis.check_edge_safe(i2)?;
    let l1 = model.lambda_column(i1)?;
    let l2 = model.lambda_column(i2)?;
    let sum: Vec<T> = l1.iter().zip(&l2).map(|(&a, &b)| a + b).collect();
    let diff: Vec<T> = l1.iter().zip(&l2).map(|(&a, &b)| a - b).collect();
    let spread = project(basis, &diff);
    let sigma = basis.zero_point_sigma().into_iter().zip(&spread).map(|(s, &d)| (s * s + d * d).sqrt()).collect();
    Ok(ResponseProfile {
        scenario: Scenario::Superposition { i1, i2 },
        sites: basis.sites().collect(),
        mean: project(basis, &sum),
        sigma,
    })
}

/// Mean displacement of the dipole at `i_l` in branch `m` (`l, m` in `{1, 2}`).
pub fn mean_at_site_given_branch<T: Real>(
    l: u8,
    m: u8,
    i1: i64,
    i2: i64,
    model: &IonModel<T>,
    basis: &ModeBasis<T>,
) -> Result<T> {
    let pick = |k: u8, name: &'static str| match k {
        1 => Ok(i1),
        2 => Ok(i2),
        _ => Err(Error::InvalidParameter { name, requirement: "1 or 2", value: k as f64 }),
    };
    let at = pick(l, "l")?;
    let branch = pick(m, "m")?;
    basis.check_edge_safe(i1)?;
    basis.check_edge_safe(i2)?;
    let lam = model.lambda_column(branch)?;
    Ok(T::lit(2.0)
        * (1..=basis.mode_count()).map(|alpha| basis.u(alpha, at) * basis.x0(alpha) * lam[alpha - 1]).sum::<T>())
}
