//! Run configuration, presets and up-front grid validation.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use qruler_core::ion::{build_dimensionless_model, build_ion_model, IonModel, IonPhysical};
use qruler_core::lattice::{build_mode_basis, ModeBasis, RulerConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Modes,
    CoherenceSweep,
    Response,
    CstarSweep,
    Validate,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Modes => "modes",
            Scenario::CoherenceSweep => "coherence-sweep",
            Scenario::Response => "response",
            Scenario::CstarSweep => "cstar-sweep",
            Scenario::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Flat key-value run description. Every list is one grid axis.
///
/// The ion is given either as a list of dimensionless couplings `lambda` or
/// physically through all of `m_i, q_i, q, l, w, eps0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    /// Dipole counts.
    pub n: Vec<usize>,
    pub s: f64,
    pub m_r0: f64,
    pub k_r0: f64,
    pub a_r: f64,
    pub hbar: f64,
    pub lambda: Vec<f64>,
    pub m_i: Option<f64>,
    pub q_i: Option<f64>,
    pub q: Option<f64>,
    pub l: Option<f64>,
    pub w: Option<f64>,
    pub eps0: Option<f64>,
    /// Single ion sites for `response`.
    pub sites: Vec<i64>,
    /// Superposition site pairs for `response`.
    pub pairs: Vec<[i64; 2]>,
    /// Site separations for the two sweeps.
    pub separations: Vec<i64>,
    /// Box half-widths in units of the zero-point spread, for `cstar-sweep`.
    pub c: Vec<f64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            n: Vec::new(),
            s: 0.0,
            m_r0: 1.0,
            k_r0: 1.0,
            a_r: 1.0,
            hbar: 1.0,
            lambda: Vec::new(),
            m_i: None,
            q_i: None,
            q: None,
            l: None,
            w: None,
            eps0: None,
            sites: Vec::new(),
            pairs: Vec::new(),
            separations: Vec::new(),
            c: Vec::new(),
            format: None,
            out: None,
        }
    }
}

pub const PRESETS: &[&str] =
    &["fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5b", "fig6", "fig6-strong", "dimensionless", "kappa5"];

/// Odd dipole counts of the coherence figure.
fn fig3_n() -> Vec<usize> {
    (11..=41).step_by(2).collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("invalid run configuration")
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn preset(name: &str) -> anyhow::Result<Self> {
        let base = Self::default();
        let ruler41 = |scenario, lambda: f64| Self {
            scenario: Some(scenario),
            n: vec![41],
            s: 1.0,
            lambda: vec![lambda],
            ..Self::default()
        };
        Ok(match name {
            "fig3a" => Self {
                scenario: Some(Scenario::CoherenceSweep),
                n: fig3_n(),
                lambda: vec![0.3],
                separations: (1..=6).collect(),
                ..base
            },
            "fig3b" => Self {
                scenario: Some(Scenario::CoherenceSweep),
                n: fig3_n(),
                s: 1.0,
                lambda: vec![2.0],
                separations: (1..=6).collect(),
                ..base
            },
            "fig4a" => Self { sites: vec![0, -5], ..ruler41(Scenario::Response, 2.0) },
            "fig4b" => Self { sites: vec![0, -5], ..ruler41(Scenario::Response, 25.0) },
            "fig5a" => Self { pairs: vec![[-5, 5]], ..ruler41(Scenario::Response, 2.0) },
            "fig5b" => Self { pairs: vec![[-5, 5]], ..ruler41(Scenario::Response, 25.0) },
            "fig6" => Self { separations: (2..=14).collect(), c: vec![0.1], ..ruler41(Scenario::CstarSweep, 2.0) },
            "fig6-strong" => Self { separations: vec![2], c: vec![0.1], ..ruler41(Scenario::CstarSweep, 25.0) },
            "dimensionless" => ruler41(Scenario::Validate, 2.0),
            // kappa = 5 in units with a_r = 1, so kappa * a_r = 5.
            "kappa5" => Self {
                scenario: Some(Scenario::Validate),
                n: vec![41],
                s: 1.0,
                m_i: Some(125.0 * std::f64::consts::PI),
                q_i: Some(1.0),
                q: Some(1.0),
                l: Some(0.04),
                w: Some(0.5),
                eps0: Some(1.0),
                ..base
            },
            other => bail!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
        })
    }

    pub fn ruler(&self, n: usize) -> RulerConfig<f64> {
        RulerConfig { n, m_r0: self.m_r0, k_r0: self.k_r0, a_r: self.a_r, s: self.s, hbar: self.hbar }
    }

    /// The physical ion, if any of its constants is set.
    pub fn ion(&self) -> anyhow::Result<Option<IonPhysical<f64>>> {
        let fields =
            [("m_i", self.m_i), ("q_i", self.q_i), ("q", self.q), ("l", self.l), ("w", self.w), ("eps0", self.eps0)];
        if fields.iter().all(|(_, v)| v.is_none()) {
            return Ok(None);
        }
        let get = |k: usize| fields[k].1.ok_or_else(|| anyhow!("physical ion needs `{}` as well", fields[k].0));
        if !self.lambda.is_empty() {
            bail!("give either `lambda` or the physical ion constants, not both");
        }
        let ion = IonPhysical { m_i: get(0)?, q_i: get(1)?, q: get(2)?, l: get(3)?, w: get(4)?, eps0: get(5)? };
        ion.validate()?;
        Ok(Some(ion))
    }

    /// Number of couplings on the grid; a physical ion counts as one.
    fn couplings(&self, ion: &Option<IonPhysical<f64>>) -> Vec<Option<f64>> {
        match ion {
            Some(_) => vec![None],
            None => self.lambda.iter().map(|&l| Some(l)).collect(),
        }
    }

    /// Checks every grid entry the scenario will touch and builds the rulers and couplings.
    pub fn plan(&self, scenario: Scenario) -> anyhow::Result<Plan> {
        if let Some(s) = self.scenario {
            if s != scenario {
                bail!("configuration is for `{s}`, not `{scenario}`");
            }
        }
        let ion = self.ion()?;
        for &lam in &self.lambda {
            if !lam.is_finite() {
                bail!("grid entry lambda={lam}: must be finite");
            }
        }
        for &c in &self.c {
            if !(c > 0.0 && c.is_finite()) {
                bail!("grid entry c={c}: must be finite and > 0");
            }
        }
        for &sep in &self.separations {
            if sep < 1 {
                bail!("grid entry separation={sep}: must be at least 1");
            }
        }
        let needs_coupling = !matches!(scenario, Scenario::Modes | Scenario::Validate);
        let mut rulers = Vec::with_capacity(self.n.len());
        for &n in &self.n {
            let basis = build_mode_basis(&self.ruler(n)).with_context(|| format!("grid entry N={n}"))?;
            let mut models = Vec::new();
            if needs_coupling {
                for lam in self.couplings(&ion) {
                    let model = match lam {
                        Some(l) => build_dimensionless_model(&basis, l),
                        None => build_ion_model(ion.as_ref().expect("physical ion"), &basis, self.a_r),
                    }
                    .with_context(|| format!("grid entry N={n}"))?;
                    models.push(model);
                }
            }
            let sites = |i: i64| basis.check_edge_safe(i).with_context(|| format!("grid entry N={n}, site {i}"));
            match scenario {
                Scenario::CoherenceSweep | Scenario::CstarSweep => {
                    for &sep in &self.separations {
                        let (i1, i2) = pair_for_separation(sep);
                        sites(i1)?;
                        sites(i2)?;
                    }
                }
                Scenario::Response => {
                    for &i in self.sites.iter().chain(self.pairs.iter().flatten()) {
                        sites(i)?;
                    }
                }
                Scenario::Modes | Scenario::Validate => {}
            }
            rulers.push(Ruler { basis, models });
        }
        Ok(Plan { ion, rulers })
    }
}

/// Site pair placed symmetrically about the ruler centre, left site first.
pub fn pair_for_separation(sep: i64) -> (i64, i64) {
    let i1 = -(sep / 2);
    (i1, i1 + sep)
}

pub struct Ruler {
    pub basis: ModeBasis<f64>,
    /// One model per coupling, in grid order.
    pub models: Vec<IonModel<f64>>,
}

/// A validated grid, ready to run.
pub struct Plan {
    pub ion: Option<IonPhysical<f64>>,
    pub rulers: Vec<Ruler>,
}
