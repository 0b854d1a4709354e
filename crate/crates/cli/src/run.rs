//! The experiment subcommands. Each returns its table in grid order.

use anyhow::Context;
use qruler_core::dynamics::coherence_longtime;
use qruler_core::ion::validate_regime;
use qruler_core::measurement::cstar;
use qruler_core::response::{response_single, response_superposition, ResponseProfile};
use rayon::prelude::*;

use crate::config::{pair_for_separation, Plan, RunConfig, Scenario};
use crate::table::{Cell, Table};

/// Grid points are evaluated in parallel and collected in order.
fn par_rows<J, F>(jobs: Vec<J>, f: F) -> anyhow::Result<Vec<Vec<Cell>>>
where
    J: Send + Sync,
    F: Fn(&J) -> anyhow::Result<Vec<Vec<Cell>>> + Send + Sync,
{
    let parts: Vec<anyhow::Result<Vec<Vec<Cell>>>> = jobs.par_iter().map(f).collect();
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}

pub fn run_modes(cfg: &RunConfig) -> anyhow::Result<Table> {
    let plan = cfg.plan(Scenario::Modes)?;
    let mut t = Table::new(&["N", "alpha", "n", "u", "omega"]);
    for r in &plan.rulers {
        let b = &r.basis;
        for alpha in 1..=b.mode_count() {
            for (site, &u) in b.sites().zip(b.u_row(alpha)) {
                t.push(vec![b.n().into(), alpha.into(), site.into(), u.into(), b.omega(alpha).into()]);
            }
        }
    }
    Ok(t)
}

/// Long-time ion coherence over dipole counts, couplings and separations.
pub fn run_coherence_sweep(cfg: &RunConfig) -> anyhow::Result<Table> {
    let plan = cfg.plan(Scenario::CoherenceSweep)?;
    let jobs = grid(&plan, &cfg.separations);
    let rows = par_rows(jobs, |&(k, m, sep)| {
        let r = &plan.rulers[k];
        let model = &r.models[m];
        let (i1, i2) = pair_for_separation(sep);
        let c = coherence_longtime(i1, i2, model, &r.basis)
            .with_context(|| format!("N={}, separation={sep}", r.basis.n()))?;
        Ok(vec![vec![r.basis.n().into(), model.lambda().into(), i1.into(), i2.into(), cfg.s.into(), c.into()]])
    })?;
    Ok(Table { header: vec!["N", "lambda", "i1", "i2", "s", "C_I"], rows })
}

/// Mean displacement and spread profiles, single sites first, then pairs.
pub fn run_response(cfg: &RunConfig) -> anyhow::Result<Table> {
    let plan = cfg.plan(Scenario::Response)?;
    let mut jobs = Vec::new();
    for (k, r) in plan.rulers.iter().enumerate() {
        for m in 0..r.models.len() {
            jobs.extend(cfg.sites.iter().map(|&i| (k, m, i, i)));
            jobs.extend(cfg.pairs.iter().map(|&[i1, i2]| (k, m, i1, i2)));
        }
    }
    let single = cfg.sites.len();
    let per_model = single + cfg.pairs.len();
    let rows = par_rows(jobs.into_iter().enumerate().collect(), |&(idx, (k, m, i1, i2))| {
        let r = &plan.rulers[k];
        let model = &r.models[m];
        let p: ResponseProfile<f64> = if idx % per_model < single {
            response_single(i1, model, &r.basis)?
        } else {
            response_superposition(i1, i2, model, &r.basis)?
        };
        Ok(p.sites
            .iter()
            .zip(&p.mean)
            .zip(&p.sigma)
            .map(|((&n, &mean), &sigma)| {
                vec![
                    r.basis.n().into(),
                    model.lambda().into(),
                    i1.into(),
                    i2.into(),
                    n.into(),
                    mean.into(),
                    sigma.into(),
                ]
            })
            .collect())
    })?;
    Ok(Table { header: vec!["N", "lambda", "i1", "i2", "n", "mean", "sigma"], rows })
}

/// Joint measurement coherence over separations and box widths.
pub fn run_cstar_sweep(cfg: &RunConfig) -> anyhow::Result<Table> {
    let plan = cfg.plan(Scenario::CstarSweep)?;
    let mut jobs = Vec::new();
    for (k, m, sep) in grid(&plan, &cfg.separations) {
        jobs.extend(cfg.c.iter().map(|&c| (k, m, c, sep)));
    }
    let rows = par_rows(jobs, |&(k, m, c, sep)| {
        let r = &plan.rulers[k];
        let model = &r.models[m];
        let (i1, i2) = pair_for_separation(sep);
        let rep =
            cstar(i1, i2, c, model, &r.basis).with_context(|| format!("N={}, c={c}, separation={sep}", r.basis.n()))?;
        Ok(vec![vec![r.basis.n().into(), model.lambda().into(), c.into(), sep.into(), rep.cstar.into()]])
    })?;
    Ok(Table { header: vec!["N", "lambda", "c", "separation", "cstar"], rows })
}

/// Regime checks per dipole count. Failed checks are reported, not raised.
pub fn run_validate(cfg: &RunConfig) -> anyhow::Result<Table> {
    let plan = cfg.plan(Scenario::Validate)?;
    let mut t = Table::new(&["N", "check", "condition", "value", "threshold", "status"]);
    for r in &plan.rulers {
        let report = validate_regime(plan.ion.as_ref(), cfg.a_r, &r.basis);
        for c in report.checks {
            t.push(vec![
                r.basis.n().into(),
                c.name.into(),
                c.condition.into(),
                c.value.into(),
                c.threshold.into(),
                c.status.to_string().into(),
            ]);
        }
    }
    Ok(t)
}

/// `(ruler, model, separation)` in nested grid order.
fn grid(plan: &Plan, separations: &[i64]) -> Vec<(usize, usize, i64)> {
    let mut jobs = Vec::new();
    for (k, r) in plan.rulers.iter().enumerate() {
        for m in 0..r.models.len() {
            jobs.extend(separations.iter().map(|&s| (k, m, s)));
        }
    }
    jobs
}

pub fn run(scenario: Scenario, cfg: &RunConfig) -> anyhow::Result<Table> {
    match scenario {
        Scenario::Modes => run_modes(cfg),
        Scenario::CoherenceSweep => run_coherence_sweep(cfg),
        Scenario::Response => run_response(cfg),
        Scenario::CstarSweep => run_cstar_sweep(cfg),
        Scenario::Validate => run_validate(cfg),
    }
}
