//! Cause-specific hazards framework.
//!
//! Every permitted transition (r, s) carries its own parametric latent-time
//! distribution with its own parameters, so the multi-state likelihood
//! factorises into a product of transition-specific survival likelihoods:
//! each transition is fitted independently on the dataset produced by
//! [`split_by_transition`].
//!
//! Simulation draws one latent time per destination; the earliest finite
//! draw is the event that happens. Cure distributions may return "never",
//! and a destination that never fires models a subpopulation at negligible
//! risk of that event.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::dist::{Dist, Draw, LinkedDist};
use crate::error::{Error, Result};
use crate::inference::{aic, maximize, OptimControls, OptimResult};
use crate::model::{
    split_by_transition, Dataset, ModelStructure, Observation, Status, Status3Scope,
    TransitionDataset,
};

/// Per-transition distribution assignments for a CSH model.
pub type CshSpec = BTreeMap<(usize, usize), LinkedDist>;

/// Reject specs that would break the model's semantics: every transition in
/// the structure needs a distribution, and transitions into the discharge
/// state must not be cure-wrapped (everyone eventually leaves hospital, and
/// simulation relies on at least one competitor that always fires).
pub fn validate_csh_spec(structure: &ModelStructure, spec: &CshSpec) -> Result<()> {
    for &(r, s) in structure.transitions() {
        let ld = spec.get(&(r, s)).ok_or_else(|| {
            Error::Config(format!(
                "no distribution specified for transition {} -> {}",
                structure.state_name(r),
                structure.state_name(s)
            ))
        })?;
        if ld.cure && Some(s) == structure.discharge_state() {
            return Err(Error::Config(format!(
                "cure distribution not allowed on eventually-certain transition {} -> {}",
                structure.state_name(r),
                structure.state_name(s)
            )));
        }
    }
    for &(r, s) in spec.keys() {
        if !structure.has_transition(r, s) {
            return Err(Error::Config(format!(
                "spec references transition {r} -> {s} not in the structure"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Transition-specific likelihood
// ---------------------------------------------------------------------------

/// Rows of one transition dataset grouped by distinct covariate profile, so
/// each likelihood evaluation resolves the distribution once per profile.
pub struct TransitionLikelihood {
    /// (covariate row, (time, event) items)
    groups: Vec<(Vec<f64>, Vec<(f64, bool)>)>,
    pub n_rows: usize,
    pub n_events: usize,
}

impl TransitionLikelihood {
    pub fn new(td: &TransitionDataset, dataset: &Dataset) -> TransitionLikelihood {
        let mut groups: BTreeMap<Vec<u64>, (Vec<f64>, Vec<(f64, bool)>)> = BTreeMap::new();
        for row in &td.rows {
            let cov = &dataset.rows[row.obs_index];
            let key: Vec<u64> = cov.iter().map(|v| v.to_bits()).collect();
            groups
                .entry(key)
                .or_insert_with(|| (cov.clone(), Vec::new()))
                .1
                .push((row.time, row.event));
        }
        TransitionLikelihood {
            groups: groups.into_values().collect(),
            n_rows: td.rows.len(),
            n_events: td.n_events(),
        }
    }

    /// Log-likelihood of the transition model at flattened coefficients `x`.
    pub fn loglik(&self, template: &LinkedDist, x: &[f64]) -> Result<f64> {
        let mut model = template.clone();
        model.set_flat(x);
        let mut total = 0.0;
        for (cov, items) in &self.groups {
            let dist = model.resolve(cov)?;
            for &(time, event) in items {
                let term = if event { dist.logpdf(time)? } else { dist.log_survival(time)? };
                if !term.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite likelihood term at t={time} (event={event})"
                    )));
                }
                total += term;
            }
        }
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// Fit containers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FittedTransition {
    pub from: usize,
    pub to: usize,
    /// Model with coefficients at the MLE. Meaningless when `zero_events`.
    pub model: LinkedDist,
    /// Covariance of this transition's coefficients (transformed scale).
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub n_rows: usize,
    pub n_events: usize,
    /// No events observed: the transition intensity is pinned to zero and the
    /// transition contributes nothing to likelihood or simulation.
    pub zero_events: bool,
}

impl FittedTransition {
    pub fn n_params(&self) -> usize {
        if self.zero_events {
            0
        } else {
            self.model.n_coefs()
        }
    }

    /// Resolve for one covariate row; `None` for a pinned zero-intensity
    /// transition.
    pub fn resolve(&self, cov: &[f64]) -> Result<Option<Dist>> {
        if self.zero_events {
            return Ok(None);
        }
        Ok(Some(self.model.resolve(cov)?))
    }
}

#[derive(Debug, Clone)]
pub struct CshFit {
    /// Aligned with `structure.transitions()`.
    pub transitions: Vec<FittedTransition>,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub warnings: Vec<String>,
}

impl CshFit {
    pub fn transition(&self, r: usize, s: usize) -> Option<&FittedTransition> {
        self.transitions.iter().find(|t| t.from == r && t.to == s)
    }

    /// Resolved competing distributions out of state `r` for one covariate
    /// row; zero-intensity transitions are omitted.
    pub fn resolve_submodel(
        &self,
        structure: &ModelStructure,
        r: usize,
        cov: &[f64],
    ) -> Result<Vec<(usize, Dist)>> {
        let mut out = Vec::new();
        for &s in structure.destinations(r) {
            let t = self
                .transition(r, s)
                .ok_or_else(|| Error::Structure(format!("no fit for transition {r} -> {s}")))?;
            if let Some(d) = t.resolve(cov)? {
                out.push((s, d));
            }
        }
        Ok(out)
    }

    /// Per-submodel (from-state) log-likelihood and parameter count.
    pub fn submodel_loglik(&self, r: usize) -> (f64, usize) {
        self.transitions
            .iter()
            .filter(|t| t.from == r)
            .fold((0.0, 0), |(ll, k), t| (ll + t.loglik, k + t.n_params()))
    }

    /// Log-likelihood contribution of a single observation, computed from the
    /// observation-wise factorisation (not the per-transition split).
    pub fn obs_loglik(
        &self,
        structure: &ModelStructure,
        obs: &Observation,
        cov: &[f64],
        scope: Status3Scope,
    ) -> Result<f64> {
        let describe = |e: Error| Error::LikelihoodDomain {
            subject: obs.subject.clone(),
            from: structure.state_name(obs.from).to_string(),
            time: obs.time,
            detail: e.to_string(),
        };
        let r = obs.from;
        let mut total = 0.0;
        match obs.status {
            Status::Transition => {
                let s = obs.to.expect("validated status-1 row");
                for &u in structure.destinations(r) {
                    let t = self.transition(r, u).expect("fit covers structure");
                    match t.resolve(cov).map_err(describe)? {
                        Some(d) => {
                            total += if u == s {
                                d.logpdf(obs.time).map_err(describe)?
                            } else {
                                d.log_survival(obs.time).map_err(describe)?
                            };
                        }
                        None if u == s => {
                            return Err(Error::LikelihoodDomain {
                                subject: obs.subject.clone(),
                                from: structure.state_name(r).to_string(),
                                time: obs.time,
                                detail: "event observed on a zero-event transition".into(),
                            })
                        }
                        None => {}
                    }
                }
            }
            Status::Censored => {
                for &u in structure.destinations(r) {
                    let t = self.transition(r, u).expect("fit covers structure");
                    if let Some(d) = t.resolve(cov).map_err(describe)? {
                        total += d.log_survival(obs.time).map_err(describe)?;
                    }
                }
            }
            Status::PartiallyKnown => {
                let death = structure.death_state().expect("validated");
                for &u in structure.destinations(r) {
                    let include = match scope {
                        Status3Scope::DeathOnly => u == death,
                        Status3Scope::AllButDischarge => Some(u) != structure.discharge_state(),
                    };
                    if !include {
                        continue;
                    }
                    let t = self.transition(r, u).expect("fit covers structure");
                    if let Some(d) = t.resolve(cov).map_err(describe)? {
                        total += d.log_survival(obs.time).map_err(describe)?;
                    }
                }
            }
        }
        if !total.is_finite() {
            return Err(Error::LikelihoodDomain {
                subject: obs.subject.clone(),
                from: structure.state_name(r).to_string(),
                time: obs.time,
                detail: "non-finite contribution".into(),
            });
        }
        Ok(total)
    }

    /// Contribution of every observation in order.
    pub fn per_obs_loglik(
        &self,
        dataset: &Dataset,
        structure: &ModelStructure,
        scope: Status3Scope,
    ) -> Result<Vec<f64>> {
        dataset
            .observations
            .iter()
            .zip(&dataset.rows)
            .map(|(obs, cov)| self.obs_loglik(structure, obs, cov, scope))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Data-informed starting values on the transformed scale.
pub fn initial_values(template: &LinkedDist, td: &TransitionDataset) -> Vec<f64> {
    let times: Vec<f64> = {
        let events: Vec<f64> = td.rows.iter().filter(|r| r.event).map(|r| r.time).collect();
        if events.len() >= 5 {
            events
        } else {
            td.rows.iter().map(|r| r.time).collect()
        }
    };
    let mut model = template.clone();
    if times.is_empty() {
        return model.flat();
    }
    let logs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = logs.len() as f64;
    let m = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n.max(2.0);
    let s = var.sqrt().clamp(0.2, 3.0);
    let mean_t = times.iter().sum::<f64>() / n;

    use crate::dist::Family;
    let base: Vec<f64> = match model.family {
        // Q starts away from zero: the log-normal branch window is flat in Q,
        // so a gradient there cannot move it.
        Family::GenGamma => vec![m, s.ln(), 0.3],
        Family::LogNormal => vec![m, s.ln()],
        // sd(ln T) of a Weibull is (pi/sqrt(6)) / shape
        Family::Weibull => {
            let shape = (1.2825 / s).clamp(0.2, 20.0);
            vec![shape.ln(), m]
        }
        Family::Gamma => {
            let shape = (1.0 / var).clamp(0.05, 50.0);
            vec![shape.ln(), (shape / mean_t).ln()]
        }
    };
    for (i, v) in base.into_iter().enumerate() {
        model.links[i].baseline = v;
    }
    if model.cure {
        let censored = td.rows.len() - td.n_events();
        let frac = (censored as f64 / td.rows.len().max(1) as f64).clamp(0.05, 0.9);
        let p0 = (0.8 * frac).clamp(0.02, 0.9);
        let idx = model.links.len() - 1;
        model.links[idx].baseline = (p0 / (1.0 - p0)).ln();
    }
    model.flat()
}

/// Fit one transition's survival model by maximum likelihood.
pub fn fit_transition(
    from: usize,
    to: usize,
    template: &LinkedDist,
    td: &TransitionDataset,
    dataset: &Dataset,
    controls: &OptimControls,
) -> Result<FittedTransition> {
    if td.n_events() == 0 {
        return Ok(FittedTransition {
            from,
            to,
            model: template.clone(),
            covariance: DMatrix::zeros(0, 0),
            loglik: 0.0,
            n_rows: td.rows.len(),
            n_events: 0,
            zero_events: true,
        });
    }
    let lik = TransitionLikelihood::new(td, dataset);
    let x0 = initial_values(template, td);
    let f = |x: &[f64]| lik.loglik(template, x);
    let result: OptimResult = maximize(&f, &x0, controls)?;
    let mut model = template.clone();
    model.set_flat(&result.argmax);
    Ok(FittedTransition {
        from,
        to,
        model,
        covariance: result.covariance,
        loglik: result.loglik,
        n_rows: td.rows.len(),
        n_events: td.n_events(),
        zero_events: false,
    })
}

/// Fit the full CSH model: split by transition, maximise each transition's
/// likelihood independently (in parallel), and sum.
pub fn fit_csh(
    dataset: &Dataset,
    structure: &ModelStructure,
    spec: &CshSpec,
    controls: &OptimControls,
    scope: Status3Scope,
) -> Result<CshFit> {
    validate_csh_spec(structure, spec)?;
    let split = split_by_transition(dataset, structure, scope);
    let jobs: Vec<((usize, usize), &LinkedDist, &TransitionDataset)> = structure
        .transitions()
        .iter()
        .map(|&(r, s)| ((r, s), &spec[&(r, s)], &split[&(r, s)]))
        .collect();
    let fits: Result<Vec<FittedTransition>> = jobs
        .into_par_iter()
        .map(|((r, s), template, td)| {
            fit_transition(r, s, template, td, dataset, controls).map_err(|e| {
                Error::Numerical(format!(
                    "fit of transition {} -> {} failed: {e}",
                    structure.state_name(r),
                    structure.state_name(s)
                ))
            })
        })
        .collect();
    let transitions = fits?;
    let mut warnings = Vec::new();
    for t in &transitions {
        if t.zero_events {
            warnings.push(format!(
                "transition {} -> {}: no events observed; intensity pinned to zero",
                structure.state_name(t.from),
                structure.state_name(t.to)
            ));
        }
    }
    let loglik: f64 = transitions.iter().map(|t| t.loglik).sum();
    let n_params: usize = transitions.iter().map(|t| t.n_params()).sum();
    Ok(CshFit { transitions, loglik, n_params, aic: aic(loglik, n_params), warnings })
}

// ---------------------------------------------------------------------------
// Competing-event simulation
// ---------------------------------------------------------------------------

/// Draw the next event for a state: one latent time per destination, the
/// earliest finite draw wins. `None` when every competitor drew "never".
pub fn csh_next_event_sample<R: Rng + ?Sized>(
    competitors: &[(usize, Dist)],
    rng: &mut R,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (state, dist) in competitors {
        if let Draw::Event(t) = dist.sample(rng) {
            if best.map_or(true, |(_, bt)| t < bt) {
                best = Some((*state, t));
            }
        }
    }
    best
}
