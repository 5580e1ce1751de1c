//! Multi-state structure and dataset representation.
//!
//! A [`ModelStructure`] is a directed acyclic graph of named states. Each
//! non-absorbing state `r` induces a competing-risks submodel over its
//! destination set `S_r`. Observations use a semi-Markov clock: time is
//! measured from entry into the current state.
//!
//! Each observation carries a status:
//!
//! * status 1 — exact transition to a known state at the recorded time;
//! * status 2 — right-censored in the current state (next state unknown);
//! * status 3 — partially-known outcome: known to be alive, ICU history
//!   known, but possibly already discharged. These contribute information
//!   about the time-to-death transition only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Structure
// ---------------------------------------------------------------------------

/// Serialised form of a structure definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureSpec {
    pub states: Vec<String>,
    pub transitions: Vec<(String, String)>,
    /// Optional declared absorbing states; validated against the transitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorbing: Option<Vec<String>>,
    /// State whose incoming transitions are censored by status-3 rows.
    /// Defaults to a state named "Death" when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_state: Option<String>,
    /// Absorbing "left alive" state whose timing a status-3 row says nothing
    /// about. Defaults to a state named "Discharge" when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discharge_state: Option<String>,
}

/// Validated multi-state structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelStructure {
    states: Vec<String>,
    transitions: Vec<(usize, usize)>,
    /// Destination sets S_r, indexed by from-state.
    submodels: Vec<Vec<usize>>,
    absorbing: Vec<usize>,
    death: Option<usize>,
    discharge: Option<usize>,
}

impl ModelStructure {
    /// Validate a structure definition.
    ///
    /// Checks: states non-empty and unique, transition endpoints declared, at
    /// least one transition, no self-loops, no duplicate transitions, no
    /// transitions out of declared absorbing states, and acyclicity (required
    /// for pathway enumeration).
    pub fn new(spec: &StructureSpec) -> Result<ModelStructure> {
        if spec.states.is_empty() {
            return Err(Error::Structure("no states declared".into()));
        }
        let mut index = BTreeMap::new();
        for (i, s) in spec.states.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Structure(format!("duplicate state `{s}`")));
            }
        }
        if spec.transitions.is_empty() {
            return Err(Error::Structure("no transitions".into()));
        }

        let lookup = |name: &str| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Structure(format!("unknown state name `{name}`")))
        };

        let mut transitions = Vec::with_capacity(spec.transitions.len());
        let mut seen = BTreeSet::new();
        for (from, to) in &spec.transitions {
            let (r, s) = (lookup(from)?, lookup(to)?);
            if r == s {
                return Err(Error::Structure(format!("self-loop on state `{from}`")));
            }
            if !seen.insert((r, s)) {
                return Err(Error::Structure(format!("duplicate transition {from} -> {to}")));
            }
            transitions.push((r, s));
        }

        if let Some(absorbing) = &spec.absorbing {
            for name in absorbing {
                let a = lookup(name)?;
                if transitions.iter().any(|&(r, _)| r == a) {
                    return Err(Error::Structure(format!(
                        "transition out of absorbing state `{name}`"
                    )));
                }
            }
        }

        let n = spec.states.len();
        let mut submodels = vec![Vec::new(); n];
        for &(r, s) in &transitions {
            submodels[r].push(s);
        }
        for dests in &mut submodels {
            dests.sort_unstable();
        }

        // Kahn's algorithm; leftovers mean a cycle.
        let mut indeg = vec![0usize; n];
        for &(_, s) in &transitions {
            indeg[s] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut visited = 0;
        while let Some(r) = queue.pop() {
            visited += 1;
            for &s in &submodels[r] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    queue.push(s);
                }
            }
        }
        if visited != n {
            let cyclic: Vec<&str> = (0..n)
                .filter(|&i| indeg[i] > 0)
                .map(|i| spec.states[i].as_str())
                .collect();
            return Err(Error::Structure(format!(
                "structure contains a cycle involving: {}",
                cyclic.join(", ")
            )));
        }

        let absorbing: Vec<usize> = (0..n).filter(|&i| submodels[i].is_empty()).collect();

        let named_or_default = |explicit: &Option<String>, default: &str| -> Result<Option<usize>> {
            match explicit {
                Some(name) => Ok(Some(lookup(name)?)),
                None => Ok(index.get(default).copied()),
            }
        };
        let death = named_or_default(&spec.death_state, "Death")?;
        let discharge = named_or_default(&spec.discharge_state, "Discharge")?;

        Ok(ModelStructure {
            states: spec.states.clone(),
            transitions,
            submodels,
            absorbing,
            death,
            discharge,
        })
    }

    /// The four-state hospital pathway structure used throughout the tests:
    /// Hospital -> {ICU, Death, Discharge}, ICU -> {Death, Discharge}.
    pub fn hospital() -> ModelStructure {
        let spec = StructureSpec {
            states: ["Hospital", "ICU", "Death", "Discharge"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            transitions: vec![
                ("Hospital".into(), "ICU".into()),
                ("Hospital".into(), "Death".into()),
                ("Hospital".into(), "Discharge".into()),
                ("ICU".into(), "Death".into()),
                ("ICU".into(), "Discharge".into()),
            ],
            absorbing: Some(vec!["Death".into(), "Discharge".into()]),
            death_state: None,
            discharge_state: None,
        };
        ModelStructure::new(&spec).expect("built-in structure is valid")
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, i: usize) -> &str {
        &self.states[i]
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Structure(format!("unknown state name `{name}`")))
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transitions(&self) -> &[(usize, usize)] {
        &self.transitions
    }

    pub fn has_transition(&self, r: usize, s: usize) -> bool {
        self.submodels[r].contains(&s)
    }

    /// Destination set S_r.
    pub fn destinations(&self, r: usize) -> &[usize] {
        &self.submodels[r]
    }

    pub fn is_absorbing(&self, r: usize) -> bool {
        self.submodels[r].is_empty()
    }

    pub fn absorbing(&self) -> &[usize] {
        &self.absorbing
    }

    /// Non-absorbing states (each induces a competing-risks submodel).
    pub fn from_states(&self) -> Vec<usize> {
        (0..self.n_states()).filter(|&r| !self.is_absorbing(r)).collect()
    }

    pub fn death_state(&self) -> Option<usize> {
        self.death
    }

    pub fn discharge_state(&self) -> Option<usize> {
        self.discharge
    }

    /// All simple directed paths from `start` to `target`, each a sequence of
    /// transitions. The structure is acyclic, so enumeration terminates.
    pub fn enumerate_pathways(&self, start: usize, target: usize) -> Result<Vec<Vec<(usize, usize)>>> {
        if start >= self.n_states() || target >= self.n_states() {
            return Err(Error::Structure("pathway endpoint not in structure".into()));
        }
        let mut paths = Vec::new();
        let mut stack = Vec::new();
        self.dfs_paths(start, target, &mut stack, &mut paths);
        Ok(paths)
    }

    fn dfs_paths(
        &self,
        at: usize,
        target: usize,
        stack: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if at == target {
            out.push(stack.clone());
            return;
        }
        for &next in &self.submodels[at] {
            stack.push((at, next));
            self.dfs_paths(next, target, stack, out);
            stack.pop();
        }
    }

    pub fn spec(&self) -> StructureSpec {
        StructureSpec {
            states: self.states.clone(),
            transitions: self
                .transitions
                .iter()
                .map(|&(r, s)| (self.states[r].clone(), self.states[s].clone()))
                .collect(),
            absorbing: Some(self.absorbing.iter().map(|&a| self.states[a].clone()).collect()),
            death_state: self.death.map(|d| self.states[d].clone()),
            discharge_state: self.discharge.map(|d| self.states[d].clone()),
        }
    }
}

// ---------------------------------------------------------------------------
// Observations and covariates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    /// Exact transition time to a known state.
    Transition = 1,
    /// Right-censored in the current state.
    Censored = 2,
    /// Alive with unknown hospitalised status (partially-known outcome).
    PartiallyKnown = 3,
}

impl Status {
    pub fn from_code(code: u8) -> Result<Status> {
        match code {
            1 => Ok(Status::Transition),
            2 => Ok(Status::Censored),
            3 => Ok(Status::PartiallyKnown),
            other => Err(Error::Data(format!("status must be 1, 2 or 3, got {other}"))),
        }
    }

    pub fn code(&self) -> u8 {
        *self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Numeric(f64),
    Categorical(String),
}

impl CovariateValue {
    pub fn as_str(&self) -> String {
        match self {
            CovariateValue::Numeric(x) => format!("{x}"),
            CovariateValue::Categorical(s) => s.clone(),
        }
    }
}

/// One record: subject, from-state, optional to-state, elapsed time since
/// entering the from-state, status, and named covariate values.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub subject: String,
    pub from: usize,
    pub to: Option<usize>,
    pub time: f64,
    pub status: Status,
    pub covariates: BTreeMap<String, CovariateValue>,
}

/// Indicator-expanded covariate design shared by a dataset.
///
/// Categorical covariates expand to one indicator column per non-reference
/// level, reference = lexicographically first level. Numeric covariates map
/// to a single column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDesign {
    /// Expanded column names, e.g. `age_group=45-64` or `bmi`.
    pub columns: Vec<String>,
    /// Source covariate -> observed categorical levels (sorted; first is the
    /// reference). Numeric covariates are absent from this map.
    pub levels: BTreeMap<String, Vec<String>>,
    /// Source covariate names.
    pub sources: Vec<String>,
}

impl CovariateDesign {
    /// Build a design from the covariates present in `observations`.
    pub fn from_observations(observations: &[Observation]) -> Result<CovariateDesign> {
        let mut numeric: BTreeSet<String> = BTreeSet::new();
        let mut levels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for obs in observations {
            for (name, value) in &obs.covariates {
                match value {
                    CovariateValue::Numeric(_) => {
                        numeric.insert(name.clone());
                    }
                    CovariateValue::Categorical(level) => {
                        levels.entry(name.clone()).or_default().insert(level.clone());
                    }
                }
            }
        }
        if let Some(clash) = numeric.iter().find(|n| levels.contains_key(*n)) {
            return Err(Error::Data(format!(
                "covariate `{clash}` mixes numeric and categorical values"
            )));
        }
        let mut columns = Vec::new();
        let mut sources = Vec::new();
        let mut level_map = BTreeMap::new();
        for (name, set) in &levels {
            let ordered: Vec<String> = set.iter().cloned().collect();
            for level in ordered.iter().skip(1) {
                columns.push(format!("{name}={level}"));
            }
            sources.push(name.clone());
            level_map.insert(name.clone(), ordered);
        }
        for name in &numeric {
            columns.push(name.clone());
            sources.push(name.clone());
        }
        Ok(CovariateDesign { columns, levels: level_map, sources })
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Expand one observation's covariates to a design row.
    pub fn row(&self, covariates: &BTreeMap<String, CovariateValue>) -> Result<Vec<f64>> {
        let mut row = vec![0.0; self.columns.len()];
        for (j, col) in self.columns.iter().enumerate() {
            if let Some((name, level)) = col.split_once('=') {
                match covariates.get(name) {
                    Some(CovariateValue::Categorical(v)) => {
                        let known = self.levels[name].iter().any(|l| l == v);
                        if !known {
                            return Err(Error::Data(format!(
                                "unknown level `{v}` for covariate `{name}` (known: {})",
                                self.levels[name].join(", ")
                            )));
                        }
                        if v == level {
                            row[j] = 1.0;
                        }
                    }
                    Some(CovariateValue::Numeric(_)) => {
                        return Err(Error::Data(format!(
                            "covariate `{name}` is categorical in the design but numeric here"
                        )))
                    }
                    None => {
                        return Err(Error::Data(format!("missing covariate `{name}`")));
                    }
                }
            } else {
                match covariates.get(col) {
                    Some(CovariateValue::Numeric(x)) => row[j] = *x,
                    Some(CovariateValue::Categorical(_)) => {
                        return Err(Error::Data(format!(
                            "covariate `{col}` is numeric in the design but categorical here"
                        )))
                    }
                    None => return Err(Error::Data(format!("missing covariate `{col}`"))),
                }
            }
        }
        Ok(row)
    }

    /// Design column indices belonging to a source covariate; errors when the
    /// covariate is unknown.
    pub fn columns_of(&self, source: &str) -> Result<Vec<usize>> {
        if !self.sources.iter().any(|s| s == source) {
            return Err(Error::Config(format!(
                "covariate `{source}` not present in the dataset (available: {})",
                self.sources.join(", ")
            )));
        }
        Ok(self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.as_str() == source || c.starts_with(&format!("{source}=")))
            .map(|(j, _)| j)
            .collect())
    }

    /// Enumerate every combination of categorical levels (used for default
    /// prediction profiles); numeric covariates are fixed at zero.
    pub fn all_profiles(&self) -> Vec<BTreeMap<String, CovariateValue>> {
        let mut profiles: Vec<BTreeMap<String, CovariateValue>> = vec![BTreeMap::new()];
        for (name, levels) in &self.levels {
            let mut next = Vec::with_capacity(profiles.len() * levels.len());
            for profile in &profiles {
                for level in levels {
                    let mut p = profile.clone();
                    p.insert(name.clone(), CovariateValue::Categorical(level.clone()));
                    next.push(p);
                }
            }
            profiles = next;
        }
        for profile in &mut profiles {
            for source in &self.sources {
                if !self.levels.contains_key(source) {
                    profile.insert(source.clone(), CovariateValue::Numeric(0.0));
                }
            }
        }
        profiles
    }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// How to treat times recorded as exactly zero (same-day transitions in
/// day-granularity data): shift them to a small positive value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroTimePolicy {
    pub shift_to: f64,
}

impl Default for ZeroTimePolicy {
    fn default() -> Self {
        ZeroTimePolicy { shift_to: 0.5 }
    }
}

/// A validated dataset: observations plus their expanded design rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub design: CovariateDesign,
    /// Design row per observation, aligned with `observations`.
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Validate raw observations against a structure and expand covariates.
///
/// Checks per row: states known; status-1 rows have a permitted to-state;
/// status-2/3 rows have none; times non-negative (zeros shifted per policy);
/// status-3 rows require the structure to designate a death state reachable
/// from the row's from-state.
pub fn load_dataset(
    observations: Vec<Observation>,
    structure: &ModelStructure,
    policy: ZeroTimePolicy,
) -> Result<Dataset> {
    if !(policy.shift_to > 0.0) {
        return Err(Error::Config("zero-time shift must be positive".into()));
    }
    let design = CovariateDesign::from_observations(&observations)?;
    let mut rows = Vec::with_capacity(observations.len());
    let mut validated = Vec::with_capacity(observations.len());
    for mut obs in observations {
        let describe =
            |msg: String, obs: &Observation| Error::Data(format!("subject `{}`: {msg}", obs.subject));
        if obs.from >= structure.n_states() {
            return Err(describe(format!("from-state index {} out of range", obs.from), &obs));
        }
        if structure.is_absorbing(obs.from) {
            return Err(describe(
                format!("observation from absorbing state `{}`", structure.state_name(obs.from)),
                &obs,
            ));
        }
        match obs.status {
            Status::Transition => {
                let to = obs
                    .to
                    .ok_or_else(|| describe("status 1 requires a to-state".to_string(), &obs))?;
                if !structure.has_transition(obs.from, to) {
                    return Err(describe(
                        format!(
                            "transition not permitted: {} -> {}",
                            structure.state_name(obs.from),
                            structure.state_name(to)
                        ),
                        &obs,
                    ));
                }
            }
            Status::Censored | Status::PartiallyKnown => {
                if obs.to.is_some() {
                    return Err(describe(
                        format!("status {} must not carry a to-state", obs.status.code()),
                        &obs,
                    ));
                }
                if obs.status == Status::PartiallyKnown {
                    let death = structure.death_state().ok_or_else(|| {
                        describe(
                            "status 3 requires the structure to designate a death state".into(),
                            &obs,
                        )
                    })?;
                    if !structure.has_transition(obs.from, death) {
                        return Err(describe(
                            format!(
                                "status 3 from `{}` but no transition to the death state",
                                structure.state_name(obs.from)
                            ),
                            &obs,
                        ));
                    }
                }
            }
        }
        if !obs.time.is_finite() || obs.time < 0.0 {
            return Err(describe(format!("invalid time {}", obs.time), &obs));
        }
        if obs.time == 0.0 {
            obs.time = policy.shift_to;
        }
        rows.push(design.row(&obs.covariates)?);
        validated.push(obs);
    }
    Ok(Dataset { observations: validated, design, rows })
}

// ---------------------------------------------------------------------------
// Per-transition splits (CSH factorisation)
// ---------------------------------------------------------------------------

/// One row of a transition-specific survival dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    pub time: f64,
    pub event: bool,
    /// Index into the parent dataset (for covariates and diagnostics).
    pub obs_index: usize,
}

/// The survival dataset for a fixed transition (r, s).
#[derive(Debug, Clone, Default)]
pub struct TransitionDataset {
    pub rows: Vec<TransitionRow>,
}

impl TransitionDataset {
    pub fn n_events(&self) -> usize {
        self.rows.iter().filter(|r| r.event).count()
    }
}

/// Controls the status-3 censoring scope. The likelihood stated for
/// partially-known outcomes censors only the time-to-death transition; the
/// variant additionally right-censors every other non-discharge transition
/// (motivated by ICU admission being assumed recorded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Status3Scope {
    #[default]
    DeathOnly,
    AllButDischarge,
}

/// Split a dataset into the per-transition survival datasets whose product
/// likelihood equals the multi-state likelihood.
///
/// For an observation from state `r`:
/// * status 1 to `s` — an event row in (r, s) and a censored row at the same
///   time in every other (r, u);
/// * status 2 — a censored row in every (r, u);
/// * status 3 — a censored row in (r, death) only (or in all non-discharge
///   transitions under [`Status3Scope::AllButDischarge`]).
pub fn split_by_transition(
    dataset: &Dataset,
    structure: &ModelStructure,
    scope: Status3Scope,
) -> BTreeMap<(usize, usize), TransitionDataset> {
    let mut out: BTreeMap<(usize, usize), TransitionDataset> = structure
        .transitions()
        .iter()
        .map(|&t| (t, TransitionDataset::default()))
        .collect();
    for (i, obs) in dataset.observations.iter().enumerate() {
        let r = obs.from;
        match obs.status {
            Status::Transition => {
                let s = obs.to.expect("validated");
                for &u in structure.destinations(r) {
                    out.get_mut(&(r, u)).expect("declared transition").rows.push(TransitionRow {
                        time: obs.time,
                        event: u == s,
                        obs_index: i,
                    });
                }
            }
            Status::Censored => {
                for &u in structure.destinations(r) {
                    out.get_mut(&(r, u)).expect("declared transition").rows.push(TransitionRow {
                        time: obs.time,
                        event: false,
                        obs_index: i,
                    });
                }
            }
            Status::PartiallyKnown => {
                let death = structure.death_state().expect("validated");
                match scope {
                    Status3Scope::DeathOnly => {
                        out.get_mut(&(r, death)).expect("validated").rows.push(TransitionRow {
                            time: obs.time,
                            event: false,
                            obs_index: i,
                        });
                    }
                    Status3Scope::AllButDischarge => {
                        for &u in structure.destinations(r) {
                            if Some(u) == structure.discharge_state() {
                                continue;
                            }
                            out.get_mut(&(r, u)).expect("declared").rows.push(TransitionRow {
                                time: obs.time,
                                event: false,
                                obs_index: i,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(subject: &str, from: usize, to: Option<usize>, time: f64, status: Status) -> Observation {
        Observation {
            subject: subject.into(),
            from,
            to,
            time,
            status,
            covariates: BTreeMap::new(),
        }
    }

    #[test]
    fn hospital_structure_is_valid() {
        let m = ModelStructure::hospital();
        assert_eq!(m.n_states(), 4);
        assert_eq!(m.absorbing(), &[2, 3]);
        assert_eq!(m.destinations(0), &[1, 2, 3]);
        assert_eq!(m.destinations(1), &[2, 3]);
        assert_eq!(m.death_state(), Some(2));
        assert_eq!(m.discharge_state(), Some(3));
    }

    #[test]
    fn transition_out_of_absorbing_state_rejected() {
        let mut spec = ModelStructure::hospital().spec();
        spec.transitions.push(("Death".into(), "Hospital".into()));
        let err = ModelStructure::new(&spec).unwrap_err().to_string();
        assert!(err.contains("transition out of absorbing state"), "{err}");
    }

    #[test]
    fn cycles_and_unknown_states_rejected() {
        let mut spec = ModelStructure::hospital().spec();
        spec.absorbing = None;
        spec.transitions.push(("ICU".into(), "Hospital".into()));
        let err = ModelStructure::new(&spec).unwrap_err().to_string();
        assert!(err.contains("cycle"), "{err}");

        let mut spec = ModelStructure::hospital().spec();
        spec.transitions.push(("Hospital".into(), "Morgue".into()));
        assert!(ModelStructure::new(&spec).is_err());

        let spec = StructureSpec {
            states: vec!["A".into(), "B".into()],
            transitions: vec![],
            absorbing: None,
            death_state: None,
            discharge_state: None,
        };
        let err = ModelStructure::new(&spec).unwrap_err().to_string();
        assert!(err.contains("no transitions"), "{err}");
    }

    #[test]
    fn pathway_enumeration_matches_hospital_example() {
        let m = ModelStructure::hospital();
        let (h, icu, death, disch) = (0, 1, 2, 3);
        let to_death = m.enumerate_pathways(h, death).unwrap();
        assert_eq!(to_death.len(), 2);
        assert!(to_death.contains(&vec![(h, death)]));
        assert!(to_death.contains(&vec![(h, icu), (icu, death)]));

        let to_disch = m.enumerate_pathways(h, disch).unwrap();
        assert_eq!(to_disch.len(), 2);
        assert!(to_disch.contains(&vec![(h, disch)]));
        assert!(to_disch.contains(&vec![(h, icu), (icu, disch)]));

        assert_eq!(m.enumerate_pathways(icu, death).unwrap(), vec![vec![(icu, death)]]);
    }

    #[test]
    fn pathway_enumeration_matches_bruteforce_on_random_dags() {
        // Random DAGs on <= 6 nodes with edges only from lower to higher
        // index; an independent recursive count over the raw edge list is the
        // oracle.
        let mut seed = 12345_u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as usize
        };
        for _ in 0..50 {
            let n = 3 + next() % 4;
            let mut edges = Vec::new();
            for r in 0..n {
                for s in (r + 1)..n {
                    if next() % 3 == 0 {
                        edges.push((r, s));
                    }
                }
            }
            if edges.is_empty() {
                edges.push((0, n - 1));
            }
            let spec = StructureSpec {
                states: (0..n).map(|i| format!("S{i}")).collect(),
                transitions: edges
                    .iter()
                    .map(|&(r, s)| (format!("S{r}"), format!("S{s}")))
                    .collect(),
                absorbing: None,
                death_state: None,
                discharge_state: None,
            };
            let m = ModelStructure::new(&spec).unwrap();

            fn count_paths(edges: &[(usize, usize)], at: usize, target: usize) -> usize {
                if at == target {
                    return 1;
                }
                edges
                    .iter()
                    .filter(|&&(r, _)| r == at)
                    .map(|&(_, s)| count_paths(edges, s, target))
                    .sum()
            }
            let paths = m.enumerate_pathways(0, n - 1).unwrap();
            assert_eq!(paths.len(), count_paths(&edges, 0, n - 1));
            let mut seen = std::collections::BTreeSet::new();
            for p in &paths {
                assert!(seen.insert(p.clone()), "duplicate path {p:?}");
            }
        }
    }

    #[test]
    fn load_dataset_validates_rows() {
        let m = ModelStructure::hospital();
        let ok = load_dataset(
            vec![
                obs("a", 0, Some(1), 2.0, Status::Transition),
                obs("b", 0, None, 30.0, Status::PartiallyKnown),
                obs("c", 0, None, 5.0, Status::Censored),
            ],
            &m,
            ZeroTimePolicy::default(),
        )
        .unwrap();
        assert_eq!(ok.len(), 3);

        // transition not permitted: ICU -> Hospital
        let err = load_dataset(
            vec![obs("d", 1, Some(0), 1.0, Status::Transition)],
            &m,
            ZeroTimePolicy::default(),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("not permitted"), "{err}");

        // status 1 with missing to-state
        assert!(load_dataset(
            vec![obs("e", 0, None, 1.0, Status::Transition)],
            &m,
            ZeroTimePolicy::default()
        )
        .is_err());

        // negative time
        assert!(load_dataset(
            vec![obs("f", 0, Some(1), -1.0, Status::Transition)],
            &m,
            ZeroTimePolicy::default()
        )
        .is_err());
    }

    #[test]
    fn zero_times_are_shifted() {
        let m = ModelStructure::hospital();
        let d = load_dataset(
            vec![obs("a", 0, Some(2), 0.0, Status::Transition)],
            &m,
            ZeroTimePolicy::default(),
        )
        .unwrap();
        assert_eq!(d.observations[0].time, 0.5);
        let d = load_dataset(
            vec![obs("a", 0, Some(2), 0.0, Status::Transition)],
            &m,
            ZeroTimePolicy { shift_to: 0.25 },
        )
        .unwrap();
        assert_eq!(d.observations[0].time, 0.25);
    }

    #[test]
    fn split_examples_from_hospital() {
        let m = ModelStructure::hospital();
        let (h, icu, death, disch) = (0usize, 1usize, 2usize, 3usize);

        // single status-1 row H -> ICU at t=3
        let d = load_dataset(
            vec![obs("a", h, Some(icu), 3.0, Status::Transition)],
            &m,
            ZeroTimePolicy::default(),
        )
        .unwrap();
        let split = split_by_transition(&d, &m, Status3Scope::DeathOnly);
        assert_eq!(
            split[&(h, icu)].rows,
            vec![TransitionRow { time: 3.0, event: true, obs_index: 0 }]
        );
        assert_eq!(
            split[&(h, death)].rows,
            vec![TransitionRow { time: 3.0, event: false, obs_index: 0 }]
        );
        assert_eq!(
            split[&(h, disch)].rows,
            vec![TransitionRow { time: 3.0, event: false, obs_index: 0 }]
        );

        // single status-2 row at t=5: censored in all three
        let d = load_dataset(
            vec![obs("b", h, None, 5.0, Status::Censored)],
            &m,
            ZeroTimePolicy::default(),
        )
        .unwrap();
        let split = split_by_transition(&d, &m, Status3Scope::DeathOnly);
        for &u in m.destinations(h) {
            assert_eq!(split[&(h, u)].rows.len(), 1);
            assert!(!split[&(h, u)].rows[0].event);
        }

        // single status-3 row at t=40: censored in (H, Death) only
        let d = load_dataset(
            vec![obs("c", h, None, 40.0, Status::PartiallyKnown)],
            &m,
            ZeroTimePolicy::default(),
        )
        .unwrap();
        let split = split_by_transition(&d, &m, Status3Scope::DeathOnly);
        assert_eq!(split[&(h, death)].rows.len(), 1);
        assert!(split[&(h, icu)].rows.is_empty());
        assert!(split[&(h, disch)].rows.is_empty());

        // variant: censored everywhere except discharge
        let split = split_by_transition(&d, &m, Status3Scope::AllButDischarge);
        assert_eq!(split[&(h, death)].rows.len(), 1);
        assert_eq!(split[&(h, icu)].rows.len(), 1);
        assert!(split[&(h, disch)].rows.is_empty());
    }

    #[test]
    fn split_row_count_invariants() {
        let m = ModelStructure::hospital();
        let (h, icu) = (0usize, 1usize);
        let mut observations = Vec::new();
        for i in 0..30 {
            let status = match i % 3 {
                0 => Status::Transition,
                1 => Status::Censored,
                _ => Status::PartiallyKnown,
            };
            let to =
                if status == Status::Transition { Some(m.destinations(h)[i % 3]) } else { None };
            observations.push(obs(&format!("s{i}"), h, to, 1.0 + i as f64, status));
        }
        observations.push(obs("icu1", icu, Some(2), 4.0, Status::Transition));
        let d = load_dataset(observations, &m, ZeroTimePolicy::default()).unwrap();
        let split = split_by_transition(&d, &m, Status3Scope::DeathOnly);

        let n_status1_h = d
            .observations
            .iter()
            .filter(|o| o.from == h && o.status == Status::Transition)
            .count();
        let event_rows: usize =
            m.destinations(h).iter().map(|&u| split[&(h, u)].n_events()).sum();
        assert_eq!(event_rows, n_status1_h);

        let n_status2_h =
            d.observations.iter().filter(|o| o.from == h && o.status == Status::Censored).count();
        let n_status3_h = d
            .observations
            .iter()
            .filter(|o| o.from == h && o.status == Status::PartiallyKnown)
            .count();
        let censored_rows: usize = m
            .destinations(h)
            .iter()
            .map(|&u| split[&(h, u)].rows.iter().filter(|r| !r.event).count())
            .sum();
        // status-1 yields |S_r|-1 censored rows, status-2 yields |S_r|, status-3 yields 1
        assert_eq!(censored_rows, n_status1_h * 2 + n_status2_h * 3 + n_status3_h);
    }

    #[test]
    fn design_expansion_and_profiles() {
        let mut cov = BTreeMap::new();
        cov.insert("age_group".into(), CovariateValue::Categorical("45-64".into()));
        cov.insert("gender".into(), CovariateValue::Categorical("F".into()));
        let mut cov2 = cov.clone();
        cov2.insert("age_group".into(), CovariateValue::Categorical("<45".into()));
        cov2.insert("gender".into(), CovariateValue::Categorical("M".into()));
        let observations = vec![
            Observation {
                subject: "a".into(),
                from: 0,
                to: Some(2),
                time: 1.0,
                status: Status::Transition,
                covariates: cov,
            },
            Observation {
                subject: "b".into(),
                from: 0,
                to: Some(2),
                time: 2.0,
                status: Status::Transition,
                covariates: cov2,
            },
        ];
        let design = CovariateDesign::from_observations(&observations).unwrap();
        // lexicographic reference: "45-64" < "<45" in byte order
        assert_eq!(design.columns, vec!["age_group=<45", "gender=M"]);
        let row = design.row(&observations[0].covariates).unwrap();
        assert_eq!(row, vec![0.0, 0.0]);
        let row = design.row(&observations[1].covariates).unwrap();
        assert_eq!(row, vec![1.0, 1.0]);
        assert_eq!(design.all_profiles().len(), 4);
        assert!(design.columns_of("age_group").unwrap() == vec![0]);
        assert!(design.columns_of("bmi").is_err());
    }
}
