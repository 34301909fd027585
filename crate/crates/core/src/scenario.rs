//! TOML scenario files.
//!
//! ```toml
//! n = 4
//! alpha = 0.2
//! beta = 0.08
//! # delta = 0.0045            # default: 0.9 of the largest feasible delta
//! seed = 1177571917
//! record_certificates = false
//! verify_before_run = false
//! desired = [[0.0, 0.0], [5.0, 0.0], [5.0, 5.0], [0.0, 5.0]]
//! initial = [[-6.0, 2.0], [9.0, -10.0], [3.0, 0.0], [0.0, 16.0]]
//!
//! [[modes]]                   # one table per topology, 1-based vertices;
//!                             # `stochastic = [[...], ...]` (rows of S) also works
//! n = 4
//! edges = [[3, 1, 0.2], [4, 1, 0.2], ...]   # [source, target, weight]
//!
//! [schedule]
//! dwell = 5                   # steps per mode
//! pattern = [1, 2]            # 1-based mode indices, repeated
//!
//! [angles]
//! kind = "paper_example"      # or "constant" (values) or "piecewise" (tables)
//!
//! [step]
//! kind = "constant"           # h defaults to h_max; or kind = "uniform"
//! h = 0.125
//!
//! [horizon]
//! max_steps = 2000
//! threshold = 1e-6            # relative to the initial pairwise error
//! ```

use std::path::Path;

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::FormationSpec;
use crate::error::{FormationError, Result};
use crate::polytope::DEFAULT_SEED;
use crate::signed_graph::{CouplingBounds, GeneralStochasticMatrix, GraphDoc, SignedDigraph};
use crate::sim::{
    default_delta, schedule_problems, AngleProfile, HPolicy, Horizon, ParameterCertificate, Simulation,
    TopologySchedule,
};
use crate::tol;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub record_certificates: bool,
    #[serde(default)]
    pub verify_before_run: bool,
    pub desired: Vec<[f64; 2]>,
    pub initial: Vec<[f64; 2]>,
    pub modes: Vec<ModeDoc>,
    pub schedule: ScheduleSpec,
    pub angles: AngleProfile,
    #[serde(default)]
    pub step: StepSpec,
    #[serde(default)]
    pub horizon: HorizonSpec,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// One topology, given either by its signed edges or by its general
/// stochastic matrix `S = I - L` (rows of `stochastic`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDoc {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic: Option<Vec<Vec<f64>>>,
}

impl ModeDoc {
    pub fn graph(&self) -> Result<SignedDigraph> {
        match &self.stochastic {
            None => SignedDigraph::try_from(&GraphDoc { n: self.n, edges: self.edges.clone() }),
            Some(_) if !self.edges.is_empty() => {
                Err(FormationError::InvalidGraph("give either edges or stochastic, not both".into()))
            }
            Some(rows) => {
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    return Err(FormationError::NotStochastic(format!("expected {0}x{0} rows", self.n)));
                }
                let m = DMatrix::from_fn(self.n, self.n, |i, j| rows[i][j]);
                SignedDigraph::from_stochastic(&GeneralStochasticMatrix::new(m)?)
            }
        }
    }
}

impl From<GraphDoc> for ModeDoc {
    fn from(doc: GraphDoc) -> Self {
        Self { n: doc.n, edges: doc.edges, stochastic: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub dwell: usize,
    /// 1-based mode indices.
    pub pattern: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSpec {
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<f64>,
    },
    /// Uniform draws from the admissible window, seeded by the scenario seed.
    Uniform,
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec::Constant { h: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_max_steps() -> usize {
    Horizon::default().max_steps
}

fn default_threshold() -> f64 {
    Horizon::default().threshold.expect("default horizon has a threshold")
}

impl Default for HorizonSpec {
    fn default() -> Self {
        Self { max_steps: default_max_steps(), threshold: default_threshold() }
    }
}

/// A validated scenario, ready to run or verify.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub bounds: CouplingBounds,
    pub simulation: Simulation,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        ScenarioConfig::load(path)?.build()
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn params(&self) -> &ParameterCertificate {
        &self.simulation.params
    }

    pub fn schedule(&self) -> &TopologySchedule {
        &self.simulation.schedule
    }

    /// Largest interval the step policy can produce.
    pub fn max_step(&self) -> f64 {
        match self.simulation.step_policy {
            HPolicy::Constant { h } => h,
            HPolicy::UniformRandom { hi, .. } => hi,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            FormationError::Parse(msg) => FormationError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FormationError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FormationError::Parse(e.to_string()))
    }

    /// The four-agent square scenario: side-5 square, two switching signed
    /// topologies with weights 0.2 and -0.08, alternating every 5 steps.
    pub fn paper_sec4() -> Self {
        let mode1 = vec![
            (3, 1, 0.2),
            (4, 1, 0.2),
            (2, 1, -0.08),
            (3, 2, 0.2),
            (4, 2, 0.2),
            (1, 2, -0.08),
            (1, 3, 0.2),
            (2, 3, 0.2),
            (4, 3, 0.2),
            (1, 4, 0.2),
            (2, 4, 0.2),
            (3, 4, 0.2),
        ];
        let mode2 = vec![
            (2, 1, 0.2),
            (3, 1, 0.2),
            (4, 1, 0.2),
            (1, 2, 0.2),
            (3, 2, 0.2),
            (4, 2, 0.2),
            (1, 3, 0.2),
            (2, 3, 0.2),
            (4, 3, -0.08),
            (1, 4, 0.2),
            (2, 4, 0.2),
            (3, 4, -0.08),
        ];
        Self {
            n: 4,
            alpha: 0.2,
            beta: 0.08,
            delta: None,
            seed: DEFAULT_SEED,
            record_certificates: false,
            verify_before_run: false,
            desired: vec![[0.0, 0.0], [5.0, 0.0], [5.0, 5.0], [0.0, 5.0]],
            initial: vec![[-6.0, 2.0], [9.0, -10.0], [3.0, 0.0], [0.0, 16.0]],
            modes: vec![GraphDoc { n: 4, edges: mode1 }.into(), GraphDoc { n: 4, edges: mode2 }.into()],
            schedule: ScheduleSpec { dwell: 5, pattern: vec![1, 2] },
            angles: AngleProfile::PaperExample,
            step: StepSpec::Constant { h: Some(0.125) },
            horizon: HorizonSpec { max_steps: 2000, threshold: 1e-6 },
        }
    }

    /// Validates everything and assembles the run. Shape and reference
    /// problems are collected into one [`FormationError::ConfigInvalid`];
    /// an infeasible delta and graphs violating the hypotheses get their own
    /// errors.
    pub fn build(&self) -> Result<Scenario> {
        let mut problems = Vec::new();
        let n = self.n;
        if n < 2 {
            problems.push(format!("n: need at least 2 agents, got {n}"));
        }
        let bounds = match CouplingBounds::new(self.alpha, self.beta) {
            Ok(b) => Some(b),
            Err(e) => {
                problems.push(format!("alpha/beta: {e}"));
                None
            }
        };
        for (name, pts) in [("desired", &self.desired), ("initial", &self.initial)] {
            if pts.len() != n {
                problems.push(format!("{name}: {} positions for {n} agents", pts.len()));
            }
            if pts.iter().flatten().any(|v| !v.is_finite()) {
                problems.push(format!("{name}: non-finite coordinate"));
            }
        }
        let mut modes = Vec::new();
        for (m, doc) in self.modes.iter().enumerate() {
            if doc.n != n {
                problems.push(format!("modes[{}].n: {} vertices for {n} agents", m + 1, doc.n));
            }
            match doc.graph() {
                Ok(g) => modes.push(g),
                Err(e) => problems.push(format!("modes[{}]: {e}", m + 1)),
            }
        }
        if self.schedule.pattern.contains(&0) {
            problems.push("schedule.pattern: mode indices are 1-based".into());
        }
        let pattern: Vec<usize> = self.schedule.pattern.iter().map(|p| p.saturating_sub(1)).collect();
        if modes.len() == self.modes.len() {
            problems.extend(schedule_problems(&modes, self.schedule.dwell, &pattern));
        }
        problems.extend(self.angles.problems(n));
        if self.horizon.threshold < 0.0 || !self.horizon.threshold.is_finite() {
            problems.push(format!("horizon.threshold: {} must be finite and nonnegative", self.horizon.threshold));
        }

        let mut params = None;
        if let (Some(b), true) = (bounds.as_ref(), n >= 2) {
            let delta = self.delta.unwrap_or_else(|| default_delta(n, b));
            match ParameterCertificate::evaluate(n, b, delta) {
                Ok(p) => params = Some(p),
                Err(e) => problems.push(format!("delta: {e}")),
            }
        }
        if let (Some(p), StepSpec::Constant { h: Some(h) }) = (params.as_ref().filter(|p| p.feasible), self.step) {
            if !(h >= p.h_min - tol::INEQ_SLACK && h <= p.h_max + tol::INEQ_SLACK) {
                problems.push(format!("step.h: {h} outside the admissible window [{}, {}]", p.h_min, p.h_max));
            }
        }
        if !problems.is_empty() {
            return Err(FormationError::ConfigInvalid(problems));
        }
        let (bounds, params) = (bounds.expect("checked above"), params.expect("checked above"));
        if !params.feasible {
            return Err(FormationError::InfeasibleParameters { delta: params.delta, max_delta: params.max_delta });
        }

        let schedule = TopologySchedule::new(modes, self.schedule.dwell, pattern, &bounds)?;
        let step_policy = match self.step {
            StepSpec::Constant { h } => HPolicy::Constant { h: h.unwrap_or(params.h_max) },
            StepSpec::Uniform => HPolicy::UniformRandom { lo: params.h_min, hi: params.h_max, seed: self.seed },
        };
        let to_points = |pts: &[[f64; 2]]| pts.iter().map(|p| Vector2::new(p[0], p[1])).collect::<Vec<_>>();
        let simulation = Simulation {
            params,
            spec: FormationSpec::new(to_points(&self.desired))?,
            initial: to_points(&self.initial),
            schedule,
            angles: self.angles.clone(),
            step_policy,
            horizon: Horizon { max_steps: self.horizon.max_steps, threshold: Some(self.horizon.threshold) },
            record_certificates: self.record_certificates,
        };
        Ok(Scenario { config: self.clone(), bounds, simulation })
    }
}
