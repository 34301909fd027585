//! Step-size feasibility, the simulation loop over switching topologies, and
//! convergence diagnostics against the geometric decay bound.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::RangeInclusive;

use log::{debug, warn};
use nalgebra::{DVector, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    angles_outside_domain, lemma6_certificate, pairwise_difference_matrix, pairwise_error_inf, step_agentwise,
    AgentState, FormationSpec, Lemma6Certificate, RotationProfile,
};
use crate::error::{FormationError, Result};
use crate::sampling;
use crate::signed_graph::{CouplingBounds, SignedDigraph};
use crate::tol;

/// Upper end of the delta range usually quoted for the four-agent square
/// example. `ParameterCertificate::range_note` checks it against the bound.
pub const QUOTED_DELTA_UPPER: f64 = 0.12;

/// Step-size window and decay rate for a target per-step contraction `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterCertificate {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub delta: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub rate: f64,
    pub max_delta: f64,
    pub feasible: bool,
}

impl ParameterCertificate {
    /// Evaluates the window without rejecting infeasible `delta`.
    pub fn evaluate(n: usize, bounds: &CouplingBounds, delta: f64) -> Result<Self> {
        if n < 2 {
            return Err(FormationError::InvalidArgument(format!("need n >= 2, got {n}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(FormationError::InvalidArgument(format!("delta = {delta} is outside (0, 1)")));
        }
        let eta = bounds.eta();
        let h_min = delta / (1.0 - eta);
        let h_max = 1.0 / (2 * n) as f64;
        Ok(Self {
            n,
            alpha: bounds.alpha,
            beta: bounds.beta,
            eta,
            delta,
            h_min,
            h_max,
            rate: -(1.0 - delta).ln() / h_max,
            max_delta: max_feasible_delta(n, bounds),
            feasible: h_min <= h_max + tol::INEQ_SLACK,
        })
    }

    pub fn window(&self) -> RangeInclusive<f64> {
        self.h_min..=self.h_max
    }

    pub fn bounds(&self) -> CouplingBounds {
        CouplingBounds { alpha: self.alpha, beta: self.beta }
    }

    /// Per-step contraction `1 - (1 - eta) h` guaranteed by the certificate.
    pub fn step_factor(&self, h: f64) -> f64 {
        1.0 - (1.0 - self.eta) * h
    }

    /// Decay rate at the largest feasible delta.
    pub fn max_rate(&self) -> f64 {
        -(1.0 - self.max_delta).ln() / self.h_max
    }

    /// Checks a candidate range `(0, upper]` for delta against the bound.
    pub fn range_note(&self, upper: f64) -> RangeNote {
        let feasible = upper <= self.max_delta + tol::INEQ_SLACK;
        let h_min_at_upper = upper / (1.0 - self.eta);
        let message = if feasible {
            format!("delta range (0, {upper}] is feasible (largest feasible delta {:.6})", self.max_delta)
        } else {
            format!(
                "delta range (0, {upper}] is infeasible: delta must satisfy delta <= (1 - eta)/(2n) = {:.6}; \
                 at delta = {upper} the step window would be [{h_min_at_upper:.6}, {:.6}], which is empty; \
                 rate -ln(1 - delta)/h_max is at most {:.6}",
                self.max_delta,
                self.h_max,
                self.max_rate()
            )
        };
        RangeNote { upper, feasible, h_min_at_upper, max_delta: self.max_delta, max_rate: self.max_rate(), message }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeNote {
    pub upper: f64,
    pub feasible: bool,
    pub h_min_at_upper: f64,
    pub max_delta: f64,
    pub max_rate: f64,
    pub message: String,
}

/// `(1 - eta) / (2n)`.
pub fn max_feasible_delta(n: usize, bounds: &CouplingBounds) -> f64 {
    (1.0 - bounds.eta()) / (2 * n) as f64
}

/// Default interior choice, `0.9` of the largest feasible delta.
pub fn default_delta(n: usize, bounds: &CouplingBounds) -> f64 {
    0.9 * max_feasible_delta(n, bounds)
}

/// Like [`ParameterCertificate::evaluate`] but an infeasible delta is an error.
pub fn solve_parameters(n: usize, bounds: &CouplingBounds, delta: f64) -> Result<ParameterCertificate> {
    let cert = ParameterCertificate::evaluate(n, bounds, delta)?;
    if cert.feasible {
        Ok(cert)
    } else {
        Err(FormationError::InfeasibleParameters { delta, max_delta: cert.max_delta })
    }
}

/// Angle of agent `i` (1-based, `1..=4`) in the four-agent example:
/// `pi t / (2 i (1 + |t|))` for the first two agents and
/// `-i pi t / (8 (1 + |t|))` for the other two.
pub fn paper_angle_profile(i: usize, t: f64) -> Result<f64> {
    let s = t / (1.0 + t.abs());
    match i {
        1 | 2 => Ok(PI * s / (2 * i) as f64),
        3 | 4 => Ok(-(i as f64) * PI * s / 8.0),
        _ => Err(FormationError::IndexOutOfRange { index: i, range: "1..=4".into() }),
    }
}

/// Frame angles of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleProfile {
    /// The four-agent example profile.
    PaperExample,
    /// Time-invariant angles, one per agent.
    Constant { values: Vec<f64> },
    /// Piecewise-constant tables of `[start_time, angle]` rows, one table per
    /// agent, sorted by start time. Before the first start the first angle
    /// applies.
    Piecewise { tables: Vec<Vec<[f64; 2]>> },
}

impl AngleProfile {
    /// Problems with the profile for `n` agents, empty when usable.
    pub fn problems(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            AngleProfile::PaperExample => {
                if n != 4 {
                    out.push(format!("angles: paper_example is defined for 4 agents, scenario has {n}"));
                }
            }
            AngleProfile::Constant { values } => {
                if values.len() != n {
                    out.push(format!("angles.values: {} entries for {n} agents", values.len()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    out.push("angles.values: non-finite angle".into());
                }
            }
            AngleProfile::Piecewise { tables } => {
                if tables.len() != n {
                    out.push(format!("angles.tables: {} tables for {n} agents", tables.len()));
                }
                for (i, table) in tables.iter().enumerate() {
                    if table.is_empty() {
                        out.push(format!("angles.tables[{}]: empty table", i + 1));
                    }
                    if table.iter().flatten().any(|v| !v.is_finite()) {
                        out.push(format!("angles.tables[{}]: non-finite entry", i + 1));
                    }
                    if table.windows(2).any(|w| w[1][0] <= w[0][0]) {
                        out.push(format!("angles.tables[{}]: start times must increase", i + 1));
                    }
                }
            }
        }
        out
    }
}

impl RotationProfile for AngleProfile {
    fn angle(&self, i: usize, t: f64) -> f64 {
        match self {
            AngleProfile::PaperExample => paper_angle_profile(i + 1, t).expect("profile validated for 4 agents"),
            AngleProfile::Constant { values } => values[i],
            AngleProfile::Piecewise { tables } => {
                let table = &tables[i];
                table.iter().rev().find(|row| row[0] <= t).unwrap_or(&table[0])[1]
            }
        }
    }
}

/// Switching signal: mode `pattern[(k / dwell) mod len]` is active at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySchedule {
    modes: Vec<SignedDigraph>,
    dwell: usize,
    pattern: Vec<usize>,
}

impl TopologySchedule {
    /// `pattern` holds 0-based mode indices. Every mode must be coupling-valid
    /// and neighbor-shared under `bounds`.
    pub fn new(modes: Vec<SignedDigraph>, dwell: usize, pattern: Vec<usize>, bounds: &CouplingBounds) -> Result<Self> {
        let problems = schedule_problems(&modes, dwell, &pattern);
        if !problems.is_empty() {
            return Err(FormationError::ConfigInvalid(problems));
        }
        for (m, g) in modes.iter().enumerate() {
            let report = g.validate_coupling(bounds);
            if !report.pass() {
                let clauses: Vec<String> = report.violations.iter().map(|c| c.to_string()).collect();
                return Err(FormationError::HypothesisViolation(format!(
                    "mode {}: coupling bounds violated: {}",
                    m + 1,
                    clauses.join("; ")
                )));
            }
            if let Some((p, q)) = g.unshared_pair() {
                return Err(FormationError::HypothesisViolation(format!(
                    "mode {}: not neighbor shared (vertices {} and {} have no common positive in-neighbor)",
                    m + 1,
                    p + 1,
                    q + 1
                )));
            }
        }
        Ok(Self { modes, dwell, pattern })
    }

    /// A single fixed topology.
    pub fn fixed(graph: SignedDigraph, bounds: &CouplingBounds) -> Result<Self> {
        Self::new(vec![graph], 1, vec![0], bounds)
    }

    pub fn modes(&self) -> &[SignedDigraph] {
        &self.modes
    }

    pub fn dwell(&self) -> usize {
        self.dwell
    }

    pub fn pattern(&self) -> &[usize] {
        &self.pattern
    }

    /// 0-based mode index active at step `k`.
    pub fn mode_at(&self, k: usize) -> usize {
        self.pattern[(k / self.dwell) % self.pattern.len()]
    }

    pub fn graph_at(&self, k: usize) -> &SignedDigraph {
        &self.modes[self.mode_at(k)]
    }
}

pub(crate) fn schedule_problems(modes: &[SignedDigraph], dwell: usize, pattern: &[usize]) -> Vec<String> {
    let mut out = Vec::new();
    if modes.is_empty() {
        out.push("schedule: no modes".into());
    }
    if dwell == 0 {
        out.push("schedule.dwell: must be at least 1".into());
    }
    if pattern.is_empty() {
        out.push("schedule.pattern: empty".into());
    }
    for &p in pattern {
        if p >= modes.len() {
            out.push(format!("schedule.pattern: mode {} is not defined ({} modes)", p + 1, modes.len()));
        }
    }
    if let Some(n) = modes.first().map(|g| g.n()) {
        if modes.iter().any(|g| g.n() != n) {
            out.push("modes: vertex counts differ".into());
        }
    }
    out
}

/// Sampling-interval policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HPolicy {
    Constant {
        h: f64,
    },
    /// Independent uniform draws from `[lo, hi]` each step.
    UniformRandom {
        lo: f64,
        hi: f64,
        seed: u64,
    },
}

/// Stop after `max_steps` steps, or earlier once the pairwise error falls to
/// `threshold` times its initial value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub max_steps: usize,
    pub threshold: Option<f64>,
}

impl Default for Horizon {
    fn default() -> Self {
        Self { max_steps: 2000, threshold: Some(1e-3) }
    }
}

/// Everything a run needs, already validated.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub params: ParameterCertificate,
    pub spec: FormationSpec,
    pub initial: Vec<Vector2<f64>>,
    pub schedule: TopologySchedule,
    pub angles: AngleProfile,
    pub step_policy: HPolicy,
    pub horizon: Horizon,
    pub record_certificates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub k: usize,
    pub t: f64,
    /// Interval used for the step out of this row; absent on the last row.
    pub h: Option<f64>,
    /// 1-based mode active for the step out of this row.
    pub mode: Option<usize>,
    pub positions: Vec<[f64; 2]>,
    pub err_inf: f64,
    pub bound: f64,
    pub certificate: Option<Lemma6Certificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryLog {
    pub params: ParameterCertificate,
    pub desired: Vec<[f64; 2]>,
    /// `|E|_1`, the induced 1-norm of the pairwise difference matrix.
    pub e_norm1: f64,
    pub eps0_inf: f64,
    pub threshold: Option<f64>,
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn n(&self) -> usize {
        self.desired.len()
    }

    pub fn initial_error(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.err_inf)
    }

    pub fn final_row(&self) -> &LogRow {
        self.rows.last().expect("a log has at least the initial row")
    }

    /// True when the threshold was reached (or the error is zero).
    pub fn converged(&self) -> bool {
        let last = self.final_row().err_inf;
        match self.threshold {
            Some(th) => last <= th * self.initial_error(),
            None => last == 0.0,
        }
    }

    /// Writes the trajectory table with a header row. Numbers carry 17
    /// significant digits; absent values are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["k", "t", "h", "mode"].iter().map(|s| s.to_string()).collect();
        for i in 1..=self.n() {
            header.push(format!("p_{i}x"));
            header.push(format!("p_{i}y"));
        }
        header.extend(["err_inf", "bound", "cert_max_colsum", "cert_bound", "cert_pass"].iter().map(|s| s.to_string()));
        w.write_record(&header).map_err(csv_error)?;
        let num = |x: f64| format!("{x:.16e}");
        for row in &self.rows {
            let mut rec = vec![row.k.to_string(), num(row.t), row.h.map(num).unwrap_or_default()];
            rec.push(row.mode.map(|m| m.to_string()).unwrap_or_default());
            for p in &row.positions {
                rec.push(num(p[0]));
                rec.push(num(p[1]));
            }
            rec.push(num(row.err_inf));
            rec.push(num(row.bound));
            match &row.certificate {
                Some(c) => {
                    rec.push(num(c.max_column_sum));
                    rec.push(num(c.bound));
                    rec.push(c.pass.to_string());
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 3)),
            }
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| FormationError::Parse(e.to_string()))
    }
}

fn csv_error(e: csv::Error) -> FormationError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FormationError::Io(io),
        other => FormationError::Parse(format!("{other:?}")),
    }
}

/// Runs the scenario. With certificate recording on, a failing per-step
/// certificate aborts the run with [`FormationError::CertificateFailure`].
pub fn run(sim: &Simulation) -> Result<TrajectoryLog> {
    let n = sim.spec.n();
    let params = &sim.params;
    let bounds = params.bounds();
    let d = sim.spec.stacked();
    let mut state = AgentState::new(sim.initial.clone(), 0.0)?;
    let eps0: DVector<f64> = state.stacked() - &d;
    let e_norm1 = pairwise_difference_matrix(n)?.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let eps0_inf = eps0.amax();
    let err0 = pairwise_error_inf(&eps0);
    let target = sim.horizon.threshold.map(|th| th * err0);
    let mut rng = match sim.step_policy {
        HPolicy::UniformRandom { seed, .. } => Some(sampling::rng(seed)),
        HPolicy::Constant { .. } => None,
    };
    let mut warned = false;
    let mut rows = Vec::with_capacity(sim.horizon.max_steps.min(100_000) + 1);
    let mut decay = 1.0;

    for k in 0.. {
        let eps = state.stacked() - &d;
        let err = pairwise_error_inf(&eps);
        let mut row = LogRow {
            k,
            t: state.time,
            h: None,
            mode: None,
            positions: state.positions.iter().map(|p| [p.x, p.y]).collect(),
            err_inf: err,
            bound: decay * e_norm1 * eps0_inf,
            certificate: None,
        };
        let done = k >= sim.horizon.max_steps || target.is_some_and(|t| err <= t);
        if done {
            rows.push(row);
            break;
        }

        let h = match (&sim.step_policy, rng.as_mut()) {
            (HPolicy::Constant { h }, _) => *h,
            (HPolicy::UniformRandom { lo, hi, .. }, Some(r)) => r.random_range(*lo..=*hi),
            (HPolicy::UniformRandom { .. }, None) => unreachable!("rng is created for random policies"),
        };
        let mode = sim.schedule.mode_at(k);
        let graph = &sim.schedule.modes()[mode];
        let angles = sim.angles.angles(n, state.time);
        if !warned {
            let outside = angles_outside_domain(&angles);
            if !outside.is_empty() {
                warn!("step {k}: frame angles of agents {outside:?} (0-based) leave (-pi/2, pi/2]");
                warned = true;
            }
        }
        if sim.record_certificates {
            let cert = lemma6_certificate(graph, &angles, h, &bounds, params.window(), k)?;
            debug!("step {k}: certificate max column sum {:.6} <= {:.6}", cert.max_column_sum, cert.bound);
            row.certificate = Some(cert);
        }
        row.h = Some(h);
        row.mode = Some(mode + 1);
        rows.push(row);

        state = step_agentwise(&state, h, graph, &sim.spec, &sim.angles);
        decay *= 1.0 - params.delta;
    }

    Ok(TrajectoryLog {
        params: *params,
        desired: sim.spec.desired().iter().map(|p| [p.x, p.y]).collect(),
        e_norm1,
        eps0_inf,
        threshold: sim.horizon.threshold,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub steps: usize,
    /// `err_{k+1} / err_k`, skipping zero denominators.
    pub ratios: Vec<f64>,
    pub max_ratio: Option<f64>,
    /// Steps whose ratio exceeds `1 - delta`.
    pub ratios_above_one_minus_delta: usize,
    /// Steps with `err_{k+1} > (1 - (1 - eta) h_k) err_k + 1e-9`.
    pub steps_above_step_bound: usize,
    pub first_step_above_step_bound: Option<usize>,
    /// Rows with `err_k > (1 - delta)^k |E|_1 |eps_0|_inf + 1e-6`.
    pub bound_violations: usize,
    /// Least-squares decay rate of `ln err` against time; absent when fewer
    /// than two positive errors are logged.
    pub empirical_rate: Option<f64>,
    pub theoretical_rate: f64,
    pub initial_error: f64,
    pub final_error: f64,
    /// `max_{p,q} |p^p - p^q - d^p + d^q|_inf` at the last row.
    pub final_shape_error: f64,
    pub converged: bool,
    pub params: ParameterCertificate,
}

pub fn convergence_report(log: &TrajectoryLog) -> ConvergenceReport {
    let params = log.params;
    let mut ratios = Vec::new();
    let mut above_delta = 0;
    let mut above_step = 0;
    let mut first_above_step = None;
    for pair in log.rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.err_inf > 0.0 {
            let r = b.err_inf / a.err_inf;
            if r > 1.0 - params.delta {
                above_delta += 1;
            }
            ratios.push(r);
        }
        if let Some(h) = a.h {
            if b.err_inf > params.step_factor(h) * a.err_inf + tol::INEQ_SLACK {
                above_step += 1;
                first_above_step.get_or_insert(a.k);
            }
        }
    }
    let bound_violations = log.rows.iter().filter(|r| r.err_inf > r.bound + 1e-6).count();
    let points: Vec<(f64, f64)> = log.rows.iter().filter(|r| r.err_inf > 0.0).map(|r| (r.t, r.err_inf.ln())).collect();
    let final_row = log.final_row();
    ConvergenceReport {
        steps: log.rows.len() - 1,
        max_ratio: ratios.iter().copied().reduce(f64::max),
        ratios,
        ratios_above_one_minus_delta: above_delta,
        steps_above_step_bound: above_step,
        first_step_above_step_bound: first_above_step,
        bound_violations,
        empirical_rate: least_squares_slope(&points).map(|s| -s),
        theoretical_rate: params.rate,
        initial_error: log.initial_error(),
        final_error: final_row.err_inf,
        final_shape_error: shape_error(&final_row.positions, &log.desired),
        converged: log.converged(),
        params,
    }
}

/// `max_{p,q} |p^p - p^q - (d^p - d^q)|_inf`.
pub fn shape_error(positions: &[[f64; 2]], desired: &[[f64; 2]]) -> f64 {
    let mut worst = 0.0_f64;
    for p in 0..positions.len() {
        for q in 0..positions.len() {
            for j in 0..2 {
                let v = positions[p][j] - positions[q][j] - (desired[p][j] - desired[q][j]);
                worst = worst.max(v.abs());
            }
        }
    }
    worst
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    Some(sxy / sxx)
}
