//! The verification suite behind `formation verify`, and the randomized
//! batches used by the acceptance run.
//!
//! Hypothesis failures (invalid graphs, steps outside the window) come back
//! as errors. Checker failures are collected into the report so one run shows
//! every result.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{lemma6_columns, Lemma6Certificate, RotationProfile};
use crate::error::{FormationError, Result};
use crate::polytope::{
    check_lemma3, check_lemma4, check_lemma5, check_prop4, prop3_report, section_extremes, section_vertices_oracle,
    Hypotheses, LemmaId, LemmaReport, SamplingPlan, ORACLE_MAX_DIM,
};
use crate::sampling::{self, random_admissible_graph, random_angles};
use crate::scenario::Scenario;
use crate::signed_graph::{CouplingBounds, GeneralStochasticMatrix};
use crate::sim::HPolicy;
use crate::tol;

/// Probe steps (evenly spaced over the horizon) for the angle-dependent checks.
pub const DEFAULT_PROBES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub plan: SamplingPlan,
    pub probes: usize,
    /// Steps covered by the per-step certificate sweep; defaults to the
    /// scenario horizon.
    pub certificate_steps: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { plan: SamplingPlan::default(), probes: DEFAULT_PROBES, certificate_steps: None }
    }
}

/// Per-step certificates over a stretch of the scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateSweep {
    pub steps_checked: usize,
    pub steps_passed: usize,
    /// Failing step indices, in order.
    pub failing_steps: Vec<usize>,
    pub first_failure: Option<Lemma6Certificate>,
    /// Certificate with the largest column weight.
    pub worst: Option<Lemma6Certificate>,
    pub pass: bool,
}

impl CertificateSweep {
    pub fn summary(&self) -> String {
        let worst = self.worst.as_ref().map_or(String::new(), |w| {
            format!("; worst column weight {:.6} at step {} (bound {:.6})", w.max_column_sum, w.step, w.bound)
        });
        format!(
            "Lemma6: {} ({}/{} steps certified{})",
            if self.pass { "pass" } else { "FAIL" },
            self.steps_passed,
            self.steps_checked,
            worst
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub reports: Vec<LemmaReport>,
    pub certificates: CertificateSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteOutcome {
    Pass,
    LemmaViolation,
    CertificateFailure,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.outcome() == SuiteOutcome::Pass
    }

    /// A checker counterexample outranks a failing step certificate.
    pub fn outcome(&self) -> SuiteOutcome {
        if self.reports.iter().any(|r| !r.pass) {
            SuiteOutcome::LemmaViolation
        } else if !self.certificates.pass {
            SuiteOutcome::CertificateFailure
        } else {
            SuiteOutcome::Pass
        }
    }
}

/// Turns a checker counterexample into a failed report; other errors pass
/// through.
pub fn collect(result: Result<LemmaReport>) -> Result<LemmaReport> {
    match result {
        Err(FormationError::LemmaViolation(report)) => Ok(*report),
        other => other,
    }
}

/// Oracle equality of the constructed section extremes against brute-force
/// enumeration, `2 <= n <= 6`.
pub fn section_oracle_report(n: usize) -> Result<LemmaReport> {
    let mut report = LemmaReport::new(LemmaId::SectionOracle, Hypotheses { n, ..Hypotheses::default() });
    let oracle = section_vertices_oracle(n)?;
    let built = section_extremes(n)?;
    report.sample_count = oracle.len();
    if oracle.len() != n * (n - 1) {
        report.fail(format!("oracle found {} vertices, expected {}", oracle.len(), n * (n - 1)));
    }
    if !oracle.same_points(&built, 1e-9) {
        report.fail("constructed extremes differ from the enumerated vertices".into());
    }
    report.worst_slack = 0.0;
    Ok(report)
}

/// `max |S^T e|_1 <= eta(S) <= 1 - alpha + 2 beta`, `eta(S) <= 1 - margin` and
/// `margin >= alpha - 2 beta`.
pub fn ergodic_chain_report(s: &GeneralStochasticMatrix, b: &CouplingBounds) -> LemmaReport {
    let mut report = LemmaReport::new(
        LemmaId::ErgodicChain,
        Hypotheses { n: s.n(), alpha: Some(b.alpha), beta: Some(b.beta), ..Hypotheses::default() },
    );
    let eta_s = s.ergodic_coefficient();
    let margin = s.shared_weight_margin();
    report.record_le("eta(S) vs 1 - alpha + 2 beta", eta_s, b.eta());
    report.check_le("eta(S) vs 1 - margin", eta_s, 1.0 - margin);
    report.record_le("alpha - 2 beta vs margin", b.alpha - 2.0 * b.beta, margin);
    report.sample_count = 1;
    if !report.worst_slack.is_finite() {
        report.worst_slack = 0.0;
    }
    report
}

/// Step sizes and times the scenario would use, reproducing the run's draws.
fn step_sequence(scenario: &Scenario, steps: usize) -> Vec<(f64, f64)> {
    use rand::Rng;
    let mut out = Vec::with_capacity(steps);
    let mut t = 0.0;
    match scenario.simulation.step_policy {
        HPolicy::Constant { h } => {
            for _ in 0..steps {
                out.push((t, h));
                t += h;
            }
        }
        HPolicy::UniformRandom { lo, hi, seed } => {
            let mut rng = sampling::rng(seed);
            for _ in 0..steps {
                let h = rng.random_range(lo..=hi);
                out.push((t, h));
                t += h;
            }
        }
    }
    out
}

/// Per-step certificates for the first `steps` steps of the scenario.
pub fn certificate_sweep(scenario: &Scenario, steps: usize) -> Result<CertificateSweep> {
    let sim = &scenario.simulation;
    let params = &sim.params;
    let seq = step_sequence(scenario, steps);
    if let Some((k, (_, h))) = seq
        .iter()
        .enumerate()
        .find(|(_, (_, h))| !(*h >= params.h_min - tol::INEQ_SLACK && *h <= params.h_max + tol::INEQ_SLACK))
    {
        return Err(FormationError::HypothesisViolation(format!(
            "step {k}: h = {h} outside [{}, {}]",
            params.h_min, params.h_max
        )));
    }
    let n = scenario.n();
    let certs = seq
        .par_iter()
        .enumerate()
        .map(|(k, (t, h))| {
            let graph = sim.schedule.graph_at(k);
            lemma6_columns(graph, &sim.angles.angles(n, *t), *h, params.eta, k)
        })
        .collect::<Result<Vec<_>>>()?;
    let failing_steps: Vec<usize> = certs.iter().filter(|c| !c.pass).map(|c| c.step).collect();
    let worst = certs.iter().max_by(|a, b| a.max_column_sum.total_cmp(&b.max_column_sum)).cloned();
    Ok(CertificateSweep {
        steps_checked: certs.len(),
        steps_passed: certs.len() - failing_steps.len(),
        first_failure: failing_steps.first().map(|&k| certs[k].clone()),
        pass: failing_steps.is_empty(),
        failing_steps,
        worst,
    })
}

/// The full suite for a scenario: section oracle (when `n <= 6`), the
/// ergodic chain and the stochastic-map checks per mode, the step bound at
/// the largest interval, rotation and projection checks at probe steps, and
/// the per-step certificate sweep.
pub fn run_suite(scenario: &Scenario, opts: &VerifyOptions) -> Result<SuiteReport> {
    let n = scenario.n();
    let b = scenario.bounds;
    let sim = &scenario.simulation;
    let mut reports = Vec::new();

    if n <= ORACLE_MAX_DIM {
        reports.push(section_oracle_report(n)?);
    }
    let matrices = sim.schedule.modes().iter().map(|g| g.stochastic(&b)).collect::<Result<Vec<_>>>()?;
    for (m, s) in matrices.iter().enumerate() {
        let mut chain = ergodic_chain_report(s, &b);
        chain.hypotheses.mode = Some(m + 1);
        reports.push(chain);
        for mut r in [collect(check_lemma3(s, &b))?, collect(check_lemma4(s, &b, &opts.plan))?] {
            r.hypotheses.mode = Some(m + 1);
            reports.push(r);
        }
    }
    reports.push(prop3_report(scenario.max_step(), n, &opts.plan));

    let horizon = opts.certificate_steps.unwrap_or(sim.horizon.max_steps).max(1);
    let seq = step_sequence(scenario, horizon);
    let probes = opts.probes.max(1);
    let mut probe_steps: Vec<usize> =
        (0..probes).map(|j| if probes == 1 { 0 } else { j * (horizon - 1) / (probes - 1) }).collect();
    probe_steps.dedup();
    for k in probe_steps {
        let (t, h) = seq[k];
        let mode = sim.schedule.mode_at(k);
        let angles = sim.angles.angles(n, t);
        let mut p4 = collect(check_prop4(&angles, &opts.plan))?;
        let mut l5 = collect(check_lemma5(h, &matrices[mode], &angles, &b))?;
        for r in [&mut p4, &mut l5] {
            r.hypotheses.mode = Some(mode + 1);
            r.hypotheses.time = Some(t);
            r.hypotheses.h = Some(h);
        }
        reports.push(p4);
        reports.push(l5);
    }

    let certificates = certificate_sweep(scenario, horizon)?;
    Ok(SuiteReport { reports, certificates })
}

/// Merged reports for `tuples` random admissible tuples of size `n` under
/// `bounds`: ergodic chain, both stochastic-map checks, the rotation check and
/// the step-map check (at `h = 1/(2n)`), plus the step bound itself.
/// Returns `None` when the admissible set is empty.
pub fn randomized_suite(
    n: usize,
    bounds: &CouplingBounds,
    tuples: usize,
    seed: u64,
    plan: &SamplingPlan,
) -> Result<Option<Vec<LemmaReport>>> {
    let mut rng = sampling::rng(seed);
    let mut draws = Vec::with_capacity(tuples);
    for t in 0..tuples {
        let Some(g) = random_admissible_graph(&mut rng, n, bounds, 1_000_000) else {
            if t == 0 {
                return Ok(None);
            }
            return Err(FormationError::InvalidArgument(format!(
                "no admissible graph found for n = {n}, alpha = {}, beta = {}",
                bounds.alpha, bounds.beta
            )));
        };
        let angles = random_angles(&mut rng, n);
        draws.push((g.stochastic(bounds)?, angles, plan.seed.wrapping_add(t as u64)));
    }
    let h = 1.0 / (2 * n) as f64;
    let per_tuple = draws
        .par_iter()
        .map(|(s, angles, seed)| -> Result<[LemmaReport; 5]> {
            let tuple_plan = SamplingPlan { seed: *seed, ..*plan };
            Ok([
                ergodic_chain_report(s, bounds),
                collect(check_lemma3(s, bounds))?,
                collect(check_lemma4(s, bounds, &tuple_plan))?,
                collect(check_prop4(angles, &tuple_plan))?,
                collect(check_lemma5(h, s, angles, bounds))?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;

    let hyp = Hypotheses { n, alpha: Some(bounds.alpha), beta: Some(bounds.beta), ..Hypotheses::default() };
    let ids = [LemmaId::ErgodicChain, LemmaId::Lemma3, LemmaId::Lemma4, LemmaId::Prop4, LemmaId::Lemma5];
    let mut merged: Vec<LemmaReport> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let parts: Vec<LemmaReport> = per_tuple.iter().map(|r| r[i].clone()).collect();
            LemmaReport::merge(*id, hyp.clone(), &parts)
        })
        .collect();
    merged.push(prop3_report(h, n, &SamplingPlan { samples: tuples, ..*plan }));
    Ok(Some(merged))
}
