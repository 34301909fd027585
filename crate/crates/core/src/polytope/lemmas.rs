//! Constructive checkers for the contraction properties of the section
//! polytopes under the stochastic, rotation and projection maps.
//!
//! Every checker evaluates the exact generator images and, where the claim is
//! a set inclusion, a batch of seeded Dirichlet samples of the hull as well.
//! The inclusions are convex so the generators decide them; the samples catch
//! implementation mistakes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::{
    cross_extremes, l1_membership, lifted_extremes, lifted_hyperplane_residual, min_weight_combination,
    min_weight_decomposition, polar_membership_both,
};
use crate::dynamics::{block_rotation, lift, projection_lambda};
use crate::error::{FormationError, Result};
use crate::sampling::{self, sample_in_hull};
use crate::signed_graph::{CouplingBounds, GeneralStochasticMatrix, SignedDigraph};
use crate::tol;

/// ASCII "F0RM".
pub const DEFAULT_SEED: u64 = 0x4630_524D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingPlan {
    /// Hull samples per check (cheap linear-algebra tests).
    pub samples: usize,
    /// Samples that need an LP solve each.
    pub lp_samples: usize,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self { samples: 10_000, lp_samples: 64, seed: DEFAULT_SEED }
    }
}

impl SamplingPlan {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaId {
    SectionOracle,
    ErgodicChain,
    Lemma3,
    Lemma4,
    Prop3,
    Prop4,
    Lemma5,
    Lemma6,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Hypotheses {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

/// Outcome of one checker run. `worst_slack` is the smallest margin
/// `bound - value` of the checked claim over all tested points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub lemma: LemmaId,
    pub hypotheses: Hypotheses,
    pub worst_slack: f64,
    pub sample_count: usize,
    pub pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

impl LemmaReport {
    pub(crate) fn new(lemma: LemmaId, hypotheses: Hypotheses) -> Self {
        Self { lemma, hypotheses, worst_slack: f64::INFINITY, sample_count: 0, pass: true, violations: Vec::new() }
    }

    /// Records `value <= bound` (with the inequality slack).
    pub(crate) fn record_le(&mut self, what: &str, value: f64, bound: f64) {
        self.worst_slack = self.worst_slack.min(bound - value);
        if value > bound + tol::INEQ_SLACK {
            self.fail(format!("{what}: {value} > {bound}"));
        }
    }

    /// Like `record_le` for side conditions that may be tight by design; they
    /// do not enter `worst_slack`.
    pub(crate) fn check_le(&mut self, what: &str, value: f64, bound: f64) {
        if value > bound + tol::INEQ_SLACK {
            self.fail(format!("{what}: {value} > {bound}"));
        }
    }

    /// Records an identity that must hold to the matrix tolerance.
    pub(crate) fn record_zero(&mut self, what: &str, residual: f64) {
        if residual > tol::MATRIX {
            self.fail(format!("{what}: residual {residual:e}"));
        }
    }

    pub(crate) fn fail(&mut self, msg: String) {
        self.pass = false;
        if self.violations.len() < 16 {
            self.violations.push(msg);
        }
    }

    pub(crate) fn finish(mut self) -> Result<Self> {
        if !self.worst_slack.is_finite() {
            self.worst_slack = 0.0;
        }
        if self.pass {
            Ok(self)
        } else {
            Err(FormationError::LemmaViolation(Box::new(self)))
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "{:?}: {} (worst slack {:.3e}, {} samples){}",
            self.lemma,
            if self.pass { "pass" } else { "FAIL" },
            self.worst_slack,
            self.sample_count,
            self.violations.first().map(|v| format!("; first violation: {v}")).unwrap_or_default()
        )
    }

    /// Merges several runs of the same checker: worst slack and sample totals.
    pub fn merge(lemma: LemmaId, hypotheses: Hypotheses, parts: &[LemmaReport]) -> Self {
        let mut out = Self::new(lemma, hypotheses);
        for p in parts {
            out.worst_slack = out.worst_slack.min(p.worst_slack);
            out.sample_count += p.sample_count;
            if !p.pass {
                out.pass = false;
            }
            for v in &p.violations {
                if out.violations.len() < 16 {
                    out.violations.push(v.clone());
                }
            }
        }
        if !out.worst_slack.is_finite() {
            out.worst_slack = 0.0;
        }
        out
    }
}

fn bounds_hypotheses(s: &GeneralStochasticMatrix, b: &CouplingBounds) -> Hypotheses {
    Hypotheses { n: s.n(), alpha: Some(b.alpha), beta: Some(b.beta), ..Hypotheses::default() }
}

/// The stochastic matrix must lie in `S_beta` and come from a coupling-valid,
/// neighbor-shared graph.
fn require_admissible(s: &GeneralStochasticMatrix, b: &CouplingBounds) -> Result<SignedDigraph> {
    if s.n() < 2 {
        return Err(FormationError::HypothesisViolation("need at least two agents".into()));
    }
    if !s.in_s_beta(b.beta) {
        return Err(FormationError::HypothesisViolation(format!("matrix is not in S_beta for beta = {}", b.beta)));
    }
    let g = SignedDigraph::from_stochastic(s)?;
    let report = g.validate_coupling(b);
    if !report.pass() {
        let clauses: Vec<String> = report.violations.iter().map(|c| c.to_string()).collect();
        return Err(FormationError::HypothesisViolation(format!("coupling bounds violated: {}", clauses.join("; "))));
    }
    if let Some((p, q)) = g.unshared_pair() {
        return Err(FormationError::HypothesisViolation(format!(
            "graph is not neighbor shared: vertices {} and {} have no common positive in-neighbor",
            p + 1,
            q + 1
        )));
    }
    Ok(g)
}

/// `S^T` applied blockwise to every lifted generator stays on the hyperplanes
/// and inside the section polytope scaled by `1 - alpha + 2 beta`, certified by
/// both the l1 norm and the LP decomposition weight. The chain
/// `max |S^T e|_1 <= eta(S) <= 1 - shared margin, eta(S) <= 1 - alpha + 2 beta`
/// is checked link by link.
pub fn check_lemma3(s: &GeneralStochasticMatrix, b: &CouplingBounds) -> Result<LemmaReport> {
    require_admissible(s, b)?;
    let mut report = LemmaReport::new(LemmaId::Lemma3, bounds_hypotheses(s, b));
    let gens = lifted_extremes(s.n())?;
    let st = lift(&s.matrix().transpose());
    let bound = b.eta();
    let eta_s = s.ergodic_coefficient();
    report.record_le("ergodic coefficient", eta_s, bound);
    report.check_le("ergodic coefficient vs shared margin", eta_s, 1.0 - s.shared_weight_margin());
    for g in gens.points() {
        let y = &st * g;
        let l1 = y.lp_norm(1);
        report.check_le("|S^T e|_1 vs ergodic coefficient", l1, eta_s);
        report.record_le("|S^T e|_1", l1, bound);
        report.record_zero("hyperplane", lifted_hyperplane_residual(&y));
        match min_weight_decomposition(&y, &gens) {
            Ok(cert) => {
                report.record_le("decomposition weight", cert.weight_sum, bound);
                if cert.weight_sum >= 1.0 {
                    report.fail(format!("decomposition weight {} is not below 1", cert.weight_sum));
                }
            }
            Err(e) => report.fail(format!("image of a generator has no decomposition: {e}")),
        }
        report.sample_count += 1;
    }
    report.finish()
}

/// Sampled two-sided check that `S^T` maps the lifted section onto the part
/// of `S^T P_2n` lying on the hyperplanes, plus `|S^T x|_1 <= 1 + 2 beta` on
/// the whole crosspolytope.
///
/// The reverse inclusion rests on `S 1 = 1`: the hyperplane sums of `S^T x`
/// equal those of `x`, so a crosspolytope point whose image is on the
/// hyperplanes is itself in the section. The sampled preimage search below
/// confirms this by LP over the generator images.
pub fn check_lemma4(s: &GeneralStochasticMatrix, b: &CouplingBounds, plan: &SamplingPlan) -> Result<LemmaReport> {
    require_admissible(s, b)?;
    let mut report = LemmaReport::new(LemmaId::Lemma4, bounds_hypotheses(s, b));
    let n = s.n();
    let gens = lifted_extremes(n)?;
    let cross = cross_extremes(2 * n)?;
    let st = lift(&s.matrix().transpose());
    let images: DMatrix<f64> = &st * gens.as_matrix();
    let lambda = projection_lambda(n);
    let mut rng = sampling::rng(plan.seed);

    // forward: S^T conv(V) lies in S^T P_2n and on the hyperplanes
    let forward = gens
        .points()
        .iter()
        .cloned()
        .chain((0..plan.samples).map(|_| sample_in_hull(&mut rng, &gens)))
        .collect::<Vec<_>>();
    for x in &forward {
        let y = &st * x;
        report.check_le("preimage |x|_1", x.lp_norm(1), 1.0);
        report.record_zero("image on hyperplanes", lifted_hyperplane_residual(&y));
        report.record_le("|S^T x|_1 on the section", y.lp_norm(1), b.eta());
        report.sample_count += 1;
    }

    // crosspolytope bound and the hyperplane-sum identity
    for _ in 0..plan.samples {
        let z = random_cross_point(&mut rng, &cross);
        let y = &st * &z;
        report.record_le("|S^T x|_1 on the crosspolytope", y.lp_norm(1), 1.0 + 2.0 * b.beta);
        let sums_z = coordinate_sums(&z);
        let sums_y = coordinate_sums(&y);
        report
            .record_zero("hyperplane sums preserved", (sums_z[0] - sums_y[0]).abs().max((sums_z[1] - sums_y[1]).abs()));
        report.sample_count += 1;
    }

    // reverse: points of S^T P_2n on the hyperplanes have a preimage in conv(V)
    for _ in 0..plan.lp_samples {
        let z = random_cross_point(&mut rng, &cross);
        let projected = &lambda * z;
        let x = &projected / projected.lp_norm(1).max(1.0);
        report.check_le("projected point |x|_1", x.lp_norm(1), 1.0);
        let y = &st * &x;
        report.record_zero("sampled image on hyperplanes", lifted_hyperplane_residual(&y));
        match min_weight_combination(&y, &images) {
            Ok(cert) => report.check_le("preimage weight", cert.weight_sum, 1.0),
            Err(e) => report.fail(format!("no preimage in the lifted section: {e}")),
        }
        report.sample_count += 1;
    }
    report.finish()
}

fn coordinate_sums(x: &DVector<f64>) -> [f64; 2] {
    let mut s = [0.0; 2];
    for (k, v) in x.iter().enumerate() {
        s[k % 2] += v;
    }
    s
}

/// Dirichlet point of the crosspolytope, pushed to a random radius in (0, 1].
fn random_cross_point<R: Rng + ?Sized>(rng: &mut R, cross: &super::ExtremeSet) -> DVector<f64> {
    let x = sample_in_hull(rng, cross);
    let norm = x.lp_norm(1);
    if norm == 0.0 {
        return x;
    }
    let radius = 1.0 - rng.random::<f64>();
    x * (radius / norm)
}

/// `h P_2n^polar` fits in `P_2n` iff `h <= 1/(2n)`.
pub fn check_prop3(h: f64, n: usize) -> bool {
    prop3_report(h, n, &SamplingPlan { samples: 256, lp_samples: 0, seed: DEFAULT_SEED }).pass
}

/// Evaluates the closed-form condition and the constructive one (the
/// all-ones vertex of the sup-norm ball and random points of it) and requires
/// them to agree.
pub fn prop3_report(h: f64, n: usize, plan: &SamplingPlan) -> LemmaReport {
    let mut report = LemmaReport::new(LemmaId::Prop3, Hypotheses { n, h: Some(h), ..Hypotheses::default() });
    if h.is_nan() || h <= 0.0 || n == 0 {
        report.fail(format!("need h > 0 and n >= 1, got h = {h}, n = {n}"));
        report.worst_slack = f64::NEG_INFINITY;
        return report;
    }
    let dim = 2 * n;
    let closed_form = h <= 1.0 / dim as f64 + tol::INEQ_SLACK;
    let corner = DVector::from_element(dim, 1.0);
    let mut constructive = true;
    let mut rng = sampling::rng(plan.seed);
    let points = std::iter::once(corner)
        .chain((0..plan.samples).map(|_| DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-1.0..=1.0)))));
    for x in points {
        let scaled = h * &x;
        report.worst_slack = report.worst_slack.min(1.0 - scaled.lp_norm(1));
        constructive &= l1_membership(&scaled, 1.0);
        report.sample_count += 1;
    }
    if closed_form != constructive {
        report.fail(format!("closed form says {closed_form}, samples say {constructive}"));
    } else if !closed_form {
        report.fail(format!("h = {h} exceeds 1/(2n) = {}", 1.0 / dim as f64));
    }
    report
}

/// `Lambda R` maps the lifted section into the polar of the crosspolytope and
/// onto the hyperplanes; `R` alone maps it into the polar.
pub fn check_prop4(angles: &[f64], plan: &SamplingPlan) -> Result<LemmaReport> {
    let n = angles.len();
    if n < 2 {
        return Err(FormationError::InvalidArgument("need at least two angles".into()));
    }
    let mut report =
        LemmaReport::new(LemmaId::Prop4, Hypotheses { n, angles: Some(angles.to_vec()), ..Hypotheses::default() });
    let gens = lifted_extremes(n)?;
    let r = block_rotation(angles);
    let lr = projection_lambda(n) * &r;
    let mut rng = sampling::rng(plan.seed);
    let points = gens
        .points()
        .iter()
        .cloned()
        .chain((0..plan.samples).map(|_| sample_in_hull(&mut rng, &gens)))
        .collect::<Vec<_>>();
    for x in &points {
        let rotated = &r * x;
        let (v1, v2) = polar_membership_both(&rotated);
        if v1 != v2 || !v1 {
            report.fail(format!("rotated point leaves the polar (|.|_inf = {})", rotated.amax()));
        }
        let y = &lr * x;
        let (w1, w2) = polar_membership_both(&y);
        if w1 != w2 {
            report.fail("polar membership tests disagree".into());
        }
        report.record_le("|Lambda R x|_inf", y.amax(), 1.0);
        report.record_zero("Lambda R x on hyperplanes", lifted_hyperplane_residual(&y));
        report.sample_count += 1;
    }
    report.finish()
}

/// Both `h Lambda R e` and `h Lambda S^T R e` decompose over the lifted
/// generators with total weight at most 1, for every generator `e`.
pub fn check_lemma5(h: f64, s: &GeneralStochasticMatrix, angles: &[f64], b: &CouplingBounds) -> Result<LemmaReport> {
    require_admissible(s, b)?;
    let n = s.n();
    if angles.len() != n {
        return Err(FormationError::InvalidArgument(format!("{} angles for {n} agents", angles.len())));
    }
    if !(h > 0.0 && h <= 1.0 / (2 * n) as f64 + tol::INEQ_SLACK) {
        return Err(FormationError::HypothesisViolation(format!(
            "step h = {h} outside (0, 1/(2n)] = (0, {}]",
            1.0 / (2 * n) as f64
        )));
    }
    let mut report = LemmaReport::new(
        LemmaId::Lemma5,
        Hypotheses { h: Some(h), angles: Some(angles.to_vec()), ..bounds_hypotheses(s, b) },
    );
    let gens = lifted_extremes(n)?;
    let r = block_rotation(angles);
    let lambda = projection_lambda(n);
    let st = lift(&s.matrix().transpose());
    let plain = h * &lambda * &r;
    let mixed = h * &lambda * st * &r;
    for g in gens.points() {
        for (what, map) in [("h Lambda R e", &plain), ("h Lambda S^T R e", &mixed)] {
            let y = map * g;
            match min_weight_decomposition(&y, &gens) {
                Ok(cert) => report.record_le(what, cert.weight_sum, 1.0),
                Err(e) => report.fail(format!("{what} has no decomposition: {e}")),
            }
            report.sample_count += 1;
        }
    }
    report.finish()
}
