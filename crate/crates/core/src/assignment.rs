//! Grading assignment: who evaluates which papers.
//!
//! An exam has `n` papers, of which `ell` are probe papers (graded by the
//! instructor, true score known) and the rest are regular papers. Each of
//! the `m` evaluators receives a bundle of `K` papers: `K/2` probes and
//! `K/2` regular papers, shuffled together so bundle order does not reveal
//! which is which. Probes are reused across evaluators round-robin with a
//! random rotation; regular papers are dealt round-robin so per-paper load
//! is balanced to within one evaluator.

use crate::rng::RngStream;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaperId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvaluatorId(pub u32);

impl fmt::Display for PaperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EvaluatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("per-evaluator load K must be even and >= 2, got {k}")]
    KNotEven { k: u32 },
    #[error("coverage must be >= 1, got 0")]
    ZeroCoverage,
    #[error("need at least one regular paper: ell = {ell} must be < n = {n}")]
    NoRegularPapers { n: u32, ell: u32 },
    #[error("probe pool too small: ell = {ell} < K/2 = {half_k}")]
    ProbePoolTooSmall { ell: u32, half_k: u32 },
    #[error("regular pool too small: n - ell = {pool} < K/2 = {half_k}")]
    RegularPoolTooSmall { pool: u32, half_k: u32 },
    #[error("not enough grading slots: m*K/2 = {slots} < coverage*(n - ell) = {demand}")]
    InsufficientCapacity { slots: u64, demand: u64 },
}

/// One evaluator's share of the work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluatorBundle {
    /// Probe papers in this bundle (identity hidden from the evaluator).
    pub probes: BTreeSet<PaperId>,
    /// Regular (non-probe) papers in this bundle.
    pub nonprobes: BTreeSet<PaperId>,
    /// Presentation order the evaluator sees: a shuffle of probes ∪ nonprobes.
    pub bundle_order: Vec<PaperId>,
}

/// Full assignment for an exam.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    /// Total paper count; ids are 0..n_papers.
    pub n_papers: u32,
    /// Bundle size per evaluator (even).
    pub k: u32,
    /// The instructor-graded papers.
    pub probe_ids: BTreeSet<PaperId>,
    pub per_evaluator: BTreeMap<EvaluatorId, EvaluatorBundle>,
}

impl AssignmentPlan {
    pub fn ell(&self) -> u32 {
        self.probe_ids.len() as u32
    }

    pub fn m(&self) -> u32 {
        self.per_evaluator.len() as u32
    }

    pub fn is_probe(&self, paper: PaperId) -> bool {
        self.probe_ids.contains(&paper)
    }

    /// Regular papers that at least one evaluator grades, with their graders.
    pub fn graders(&self) -> BTreeMap<PaperId, BTreeSet<EvaluatorId>> {
        let mut out: BTreeMap<PaperId, BTreeSet<EvaluatorId>> = BTreeMap::new();
        for (&e, bundle) in &self.per_evaluator {
            for &p in &bundle.nonprobes {
                out.entry(p).or_default().insert(e);
            }
        }
        out
    }

    /// All regular paper ids, covered or not.
    pub fn regular_ids(&self) -> Vec<PaperId> {
        (0..self.n_papers)
            .map(PaperId)
            .filter(|p| !self.probe_ids.contains(p))
            .collect()
    }
}

/// Which other evaluators each evaluator shares at least one regular paper
/// with. Sharing only a probe does not count.
pub type CoEvaluatorIndex = BTreeMap<EvaluatorId, BTreeSet<EvaluatorId>>;

pub fn co_evaluators(plan: &AssignmentPlan) -> CoEvaluatorIndex {
    let mut index: CoEvaluatorIndex = plan
        .per_evaluator
        .keys()
        .map(|&e| (e, BTreeSet::new()))
        .collect();
    for graders in plan.graders().values() {
        for &a in graders {
            for &b in graders {
                if a != b {
                    index.get_mut(&a).unwrap().insert(b);
                }
            }
        }
    }
    index
}

fn check_feasible(
    n: u32,
    m: u32,
    ell: u32,
    k: u32,
    coverage: u32,
    require_capacity: bool,
) -> Result<(), AssignmentError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(AssignmentError::KNotEven { k });
    }
    if coverage == 0 {
        return Err(AssignmentError::ZeroCoverage);
    }
    if ell >= n {
        return Err(AssignmentError::NoRegularPapers { n, ell });
    }
    let half_k = k / 2;
    if ell < half_k {
        return Err(AssignmentError::ProbePoolTooSmall { ell, half_k });
    }
    let pool = n - ell;
    if pool < half_k {
        return Err(AssignmentError::RegularPoolTooSmall { pool, half_k });
    }
    if require_capacity {
        let slots = m as u64 * half_k as u64;
        let demand = coverage as u64 * pool as u64;
        if slots < demand {
            return Err(AssignmentError::InsufficientCapacity { slots, demand });
        }
    }
    Ok(())
}

/// Build an assignment covering every regular paper at least `coverage`
/// times. Rejects infeasible shapes with the violated inequality.
pub fn build_assignment(
    n: u32,
    m: u32,
    ell: u32,
    k: u32,
    coverage: u32,
    rng: &mut RngStream,
) -> Result<AssignmentPlan, AssignmentError> {
    check_feasible(n, m, ell, k, coverage, true)?;
    Ok(deal(n, m, ell, k, rng))
}

/// Like [`build_assignment`] but without the capacity requirement: when
/// there are fewer grading slots than regular papers, the uncovered papers
/// simply receive no evaluations (their grade later falls back to the prior
/// mean). Used by simulation shapes that deliberately under-staff grading.
pub fn build_partial_assignment(
    n: u32,
    m: u32,
    ell: u32,
    k: u32,
    rng: &mut RngStream,
) -> Result<AssignmentPlan, AssignmentError> {
    check_feasible(n, m, ell, k, 1, false)?;
    Ok(deal(n, m, ell, k, rng))
}

fn deal(n: u32, m: u32, ell: u32, k: u32, rng: &mut RngStream) -> AssignmentPlan {
    let half_k = (k / 2) as usize;

    // One shuffle decides both which papers are probes and the dealing
    // order within each pool.
    let mut papers: Vec<PaperId> = (0..n).map(PaperId).collect();
    papers.shuffle(rng);
    let probe_list: Vec<PaperId> = papers[..ell as usize].to_vec();
    let regular_list: Vec<PaperId> = papers[ell as usize..].to_vec();

    let rotation = rng.random_range(0..probe_list.len());

    let mut per_evaluator = BTreeMap::new();
    for e in 0..m {
        let probes: BTreeSet<PaperId> = (0..half_k)
            .map(|j| probe_list[(rotation + e as usize * half_k + j) % probe_list.len()])
            .collect();
        let nonprobes: BTreeSet<PaperId> = (0..half_k)
            .map(|j| regular_list[(e as usize * half_k + j) % regular_list.len()])
            .collect();
        let mut bundle_order: Vec<PaperId> =
            probes.iter().chain(nonprobes.iter()).copied().collect();
        bundle_order.shuffle(rng);
        per_evaluator.insert(
            EvaluatorId(e),
            EvaluatorBundle {
                probes,
                nonprobes,
                bundle_order,
            },
        );
    }

    AssignmentPlan {
        n_papers: n,
        k,
        probe_ids: probe_list.into_iter().collect(),
        per_evaluator,
    }
}

/// A structural defect found by the independent plan validator.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanViolation {
    #[error("plan K = {k} is not an even load >= 2")]
    BadK { k: u32 },
    #[error("paper id {paper} out of range 0..{n}")]
    PaperOutOfRange { paper: PaperId, n: u32 },
    #[error("evaluator {evaluator}: expected {expected} probes, has {actual}")]
    WrongProbeCount {
        evaluator: EvaluatorId,
        expected: u32,
        actual: u32,
    },
    #[error("evaluator {evaluator}: expected {expected} regular papers, has {actual}")]
    WrongRegularCount {
        evaluator: EvaluatorId,
        expected: u32,
        actual: u32,
    },
    #[error("evaluator {evaluator}: probe bundle contains non-probe paper {paper}")]
    ProbeNotInProbeSet {
        evaluator: EvaluatorId,
        paper: PaperId,
    },
    #[error("evaluator {evaluator}: regular bundle contains probe paper {paper}")]
    RegularIsProbe {
        evaluator: EvaluatorId,
        paper: PaperId,
    },
    #[error("evaluator {evaluator}: bundle order is not a permutation of the assigned papers")]
    BundleOrderMismatch { evaluator: EvaluatorId },
    #[error("regular paper {paper} covered by {actual} evaluators, need >= {required}")]
    UnderCovered {
        paper: PaperId,
        required: u32,
        actual: u32,
    },
    #[error("regular-paper load unbalanced: min {min}, max {max}")]
    UnbalancedRegularLoad { min: u32, max: u32 },
    #[error("probe reuse unbalanced: min {min}, max {max}")]
    UnbalancedProbeUse { min: u32, max: u32 },
}

/// Check every structural invariant of a plan directly from its raw fields,
/// requiring every regular paper to be covered at least `coverage` times.
pub fn validate_plan(plan: &AssignmentPlan, coverage: u32) -> Result<(), PlanViolation> {
    validate_inner(plan, Some(coverage))
}

/// Validate a plan that may leave regular papers uncovered (see
/// [`build_partial_assignment`]). Balance is still required: covered-paper
/// loads, including the zeros, must differ by at most one.
pub fn validate_partial_plan(plan: &AssignmentPlan) -> Result<(), PlanViolation> {
    validate_inner(plan, None)
}

fn validate_inner(plan: &AssignmentPlan, coverage: Option<u32>) -> Result<(), PlanViolation> {
    if plan.k < 2 || !plan.k.is_multiple_of(2) {
        return Err(PlanViolation::BadK { k: plan.k });
    }
    let half_k = plan.k / 2;
    let n = plan.n_papers;

    for &p in &plan.probe_ids {
        if p.0 >= n {
            return Err(PlanViolation::PaperOutOfRange { paper: p, n });
        }
    }

    let mut regular_load: BTreeMap<PaperId, u32> = (0..n)
        .map(PaperId)
        .filter(|p| !plan.probe_ids.contains(p))
        .map(|p| (p, 0))
        .collect();
    let mut probe_use: BTreeMap<PaperId, u32> =
        plan.probe_ids.iter().map(|&p| (p, 0)).collect();

    for (&e, bundle) in &plan.per_evaluator {
        if bundle.probes.len() as u32 != half_k {
            return Err(PlanViolation::WrongProbeCount {
                evaluator: e,
                expected: half_k,
                actual: bundle.probes.len() as u32,
            });
        }
        if bundle.nonprobes.len() as u32 != half_k {
            return Err(PlanViolation::WrongRegularCount {
                evaluator: e,
                expected: half_k,
                actual: bundle.nonprobes.len() as u32,
            });
        }
        for &p in &bundle.probes {
            if p.0 >= n {
                return Err(PlanViolation::PaperOutOfRange { paper: p, n });
            }
            if !plan.probe_ids.contains(&p) {
                return Err(PlanViolation::ProbeNotInProbeSet {
                    evaluator: e,
                    paper: p,
                });
            }
            *probe_use.get_mut(&p).unwrap() += 1;
        }
        for &p in &bundle.nonprobes {
            if p.0 >= n {
                return Err(PlanViolation::PaperOutOfRange { paper: p, n });
            }
            if plan.probe_ids.contains(&p) {
                return Err(PlanViolation::RegularIsProbe {
                    evaluator: e,
                    paper: p,
                });
            }
            *regular_load.get_mut(&p).unwrap() += 1;
        }
        let expected: BTreeSet<PaperId> =
            bundle.probes.iter().chain(bundle.nonprobes.iter()).copied().collect();
        let seen: BTreeSet<PaperId> = bundle.bundle_order.iter().copied().collect();
        if seen != expected || bundle.bundle_order.len() != expected.len() {
            return Err(PlanViolation::BundleOrderMismatch { evaluator: e });
        }
    }

    if let Some(required) = coverage {
        for (&p, &c) in &regular_load {
            if c < required {
                return Err(PlanViolation::UnderCovered {
                    paper: p,
                    required,
                    actual: c,
                });
            }
        }
    }
    if !plan.per_evaluator.is_empty() {
        let min = *regular_load.values().min().unwrap_or(&0);
        let max = *regular_load.values().max().unwrap_or(&0);
        if max - min > 1 {
            return Err(PlanViolation::UnbalancedRegularLoad { min, max });
        }
        let pmin = *probe_use.values().min().unwrap_or(&0);
        let pmax = *probe_use.values().max().unwrap_or(&0);
        if pmax - pmin > 1 {
            return Err(PlanViolation::UnbalancedProbeUse { min: pmin, max: pmax });
        }
    }
    Ok(())
}
