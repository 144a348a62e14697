//! Materialized state and the pure fold that builds it from events.
//! `apply` performs no validation: commands validate before logging, so
//! every logged event is a fact.

use super::event::{Event, ExamId, ExamSettings, PayoutReport, Phase, Role, ScoreRelease, UserId};
use crate::assignment::{AssignmentPlan, EvaluatorId, PaperId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Wallet {
    /// Micro-tokens; never negative.
    pub balance: u64,
    pub skill_scores: BTreeMap<ExamId, f64>,
    pub evaluation_scores: BTreeMap<ExamId, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RegradeStatus {
    Filed,
    Decided { true_score: f64, raised: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamContract {
    pub exam_id: ExamId,
    pub instructor: UserId,
    pub phase: Phase,
    /// Micro-tokens held by this exam.
    pub escrow: u64,
    pub settings: ExamSettings,
    pub candidates: BTreeSet<UserId>,
    pub evaluators: BTreeSet<UserId>,
    pub attempt_counts: BTreeMap<UserId, u32>,
    pub submissions: BTreeMap<UserId, String>,
    pub plan: Option<AssignmentPlan>,
    pub candidate_papers: BTreeMap<UserId, PaperId>,
    pub evaluator_ids: BTreeMap<UserId, EvaluatorId>,
    pub probe_truth: BTreeMap<PaperId, f64>,
    pub evaluations: BTreeMap<UserId, BTreeMap<PaperId, f64>>,
    pub gas_paid: BTreeMap<UserId, u64>,
    pub release: Option<ScoreRelease>,
    pub regrades: BTreeMap<PaperId, RegradeStatus>,
    pub payout: Option<PayoutReport>,
}

impl ExamContract {
    pub fn role_of(&self, user: &str) -> Option<Role> {
        if self.instructor == user {
            Some(Role::Instructor)
        } else if self.candidates.contains(user) {
            Some(Role::Candidate)
        } else if self.evaluators.contains(user) {
            Some(Role::Evaluator)
        } else {
            None
        }
    }

    pub fn paper_owner(&self, paper: PaperId) -> Option<&UserId> {
        self.candidate_papers
            .iter()
            .find(|(_, &p)| p == paper)
            .map(|(u, _)| u)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerState {
    pub wallets: BTreeMap<UserId, Wallet>,
    pub exams: BTreeMap<ExamId, ExamContract>,
    /// Platform float, signed: sweeps, fees, penalties and dust flow in;
    /// payout shortfalls draw it down, possibly below zero.
    pub reserve: i128,
    pub total_topped_up: u128,
    pub next_exam_id: ExamId,
}

impl LedgerState {
    /// Token conservation: wallets plus escrows plus the reserve must equal
    /// everything ever topped up.
    pub fn conserves_tokens(&self) -> bool {
        let wallets: u128 = self.wallets.values().map(|w| w.balance as u128).sum();
        let escrows: u128 = self.exams.values().map(|e| e.escrow as u128).sum();
        wallets as i128 + escrows as i128 + self.reserve == self.total_topped_up as i128
    }

    /// Deterministic byte serialization (keys sorted, shortest-roundtrip
    /// floats); replay equality is judged on these bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("state serializes")
    }

    fn wallet_mut(&mut self, user: &str) -> &mut Wallet {
        self.wallets.get_mut(user).expect("wallet exists")
    }

    fn exam_mut(&mut self, exam: ExamId) -> &mut ExamContract {
        self.exams.get_mut(&exam).expect("exam exists")
    }

    fn debit(&mut self, user: &str, amount: u64) {
        let w = self.wallet_mut(user);
        w.balance = w.balance.checked_sub(amount).expect("validated debit");
    }

    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::UserCreated { user } => {
                self.wallets.insert(user.clone(), Wallet::default());
            }
            Event::ToppedUp { user, amount } => {
                self.wallet_mut(user).balance += amount;
                self.total_topped_up += *amount as u128;
            }
            Event::ExamCreated {
                exam,
                instructor,
                settings,
                fee_to_escrow,
            } => {
                self.debit(instructor, *fee_to_escrow);
                self.exams.insert(
                    *exam,
                    ExamContract {
                        exam_id: *exam,
                        instructor: instructor.clone(),
                        phase: Phase::Created,
                        escrow: *fee_to_escrow,
                        settings: settings.clone(),
                        candidates: BTreeSet::new(),
                        evaluators: BTreeSet::new(),
                        attempt_counts: BTreeMap::new(),
                        submissions: BTreeMap::new(),
                        plan: None,
                        candidate_papers: BTreeMap::new(),
                        evaluator_ids: BTreeMap::new(),
                        probe_truth: BTreeMap::new(),
                        evaluations: BTreeMap::new(),
                        gas_paid: BTreeMap::new(),
                        release: None,
                        regrades: BTreeMap::new(),
                        payout: None,
                    },
                );
                self.next_exam_id = exam + 1;
            }
            Event::PhaseAdvanced { exam, to, .. } => {
                self.exam_mut(*exam).phase = *to;
            }
            Event::Enrolled {
                exam,
                user,
                role,
                fee_to_escrow,
            } => {
                self.debit(user, *fee_to_escrow);
                let contract = self.exam_mut(*exam);
                contract.escrow += fee_to_escrow;
                match role {
                    Role::Candidate => contract.candidates.insert(user.clone()),
                    Role::Evaluator => contract.evaluators.insert(user.clone()),
                    _ => unreachable!("only candidates and evaluators enrol"),
                };
            }
            Event::AnswersSubmitted {
                exam,
                candidate,
                attempt,
                blob,
            } => {
                let contract = self.exam_mut(*exam);
                contract.attempt_counts.insert(candidate.clone(), *attempt);
                contract.submissions.insert(candidate.clone(), blob.clone());
            }
            Event::PlanBuilt {
                exam,
                candidates,
                evaluators,
                plan,
            } => {
                let contract = self.exam_mut(*exam);
                contract.candidate_papers = candidates
                    .iter()
                    .enumerate()
                    .map(|(i, u)| (u.clone(), PaperId(i as u32)))
                    .collect();
                contract.evaluator_ids = evaluators
                    .iter()
                    .enumerate()
                    .map(|(i, u)| (u.clone(), EvaluatorId(i as u32)))
                    .collect();
                contract.plan = Some(plan.clone());
            }
            Event::ProbeGradesRecorded { exam, grades } => {
                self.exam_mut(*exam).probe_truth = grades.clone();
            }
            Event::EvaluationsRecorded {
                exam,
                evaluator,
                scores,
                gas_charged,
            } => {
                self.debit(evaluator, *gas_charged);
                let contract = self.exam_mut(*exam);
                contract.escrow += gas_charged;
                *contract.gas_paid.entry(evaluator.clone()).or_insert(0) += gas_charged;
                contract
                    .evaluations
                    .insert(evaluator.clone(), scores.clone());
            }
            Event::ScoresComputed { exam, release } => {
                self.exam_mut(*exam).release = Some(release.clone());
            }
            Event::RegradeFiled { exam, paper, .. } => {
                self.exam_mut(*exam)
                    .regrades
                    .insert(*paper, RegradeStatus::Filed);
            }
            Event::RegradeDecided {
                exam,
                paper,
                true_score,
                raised,
                final_grade,
                penalty_charged,
            } => {
                let owner = self
                    .exams[exam]
                    .paper_owner(*paper)
                    .expect("regraded paper has an owner")
                    .clone();
                self.debit(&owner, *penalty_charged);
                self.reserve += *penalty_charged as i128;
                let contract = self.exam_mut(*exam);
                contract.regrades.insert(
                    *paper,
                    RegradeStatus::Decided {
                        true_score: *true_score,
                        raised: *raised,
                    },
                );
                let release = contract.release.as_mut().expect("scores released");
                let record = release
                    .records
                    .iter_mut()
                    .find(|r| r.paper_id == *paper)
                    .expect("released paper record");
                record.true_score = Some(*true_score);
                record.regraded = *raised;
                record.final_grade = *final_grade;
            }
            Event::Finalized { exam, payout } => {
                for line in &payout.lines {
                    self.wallet_mut(&line.user).balance += line.paid;
                    self.wallet_mut(&line.user)
                        .evaluation_scores
                        .insert(*exam, line.transfer);
                }
                for (user, score) in &payout.skill_scores {
                    self.wallet_mut(user).skill_scores.insert(*exam, *score);
                }
                self.reserve += payout.leftover_to_reserve as i128;
                self.reserve -= payout.reserve_draw as i128;
                let contract = self.exam_mut(*exam);
                contract.escrow = 0;
                contract.payout = Some(payout.clone());
            }
            Event::ReserveAlert { .. } => {}
            Event::CertificateViewed { viewer, fee, .. } => {
                self.debit(viewer, *fee);
                self.reserve += *fee as i128;
            }
        }
    }
}
