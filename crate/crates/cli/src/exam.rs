//! End-to-end exam driver: synthesizes a deterministic cohort from the run
//! seed, walks every phase against the service, and writes the result
//! files. Same config and seed always produce byte-identical outputs.

use crate::CliError;
use peercert_client::Client;
use peercert_core::assignment::PaperId;
use peercert_core::config::RunConfig;
use peercert_core::ledger::{ExamSettings, Role};
use peercert_core::model::{report_from_standardized, sample_true_scores, EvaluatorStrategy};
use peercert_core::rng::RngStream;
use peercert_core::scoring::{scores_to_csv, transfers};
use peercert_core::sim::StrategyPrior;
use rand::RngCore;
use std::collections::BTreeMap;
use std::path::Path;

// The assignment is drawn server-side from stream 0 of the exam seed;
// the synthetic cohort uses separate streams of the same seed.
const STREAM_TRUTH: u64 = 1;
const STREAM_STRATEGIES: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn uniform(rng: &mut RngStream) -> f64 {
    rng.next_u32() as f64 / (u32::MAX as f64 + 1.0)
}

pub async fn run_exam(
    client: &Client,
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let exam_cfg = cfg.exam_config();
    let shape = exam_cfg.shape;
    let fees = exam_cfg.fees;
    let prior = exam_cfg.prior;
    let interval = exam_cfg.interval;
    let alpha = cfg.payout.alpha.unwrap_or(1.0);

    let instructor = "instructor";
    let candidates: Vec<String> = (0..shape.n).map(|i| format!("cand{i:04}")).collect();
    let evaluators: Vec<String> = (0..shape.m).map(|i| format!("eval{i:04}")).collect();

    client.create_user(instructor).await?;
    client.top_up(instructor, fees.instructor_fee).await?;
    for c in &candidates {
        client.create_user(c).await?;
        client
            .top_up(c, fees.candidate_fee + fees.regrade_penalty)
            .await?;
    }
    for ev in &evaluators {
        client.create_user(ev).await?;
        client
            .top_up(ev, fees.evaluator_stake + 2 * fees.evaluation_gas_fee)
            .await?;
    }

    let exam = client
        .create_exam(instructor, ExamSettings::from_config(&exam_cfg, seed))
        .await?;
    for c in &candidates {
        client.enrol(exam, c, Role::Candidate).await?;
    }
    for ev in &evaluators {
        client.enrol(exam, ev, Role::Evaluator).await?;
    }
    let phase = client.advance_phase(exam, instructor).await?;
    println!("exam {exam}: enrolment closed, phase {phase}");

    for c in &candidates {
        client.submit_answers(exam, c, &format!("answers-{c}")).await?;
    }
    let phase = client.advance_phase(exam, instructor).await?;
    println!("exam {exam}: submissions in, phase {phase}");

    let plan = client.assignment(exam).await?;

    // Ground truth for every paper; papers map to candidates positionally,
    // in enrolment order.
    let mut truth_rng = RngStream::new(seed, STREAM_TRUTH);
    let truths = sample_true_scores(&prior, shape.n as usize, &mut truth_rng);
    let truth_of = |p: PaperId| interval.clip(truths[p.0 as usize]);

    let grades: BTreeMap<PaperId, f64> =
        plan.probe_ids.iter().map(|&p| (p, truth_of(p))).collect();
    client.record_probe_grades(exam, instructor, grades).await?;
    let phase = client.advance_phase(exam, instructor).await?;
    println!("exam {exam}: probes graded, phase {phase}");

    let sp = StrategyPrior::default();
    let mut strategy_rng = RngStream::new(seed, STREAM_STRATEGIES);
    let mut noise_rng = RngStream::new(seed, STREAM_NOISE);
    let contract = client.exam(exam).await?;
    for ev in &evaluators {
        let bias = sp.bias_stddev * strategy_rng.standard_normal();
        let reliability = sp.reliability_min
            * (sp.reliability_max / sp.reliability_min).powf(uniform(&mut strategy_rng));
        let strategy = EvaluatorStrategy::new(bias, reliability).expect("finite draw");

        let eid = contract.evaluator_ids[ev.as_str()];
        let bundle = &plan.per_evaluator[&eid];
        let scores: BTreeMap<PaperId, f64> = bundle
            .probes
            .iter()
            .chain(bundle.nonprobes.iter())
            .map(|&p| {
                let report =
                    report_from_standardized(truths[p.0 as usize], &strategy, noise_rng.standard_normal());
                (p, report)
            })
            .collect();
        client.record_evaluations(exam, ev, scores).await?;
    }

    let release = client.compute_and_release(exam, instructor).await?;
    println!("exam {exam}: scores released for {} papers", release.records.len());

    // One candidate contests; the instructor reveals the drawn truth.
    let contract = client.exam(exam).await?;
    let contester = candidates
        .iter()
        .find(|c| !plan.probe_ids.contains(&contract.candidate_papers[c.as_str()]))
        .expect("some candidate holds a regular paper");
    let paper = client.file_regrade(exam, contester).await?;
    let outcome = client
        .decide_regrade(exam, instructor, paper, truth_of(paper))
        .await?;
    println!(
        "exam {exam}: regrade on paper {paper} {}",
        if outcome.raised { "raised the grade" } else { "kept the aggregate" }
    );

    let payout = client.finalize(exam, instructor, alpha).await?;
    println!(
        "exam {exam}: finalized at alpha {alpha}; paid {} micro-tokens, {} to reserve",
        payout.lines.iter().map(|l| l.paid).sum::<u64>(),
        payout.leftover_to_reserve
    );

    // Result files. The transfer sheet is recomputed from the released
    // records, which include any regrade decisions.
    let contract = client.exam(exam).await?;
    let release = contract.release.as_ref().expect("released");
    let sheet = transfers(&plan, &release.records, &release.params, &prior, alpha)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let csv = crate::write_out(out, "scores.csv", scores_to_csv(&release.records, &sheet).as_bytes())?;
    let payout_body = format!("{}\n", serde_json::to_string_pretty(&payout).unwrap());
    let payout_path = crate::write_out(out, "payout.json", payout_body.as_bytes())?;
    let log_bytes = client.chain_log().await?;
    let log_path = crate::write_out(out, "events.log", &log_bytes)?;

    println!(
        "wrote {}, {} and {}",
        csv.display(),
        payout_path.display(),
        log_path.display()
    );
    Ok(())
}
