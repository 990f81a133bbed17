//! Meta-train an encoder with first-order MAML on the synthetic corpus and
//! watch the dev multilingual mAP@20 criterion move.
//!
//! ```bash
//! cargo run --release --example train_maml
//! ```

use metasearch::cli::{dev_criterion, EvalSettings};
use metasearch::data::{generate_synthetic_corpus, Corpus, SyntheticSpec};
use metasearch::learners::{train, LearnerKind, TrainConfig};
use metasearch::meta_tasks::{Phase, PhaseCounts, SamplingConfig, TaskSampler, TransferMode};
use metasearch::model::{EncoderConfig, ParameterVector};
use metasearch::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        concept_count: 40,
        questions_per_language: 160,
        ..SyntheticSpec::default()
    };
    let corpus = Corpus::Retrieval(generate_synthetic_corpus(&spec)?.retrieval);
    let encoder = EncoderConfig::new(corpus.vocab_size(), 8);

    let sampling = SamplingConfig {
        counts: PhaseCounts {
            meta_train: 24,
            meta_valid: 8,
            meta_test: 8,
        },
        ..SamplingConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let init = ParameterVector::init(&encoder, &mut rng);
    let sampler = TaskSampler::new(&corpus, &encoder, Some(&init), sampling)?;

    // Support sets are monolingual, query sets bilingual: adapt within one
    // language, generalize across the language boundary.
    let meta_train = sampler.build_phase(TransferMode::MonoBi, Phase::MetaTrain)?;
    let meta_valid = sampler.build_phase(TransferMode::MonoBi, Phase::MetaValid)?;

    let mut config = TrainConfig {
        learner: LearnerKind::Maml,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    // A larger outer step than the shipped default so the toy run visibly
    // moves within two epochs.
    config.hyper.beta = 1e-3;

    let eval = EvalSettings::default();
    let mut criterion = dev_criterion(&corpus, &encoder, &eval);
    let outcome = train(
        &config,
        &encoder,
        &corpus,
        &meta_train,
        Some(&meta_valid),
        init,
        criterion.as_mut(),
    )?;

    println!(
        "baseline dev mAP@20: {:.4}",
        outcome.history.baseline_criterion
    );
    for rec in &outcome.history.records {
        println!(
            "epoch {} batch {:>2} [{}] task loss {:.4} criterion {:.4}{}",
            rec.epoch,
            rec.batch_index,
            rec.phase,
            rec.task_loss,
            rec.criterion,
            if rec.improved { " *" } else { "" }
        );
    }
    println!(
        "best dev mAP@20: {:.4} (stopped early: {})",
        outcome.history.best_criterion, outcome.history.stopped_early
    );
    Ok(())
}
