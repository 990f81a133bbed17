//! Meta-distillation: a teacher adapted on monolingual supports is distilled
//! into a student adapted on bilingual supports, aligning both through a KD
//! loss on the shared bilingual set before the multilingual query scoring.
//!
//! ```bash
//! cargo run --release --example train_meta_distillation
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
            meta_train: 16,
            meta_valid: 8,
            meta_test: 8,
        },
        ..SamplingConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let init = ParameterVector::init(&encoder, &mut rng);
    let sampler = TaskSampler::new(&corpus, &encoder, Some(&init), sampling)?;

    // The three-set shape: first support monolingual (teacher adaptation),
    // second support bilingual (shared between teacher scoring and student
    // adaptation), query multilingual (student scoring).
    let meta_train = sampler.build_phase(TransferMode::MonoBiMulti, Phase::MetaTrain)?;
    let meta_valid = sampler.build_phase(TransferMode::MonoBiMulti, Phase::MetaValid)?;
    let task = &meta_train.tasks[0];
    println!(
        "task 0 shape: support {:?} -> shared {:?} -> query {:?}",
        task.support.arrangement,
        task.support2.as_ref().map(|s| &s.arrangement),
        task.query.arrangement
    );

    let mut config = TrainConfig {
        learner: LearnerKind::MamlAlign,
        max_epochs: 1,
        ..TrainConfig::default()
    };
    config.hyper.beta = 1e-3;
    // Teacher takes five inner steps, the student only one; lambda weighs
    // the KD term against the averaged task losses.
    println!(
        "teacher steps {}, student steps {}, lambda {}",
        config.hyper.inner_steps, config.hyper.student_inner_steps, config.hyper.lambda
    );

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
            "batch {:>2} [{}] task loss {:.4} kd loss {:.6} criterion {:.4}{}",
            rec.batch_index,
            rec.phase,
            rec.task_loss,
            rec.kd_loss.unwrap_or(f64::NAN),
            rec.criterion,
            if rec.improved { " *" } else { "" }
        );
    }
    println!("best dev mAP@20: {:.4}", outcome.history.best_criterion);
    Ok(())
}
