//! Training procedures: fine-tuning, first/second-order meta-learning, and
//! the aligned teacher/student distillation learner.

mod realize;
mod steps;
mod train;

pub use realize::{realize_task, TaskBatches};
pub use steps::{
    adapt_and_evaluate, align_from_three_set, align_pair, finetune_step, inner_loop,
    maml_align_step, maml_outer_step, AlignOutcome, AlignPair, InnerOutcome, MetaHyper, MetaOrder,
    OuterOutcome,
};
pub use train::{
    load_history, save_history, train, BatchRecord, Criterion, LearnerKind, TrainConfig,
    TrainHistory, TrainOutcome,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_corpus, Corpus, SyntheticSpec};
    use crate::losses::{LossSpec, Triplet};
    use crate::meta_tasks::{MetaDataset, Phase, PhaseCounts, SamplingConfig, TaskSampler, TransferMode};
    use crate::model::{
        loss_and_grad, sgd_step, EncoderConfig, ExampleBatch, OptimizerState, ParameterVector,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_corpus() -> Corpus {
        let spec = SyntheticSpec {
            concept_count: 40,
            questions_per_language: 160,
            ..SyntheticSpec::default()
        };
        Corpus::Retrieval(generate_synthetic_corpus(&spec).unwrap().retrieval)
    }

    fn encoder_for(corpus: &Corpus) -> EncoderConfig {
        EncoderConfig::new(corpus.vocab_size(), 8)
    }

    fn params_for(encoder: &EncoderConfig, seed: u64) -> ParameterVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ParameterVector::init(encoder, &mut rng)
    }

    fn sample_dataset(
        corpus: &Corpus,
        encoder: &EncoderConfig,
        mode: TransferMode,
        train_count: usize,
    ) -> MetaDataset {
        let cfg = SamplingConfig {
            counts: PhaseCounts {
                meta_train: train_count,
                meta_valid: 4,
                meta_test: 4,
            },
            ..SamplingConfig::default()
        };
        TaskSampler::new(corpus, encoder, None, cfg)
            .unwrap()
            .build_phase(mode, Phase::MetaTrain)
            .unwrap()
    }

    fn one_task(corpus: &Corpus, encoder: &EncoderConfig, mode: TransferMode) -> TaskBatches {
        let ds = sample_dataset(corpus, encoder, mode, 1);
        realize_task(&ds.tasks[0], corpus, ds.source_split).unwrap()
    }

    #[test]
    fn inner_loop_n_zero_is_identity_and_theta_untouched() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 1);
        let before = theta.values.clone();
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBi);
        let out =
            inner_loop(&theta, &task.support, &task.query, &spec, &encoder, 1e-3, 0).unwrap();
        assert_eq!(out.adapted.values, theta.values);
        let (loss, grad) = loss_and_grad(&theta, &spec, &task.query, None, &encoder).unwrap();
        assert_eq!(out.query_loss, loss);
        assert_eq!(out.query_grad, grad);
        assert_eq!(theta.values, before);
    }

    #[test]
    fn inner_loop_single_step_matches_manual_update() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 2);
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBi);
        let out =
            inner_loop(&theta, &task.support, &task.query, &spec, &encoder, 1e-3, 1).unwrap();
        let (_, g) = loss_and_grad(&theta, &spec, &task.support, None, &encoder).unwrap();
        let manual = sgd_step(&theta, &g, 1e-3).unwrap();
        assert_eq!(out.adapted.values, manual.values);
    }

    #[test]
    fn inner_loop_support_loss_non_increasing() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 16);
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBi);
        let out =
            inner_loop(&theta, &task.support, &task.query, &spec, &encoder, 1e-3, 5).unwrap();
        assert_eq!(out.support_trajectory.len(), 5);
        for w in out.support_trajectory.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "trajectory {:?}", out.support_trajectory);
        }
    }

    #[test]
    fn outer_step_degenerates_to_sgd_for_n_zero() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 4);
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBi);
        let hyper = MetaHyper {
            inner_steps: 0,
            ..MetaHyper::default()
        };
        let out = maml_outer_step(std::slice::from_ref(&task), &theta, &hyper, &spec, &encoder)
            .unwrap();
        let (_, g) = loss_and_grad(&theta, &spec, &task.query, None, &encoder).unwrap();
        let manual = sgd_step(&theta, &g, hyper.beta).unwrap();
        assert_eq!(out.new_params.values, manual.values);
    }

    #[test]
    fn duplicated_task_doubles_the_update() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 5);
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBi);
        let hyper = MetaHyper::default();
        let single = maml_outer_step(std::slice::from_ref(&task), &theta, &hyper, &spec, &encoder)
            .unwrap();
        let double =
            maml_outer_step(&[task.clone(), task], &theta, &hyper, &spec, &encoder).unwrap();
        for i in 0..theta.len() {
            let d1 = theta.values[i] - single.new_params.values[i];
            let d2 = theta.values[i] - double.new_params.values[i];
            assert!((d2 - 2.0 * d1).abs() <= 1e-15 * (1.0 + d2.abs()));
        }
        assert!(maml_outer_step(&[], &theta, &hyper, &spec, &encoder).is_err());
    }

    #[test]
    fn second_order_matches_finite_difference_meta_gradient() {
        let mut encoder = EncoderConfig::new(8, 3);
        encoder.use_projection = false;
        encoder.normalize_output = false;
        let theta = params_for(&encoder, 6);
        let spec = LossSpec::triplet();
        let support = ExampleBatch::Triplets(vec![
            Triplet {
                anchor: vec![1, 2],
                positive: vec![3],
                negative: vec![4, 5],
            },
            Triplet {
                anchor: vec![2, 6],
                positive: vec![4],
                negative: vec![3],
            },
        ]);
        let query = ExampleBatch::Triplets(vec![Triplet {
            anchor: vec![1, 6],
            positive: vec![5],
            negative: vec![3, 4],
        }]);
        let alpha = 0.05;
        let n = 2;
        let bilevel = |values: &[f64]| -> f64 {
            let mut p = theta.clone();
            p.values = values.to_vec();
            inner_loop(&p, &support, &query, &spec, &encoder, alpha, n)
                .unwrap()
                .query_loss
        };
        let task = TaskBatches {
            support: support.clone(),
            support2: None,
            query: query.clone(),
        };
        let second = MetaHyper {
            alpha,
            inner_steps: n,
            order: MetaOrder::SecondOrder,
            ..MetaHyper::default()
        };
        let first = MetaHyper {
            order: MetaOrder::FirstOrder,
            ..second.clone()
        };
        let out2 =
            maml_outer_step(std::slice::from_ref(&task), &theta, &second, &spec, &encoder).unwrap();
        let out1 =
            maml_outer_step(std::slice::from_ref(&task), &theta, &first, &spec, &encoder).unwrap();
        assert_ne!(out1.new_params.values, out2.new_params.values);

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for i in 0..theta.len() {
            let mut plus = theta.values.clone();
            plus[i] += h;
            let mut minus = theta.values.clone();
            minus[i] -= h;
            let fd = (bilevel(&plus) - bilevel(&minus)) / (2.0 * h);
            let got = (theta.values[i] - out2.new_params.values[i]) / second.beta;
            let denom = fd.abs().max(1e-6);
            max_rel = max_rel.max((got - fd).abs() / denom);
        }
        assert!(max_rel <= 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn align_step_reduces_to_mean_of_query_gradients_when_lambda_zero() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 7);
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBiMulti);
        let pair = align_from_three_set(&task).unwrap();
        let hyper = MetaHyper {
            lambda: 0.0,
            ..MetaHyper::default()
        };
        let out =
            maml_align_step(std::slice::from_ref(&pair), &theta, &hyper, &spec, &encoder).unwrap();
        let teacher = inner_loop(
            &theta,
            &pair.teacher_support,
            &pair.shared,
            &spec,
            &encoder,
            hyper.alpha,
            hyper.inner_steps,
        )
        .unwrap();
        let student = inner_loop(
            &theta,
            &pair.shared,
            &pair.query,
            &spec,
            &encoder,
            hyper.alpha,
            hyper.student_inner_steps,
        )
        .unwrap();
        let mut g = vec![0.0; theta.len()];
        for i in 0..g.len() {
            g[i] = 0.5 * (teacher.query_grad[i] + student.query_grad[i]);
        }
        let manual = sgd_step(&theta, &g, hyper.beta).unwrap();
        for (a, b) in out.new_params.values.iter().zip(&manual.values) {
            assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()));
        }
        assert!((out.task_loss_sum
            - 0.5 * (teacher.query_loss + student.query_loss))
            .abs()
            < 1e-12);
    }

    #[test]
    fn identical_teacher_and_student_give_zero_distillation_loss() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 8);
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBiMulti);
        let mut pair = align_from_three_set(&task).unwrap();
        // Identical positive and negative sequences give an exactly zero
        // support gradient, so the teacher stays at theta and both branches
        // produce identical score vectors.
        let easy = ExampleBatch::Triplets(vec![Triplet {
            anchor: vec![1, 2],
            positive: vec![3, 4],
            negative: vec![3, 4],
        }]);
        pair.teacher_support = easy.clone();
        let hyper = MetaHyper {
            inner_steps: 1,
            student_inner_steps: 0,
            ..MetaHyper::default()
        };
        let out =
            maml_align_step(std::slice::from_ref(&pair), &theta, &hyper, &spec, &encoder).unwrap();
        assert!(out.kd_loss_sum.abs() < 1e-12, "kd {}", out.kd_loss_sum);

        assert!(maml_align_step(&[], &theta, &hyper, &spec, &encoder).is_err());
        assert!(MetaHyper {
            student_inner_steps: 5,
            inner_steps: 5,
            ..MetaHyper::default()
        }
        .validate_for_align()
        .is_err());
    }

    #[test]
    fn align_pair_rejects_mismatched_shared_set() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let a = one_task(&corpus, &encoder, TransferMode::MonoBi);
        let b = one_task(&corpus, &encoder, TransferMode::MonoBi);
        assert!(align_pair(&a, &b).is_err());
        let ok = TaskBatches {
            support: b.support.clone(),
            support2: None,
            query: a.query.clone(),
        };
        let built = align_pair(&a, &TaskBatches {
            support: a.query.clone(),
            support2: None,
            query: ok.query.clone(),
        })
        .unwrap();
        assert_eq!(built.shared, a.query);
    }

    #[test]
    fn finetune_zero_gradient_leaves_parameters_unchanged() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 9);
        let spec = LossSpec::triplet();
        // Identical positive and negative sequences: the hinge stays active
        // at exactly the margin, but every gradient contribution cancels.
        let easy = ExampleBatch::Triplets(vec![Triplet {
            anchor: vec![1, 2],
            positive: vec![3, 4],
            negative: vec![3, 4],
        }]);
        let task = TaskBatches {
            support: easy.clone(),
            support2: None,
            query: easy,
        };
        let state = OptimizerState::adamw(&theta, Default::default());
        let (new_theta, new_state, loss) =
            finetune_step(std::slice::from_ref(&task), &theta, state, &spec, &encoder).unwrap();
        assert_eq!(loss, spec.margin);
        assert_eq!(new_theta.values, theta.values);
        assert_eq!(new_state.step_count, 1);
    }

    #[test]
    fn finetune_loss_is_mean_over_union_items() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 10);
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBi);
        let state = OptimizerState::adamw(&theta, Default::default());
        let (_, _, loss) =
            finetune_step(std::slice::from_ref(&task), &theta, state, &spec, &encoder).unwrap();
        let mut items = Vec::new();
        for set in [&task.support, &task.query] {
            let ExampleBatch::Triplets(v) = set else { panic!() };
            items.extend(v.iter().cloned());
        }
        let mut mean = 0.0;
        for item in &items {
            let single = ExampleBatch::Triplets(vec![item.clone()]);
            mean += loss_and_grad(&theta, &spec, &single, None, &encoder).unwrap().0;
        }
        mean /= items.len() as f64;
        assert!((loss - mean).abs() < 1e-12);
    }

    #[test]
    fn adapt_and_evaluate_degenerate_and_overfit() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 11);
        let spec = LossSpec::triplet();
        let task = one_task(&corpus, &encoder, TransferMode::MonoBi);
        let metric = |p: &ParameterVector| {
            Ok(-loss_and_grad(p, &spec, &task.support, None, &encoder)?.0)
        };
        let (_, at_zero) =
            adapt_and_evaluate(&theta, &task, &spec, &encoder, 1e-3, 0, metric).unwrap();
        let overfit_task = TaskBatches {
            support: task.support.clone(),
            support2: None,
            query: task.support.clone(),
        };
        let metric2 = |p: &ParameterVector| {
            Ok(-loss_and_grad(p, &spec, &task.support, None, &encoder)?.0)
        };
        let (_, adapted) =
            adapt_and_evaluate(&theta, &overfit_task, &spec, &encoder, 1e-3, 50, metric2).unwrap();
        assert!(adapted >= at_zero);
    }

    #[test]
    fn early_stopping_fires_after_exact_patience() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let theta = params_for(&encoder, 12);
        let init_values = theta.values.clone();
        let ds = sample_dataset(&corpus, &encoder, TransferMode::MonoBi, 40);
        let config = TrainConfig {
            patience: 5,
            ..TrainConfig::default()
        };
        let mut stream = (0..).map(|i| 1.0 - i as f64);
        let mut criterion = move |_: &ParameterVector| Ok(stream.next().unwrap());
        let out = train(
            &config,
            &encoder,
            &corpus,
            &ds,
            None,
            theta,
            &mut criterion,
        )
        .unwrap();
        assert!(out.history.stopped_early);
        assert_eq!(out.history.records.len(), 5);
        assert!(out.history.records.iter().all(|r| !r.improved));
        assert_eq!(out.history.best_batch, None);
        assert_eq!(out.best_params.values, init_values);
    }

    #[test]
    fn training_history_is_deterministic_and_round_trips() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let ds = sample_dataset(&corpus, &encoder, TransferMode::MonoBi, 12);
        let config = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let mut outputs = Vec::new();
        for run in 0..2 {
            let theta = params_for(&encoder, 13);
            let spec = config.loss;
            let probe = realize_task(&ds.tasks[0], &corpus, ds.source_split).unwrap();
            let mut criterion = |p: &ParameterVector| {
                Ok(-loss_and_grad(p, &spec, &probe.query, None, &encoder)?.0)
            };
            let out = train(
                &config,
                &encoder,
                &corpus,
                &ds,
                None,
                theta,
                &mut criterion,
            )
            .unwrap();
            let path = dir.path().join(format!("hist{run}.jsonl"));
            save_history(&path, &out.history).unwrap();
            let loaded = load_history(&path).unwrap();
            assert_eq!(loaded.records.len(), out.history.records.len());
            outputs.push((std::fs::read(&path).unwrap(), out.final_params.values.clone()));
        }
        assert_eq!(outputs[0].0, outputs[1].0);
        assert_eq!(outputs[0].1, outputs[1].1);
    }

    #[test]
    fn align_training_runs_on_three_set_tasks() {
        let corpus = test_corpus();
        let encoder = encoder_for(&corpus);
        let ds = sample_dataset(&corpus, &encoder, TransferMode::MonoBiMulti, 8);
        let config = TrainConfig {
            learner: LearnerKind::MamlAlign,
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let theta = params_for(&encoder, 14);
        let mut calls = 0usize;
        let mut criterion = |_: &ParameterVector| {
            calls += 1;
            Ok(calls as f64)
        };
        let out = train(
            &config,
            &encoder,
            &corpus,
            &ds,
            None,
            theta,
            &mut criterion,
        )
        .unwrap();
        assert_eq!(out.history.records.len(), 2);
        assert!(out.history.records.iter().all(|r| r.kd_loss.is_some()));
        assert!(out.history.records.iter().all(|r| r.improved));
        assert!(!out.history.stopped_early);
    }
}
