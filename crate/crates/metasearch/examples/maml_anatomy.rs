//! The MAML loops piece by piece: inner adaptation on a support set, the
//! aggregated outer update, and the exact second-order meta-gradient next to
//! its first-order approximation.
//!
//! ```bash
//! cargo run --example maml_anatomy
//! ```

use metasearch::learners::{inner_loop, maml_outer_step, MetaHyper, MetaOrder, TaskBatches};
use metasearch::losses::{LossSpec, Triplet};
use metasearch::model::{EncoderConfig, ExampleBatch, ParameterVector};
use metasearch::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_task() -> TaskBatches {
    // The triples interlock (each negative reuses the anchor's tokens), so
    // the hinge stays active for several steps instead of collapsing at once.
    let support = ExampleBatch::Triplets(vec![
        Triplet {
            anchor: vec![1, 2],
            positive: vec![2, 3],
            negative: vec![3, 1],
        },
        Triplet {
            anchor: vec![4, 5],
            positive: vec![5, 6],
            negative: vec![6, 4],
        },
    ]);
    let query = ExampleBatch::Triplets(vec![Triplet {
        anchor: vec![2, 5],
        positive: vec![3, 6],
        negative: vec![1, 4],
    }]);
    TaskBatches {
        support,
        support2: None,
        query,
    }
}

fn main() -> Result<()> {
    // A tiny encoder keeps every number inspectable.
    let cfg = EncoderConfig {
        use_projection: false,
        normalize_output: false,
        ..EncoderConfig::new(12, 3)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let theta = ParameterVector::init(&cfg, &mut rng);
    let task = toy_task();
    let spec = LossSpec::triplet();

    // Inner loop: n SGD steps on the support set from a copy of theta. The
    // support trajectory should fall while theta itself stays untouched.
    let hyper = MetaHyper {
        alpha: 0.02,
        inner_steps: 4,
        ..MetaHyper::default()
    };
    let inner = inner_loop(
        &theta,
        &task.support,
        &task.query,
        &spec,
        &cfg,
        hyper.alpha,
        hyper.inner_steps,
    )?;
    println!("support losses along the inner trajectory:");
    for (step, loss) in inner.support_trajectory.iter().enumerate() {
        println!("  step {step}: {loss:.6}");
    }
    println!("query loss after adaptation: {:.6}", inner.query_loss);

    // Outer loop: the shared initialization moves against the sum of the
    // per-task query gradients.
    let batch = vec![task.clone(), task.clone()];
    let first = maml_outer_step(&batch, &theta, &hyper, &spec, &cfg)?;
    println!(
        "outer step over a 2-task batch: summed query loss {:.6}",
        first.query_loss_sum
    );

    // Second-order mode backpropagates through the inner updates with exact
    // Hessian-vector products; first-order drops those terms.
    let second_hyper = MetaHyper {
        order: MetaOrder::SecondOrder,
        ..hyper
    };
    let second = maml_outer_step(&batch, &theta, &second_hyper, &spec, &cfg)?;
    let diff: f64 = first
        .new_params
        .values
        .iter()
        .zip(&second.new_params.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max |first-order - second-order| parameter difference: {diff:.3e}");
    Ok(())
}
