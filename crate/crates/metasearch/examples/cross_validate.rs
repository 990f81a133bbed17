//! Deterministic k-fold cross-validation: fold membership hangs off a
//! stable hash of each item id, so folds never depend on corpus ordering.
//!
//! ```bash
//! cargo run --release --example cross_validate
//! ```

use metasearch::cli::{corpus_item_ids, refold_corpus, run_training, ExperimentConfig};
use metasearch::data::{generate_synthetic_corpus, Corpus, Split, SyntheticSpec};
use metasearch::eval::{build_pool, cross_validate, map_at_20, PoolVariant};
use metasearch::meta_tasks::PhaseCounts;
use metasearch::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        concept_count: 40,
        questions_per_language: 160,
        ..SyntheticSpec::default()
    };
    let corpus = Corpus::Retrieval(generate_synthetic_corpus(&spec)?.retrieval);
    let ids = corpus_item_ids(&corpus);
    println!("{} distinct question ids to fold", ids.len());

    let mut cfg = ExperimentConfig::default();
    cfg.encoder.embed_dim = 8;
    cfg.sampling.counts = PhaseCounts {
        meta_train: 8,
        meta_valid: 4,
        meta_test: 4,
    };
    cfg.train.max_epochs = 1;
    cfg.train.hyper.beta = 1e-3;

    // Each fold re-splits the corpus (held-out ids become the test split),
    // trains from scratch, and reports held-out multilingual mAP@20.
    let langs = ["AR", "DE", "EL", "HI"].map(String::from).to_vec();
    let mut fold_fn = |fold: usize, kept: &[String], held_out: &[String]| -> Result<f64> {
        let fold_corpus = refold_corpus(&corpus, held_out);
        let run = run_training(&cfg, &fold_corpus)?;
        let Corpus::Retrieval(r) = &fold_corpus else {
            unreachable!()
        };
        let mut sum = 0.0;
        for q in &langs {
            let pool = build_pool(r, Split::Test, PoolVariant::Multi, q, &langs)?;
            sum += map_at_20(&run.best_params, &pool, &run.encoder)?.map;
        }
        let score = 100.0 * sum / langs.len() as f64;
        println!(
            "fold {fold}: kept {}, held out {}, test mAP@20 x100 = {score:.2}",
            kept.len(),
            held_out.len()
        );
        Ok(score)
    };
    let report = cross_validate(&ids, 5, "map@20-x100", &mut fold_fn)?;
    print!("{}", report.to_table());
    Ok(())
}
