//! Build monolingual, bilingual, and multilingual evaluation pools from one
//! corpus, score a model on each, and compute Pearson correlation on the
//! symmetric sentence-pair corpus.
//!
//! ```bash
//! cargo run --example evaluate_checkpoint
//! ```

use metasearch::cli::pair_pearson_scores;
use metasearch::data::{generate_synthetic_corpus, Split, SyntheticSpec};
use metasearch::eval::{build_pool, map_at_20, rank_candidates, PoolVariant};
use metasearch::model::{EncoderConfig, ParameterVector};
use metasearch::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        concept_count: 40,
        questions_per_language: 160,
        pairs_per_language_pair: 60,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec)?;
    let encoder = EncoderConfig::new(corpus.vocab.len(), 8);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = ParameterVector::init(&encoder, &mut rng);
    let all: Vec<String> = corpus.retrieval.languages();

    // The same parameters are scored under all three language variants.
    let pools = [
        ("mono", build_pool(&corpus.retrieval, Split::Test, PoolVariant::Mono, "EL", &["EL".into()])?),
        ("bi", build_pool(&corpus.retrieval, Split::Test, PoolVariant::Bi, "EL", &["AR".into()])?),
        ("multi", build_pool(&corpus.retrieval, Split::Test, PoolVariant::Multi, "EL", &all)?),
    ];
    for (name, pool) in &pools {
        let result = map_at_20(&params, pool, &encoder)?;
        println!(
            "{name:<5} pool: {} queries x {} candidates, mAP@20 = {:.4} ({} excluded)",
            pool.queries.len(),
            pool.candidates.len(),
            result.map,
            result.excluded_queries.len()
        );
    }

    // Per-query ranking: candidate ids are language:question_id, ties broken
    // by ascending id so rankings are reproducible.
    let (_, multi) = &pools[2];
    let top: Vec<String> = rank_candidates(&params, multi, 0, &encoder)?
        .into_iter()
        .take(5)
        .collect();
    println!(
        "top 5 candidates for {}:{}: {:?} (relevant: {:?})",
        multi.queries[0].language, multi.queries[0].question_id, top, multi.queries[0].relevant
    );

    // Symmetric search: cosine predictions against gold pair scores.
    let (per_pair, overall) = pair_pearson_scores(&corpus.pairs, Split::Test, &params, &encoder)?;
    for (pair, r) in &per_pair {
        println!("pairs {pair}: Pearson r x100 = {r:.2}");
    }
    println!("pooled Pearson r x100 = {overall:.2}");
    Ok(())
}
