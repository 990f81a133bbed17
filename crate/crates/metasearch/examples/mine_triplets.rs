//! Classify triplets by difficulty and mine negatives under the random,
//! hard, and semi-hard strategies.
//!
//! ```bash
//! cargo run --example mine_triplets
//! ```

use metasearch::losses::{
    classify_distances, mine_triplets, triplet_loss, DistanceMode, MiningMode, TripletClass,
};
use metasearch::model::{EncoderConfig, ParameterVector};
use metasearch::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    // The three difficulty classes partition distance space: easy when the
    // positive beats the negative by more than the margin, hard when the
    // negative is strictly closer, semi-hard in between.
    let margin = 1.0;
    for (dqp, dqn) in [(0.1, 1.5), (0.9, 0.4), (0.5, 1.2)] {
        let class = classify_distances(dqp, dqn, margin);
        let loss = (dqp - dqn + margin).max(0.0);
        println!("d(q,p)={dqp:.1} d(q,n)={dqn:.1} -> {class:?} (hinge loss {loss:.2})");
    }
    assert_eq!(classify_distances(0.1, 1.5, margin), TripletClass::Easy);

    // Mining draws negatives from a pool; hard and semi-hard modes filter by
    // the classification under the current model parameters.
    let cfg = EncoderConfig::new(32, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = ParameterVector::init(&cfg, &mut rng);
    let anchors = vec![
        (vec![1, 2, 3], vec![2, 3, 4]),
        (vec![5, 6], vec![6, 7, 8]),
    ];
    let pool: Vec<Vec<usize>> = (10..30).map(|t| vec![t, t + 1]).collect();

    for mode in [MiningMode::Random, MiningMode::Hard, MiningMode::SemiHard] {
        let triplets = mine_triplets(&anchors, &pool, mode, 3, &params, &cfg, margin, &mut rng)?;
        println!("{mode:?}: mined {} triplets", triplets.len());
        if let Some(t) = triplets.first() {
            let q = metasearch::model::encode(
                &params,
                &metasearch::model::TokenBatch::single(&t.anchor, cfg.max_question_len),
                &cfg,
            )?;
            let p = metasearch::model::encode(
                &params,
                &metasearch::model::TokenBatch::single(&t.positive, cfg.max_candidate_len),
                &cfg,
            )?;
            let n = metasearch::model::encode(
                &params,
                &metasearch::model::TokenBatch::single(&t.negative, cfg.max_candidate_len),
                &cfg,
            )?;
            let loss = triplet_loss(&q[0], &p[0], &n[0], margin, DistanceMode::Cosine)?;
            println!("  first mined triplet loss: {loss:.4}");
        }
    }
    Ok(())
}
