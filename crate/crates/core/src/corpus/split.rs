use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, Example, ExampleSet, Result, SplitLabel};

/// Partitions `examples` into train/val/test by `fractions`.
///
/// Membership depends only on the set of tuples and the seed, not on input
/// order. No (user, title) tuple lands in more than one split.
pub fn split(
    examples: &[Example],
    fractions: [f64; 3],
    seed: u64,
) -> Result<(ExampleSet, ExampleSet, ExampleSet)> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Fractions(fractions));
    }
    let wanted = fractions.iter().filter(|f| **f > 0.0).count();
    if examples.len() < wanted {
        return Err(CorpusError::TooFewExamples {
            examples: examples.len(),
            splits: wanted,
        });
    }

    let mut keyed: Vec<_> = examples.iter().map(|e| (e.key(), e)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut seen = HashSet::with_capacity(keyed.len());
    for (key, _) in &keyed {
        if !seen.insert(key) {
            return Err(CorpusError::DuplicateTuple(key.to_string()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keyed.shuffle(&mut rng);

    let sizes = allocate(examples.len(), fractions);
    let mut rest = keyed.into_iter().map(|(_, e)| e.clone());
    let mut take = |n: usize, label| ExampleSet::new(rest.by_ref().take(n).collect(), label);
    let train = take(sizes[0], SplitLabel::Train);
    let val = take(sizes[1], SplitLabel::Val);
    let test = take(sizes[2], SplitLabel::Test);
    Ok((train, val, test))
}

/// Largest-remainder allocation; every positive fraction gets at least one row.
fn allocate(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let quotas = fractions.map(|f| f * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut assigned: usize = sizes.iter().sum();
    for &i in order.iter().cycle() {
        if assigned >= n {
            break;
        }
        if fractions[i] > 0.0 {
            sizes[i] += 1;
            assigned += 1;
        }
    }
    for i in 0..3 {
        if fractions[i] > 0.0 && sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| sizes[j]).expect("three splits");
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }
    sizes
}
