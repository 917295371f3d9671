use std::collections::HashSet;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::lexicon::{self, THEMES};
use super::{
    preference_distribution, ArtworkOption, CorpusConfig, CorpusError, Engagement, Example,
    Interaction, Result, TitleCard, UserProfile,
};
use crate::seeds;

const STREAM_CATALOG: u64 = 1;
const STREAM_USERS: u64 = 2;
const STREAM_EXAMPLES: u64 = 3;

const CAPTION_MIN_TARGET: usize = 180;
const CAPTION_MAX_TARGET: usize = 220;
/// Sharpness of theme emphasis when composing caption sentences.
const CAPTION_THEME_SHARPNESS: f64 = 2.0;
/// Sharpness of genre choice when sampling user histories.
const HISTORY_THEME_SHARPNESS: f64 = 1.5;
const OPTION_LATENT_JITTER: f64 = 0.35;
const TIMESTAMP_BASE: i64 = 1_600_000_000;
const TIMESTAMP_SPAN: i64 = 60_000_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthStats {
    /// Sampled (user, title) pairs dropped because the tuple already existed.
    pub duplicates_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: CorpusConfig,
    pub catalog: Vec<Arc<TitleCard>>,
    pub users: Vec<Arc<UserProfile>>,
    pub examples: Vec<Example>,
    pub stats: SynthStats,
}

/// Catalog, users and examples for `config`, all derived from its seed.
pub fn synth_corpus(config: &CorpusConfig) -> Result<SyntheticCorpus> {
    let catalog: Vec<Arc<TitleCard>> = synth_catalog(config)?.into_iter().map(Arc::new).collect();
    let users: Vec<Arc<UserProfile>> = synth_users(config, &catalog)?
        .into_iter()
        .map(Arc::new)
        .collect();
    let (examples, stats) = synth_examples(&catalog, &users, config)?;
    Ok(SyntheticCorpus {
        config: config.clone(),
        catalog,
        users,
        examples,
        stats,
    })
}

pub fn synth_catalog(config: &CorpusConfig) -> Result<Vec<TitleCard>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, STREAM_CATALOG));
    let sizes: Vec<u32> = config.m_distribution.keys().copied().collect();
    let size_index = WeightedIndex::new(config.m_distribution.values().copied()).map_err(|e| {
        CorpusError::Config {
            field: "m_distribution",
            reason: e.to_string(),
        }
    })?;
    let dims = config.latent_dim;
    let mut names = HashSet::new();
    let mut catalog = Vec::with_capacity(config.n_titles);

    for t in 0..config.n_titles {
        let name = unique_title_name(&mut rng, &mut names);
        let genre_count = if dims >= 3 { rng.random_range(2..=3) } else { dims.min(2) };
        let mut themes: Vec<usize> = (0..dims).collect();
        themes.shuffle(&mut rng);
        themes.truncate(genre_count);
        themes.sort_unstable();
        let genres: Vec<String> = themes.iter().map(|&g| THEMES[g].genre.to_string()).collect();

        let m = sizes[size_index.sample(&mut rng)] as usize;
        let mut seen = HashSet::new();
        let mut options = Vec::with_capacity(m);
        while options.len() < m {
            let dominant = if rng.random::<f64>() < 0.6 {
                *themes.choose(&mut rng).expect("title has genres")
            } else {
                rng.random_range(0..dims)
            };
            let strength = rng.random_range(1.2..2.0);
            let latent: Vec<f64> = (0..dims)
                .map(|d| {
                    let jitter: f64 = rng.sample(StandardNormal);
                    OPTION_LATENT_JITTER * jitter + if d == dominant { strength } else { 0.0 }
                })
                .collect();
            let caption = compose_caption(&mut rng, &name, &genres, &latent);
            if !seen.insert(crate::extract::normalize(&caption).join(" ")) {
                continue;
            }
            options.push(ArtworkOption {
                option_id: options.len() as u32 + 1,
                caption,
                latent,
            });
        }
        catalog.push(TitleCard {
            title_id: format!("t{t:05}"),
            name,
            genres,
            options,
        });
    }
    Ok(catalog)
}

fn unique_title_name(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    let adj = lexicon::TITLE_ADJECTIVES.choose(rng).expect("non-empty");
    let noun = lexicon::TITLE_NOUNS.choose(rng).expect("non-empty");
    let base = format!("The {adj} {noun}");
    let mut name = base.clone();
    let mut k = 2;
    while !used.insert(name.clone()) {
        name = format!("{base} {k}");
        k += 1;
    }
    name
}

fn softmax_weights(latent: &[f64], sharpness: f64) -> Vec<f64> {
    let max = latent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    latent.iter().map(|v| ((v - max) * sharpness).exp()).collect()
}

fn list_genres(genres: &[String]) -> String {
    match genres {
        [] => "genre-free".to_string(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

fn compose_caption(rng: &mut ChaCha8Rng, name: &str, genres: &[String], latent: &[f64]) -> String {
    let theme_index =
        WeightedIndex::new(softmax_weights(latent, CAPTION_THEME_SHARPNESS)).expect("finite weights");
    let target = rng.random_range(CAPTION_MIN_TARGET..=CAPTION_MAX_TARGET);
    let mut caption = format!(
        "Artwork for {name}, a {} title, presented as a {} with {} accents.",
        list_genres(genres),
        lexicon::SHOTS.choose(rng).expect("non-empty"),
        lexicon::PALETTES.choose(rng).expect("non-empty"),
    );
    let mut tokens = caption.split_whitespace().count();
    while tokens < target {
        let theme = &THEMES[theme_index.sample(rng)];
        let template = lexicon::SENTENCES.choose(rng).expect("non-empty");
        let sentence = template
            .replace("{s}", theme.subjects.choose(rng).expect("non-empty"))
            .replace("{v}", theme.verbs.choose(rng).expect("non-empty"))
            .replace("{p}", theme.settings.choose(rng).expect("non-empty"))
            .replace("{m}", theme.moods.choose(rng).expect("non-empty"))
            .replace("{g}", theme.genre)
            .replace("{c}", lexicon::PALETTES.choose(rng).expect("non-empty"))
            .replace("{k}", lexicon::SHOTS.choose(rng).expect("non-empty"));
        tokens += sentence.split_whitespace().count();
        caption.push(' ');
        caption.push_str(&sentence);
    }
    caption
}

pub fn synth_users(config: &CorpusConfig, catalog: &[Arc<TitleCard>]) -> Result<Vec<UserProfile>> {
    config.validate()?;
    if catalog.is_empty() {
        return Err(CorpusError::Empty("catalog"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, STREAM_USERS));
    let dims = config.latent_dim;
    let by_genre: Vec<Vec<usize>> = (0..dims)
        .map(|g| {
            catalog
                .iter()
                .enumerate()
                .filter(|(_, t)| t.genres.iter().any(|x| x == THEMES[g].genre))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let mut users = Vec::with_capacity(config.n_users);
    for u in 0..config.n_users {
        let latent: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        let genre_index = WeightedIndex::new(softmax_weights(&latent, HISTORY_THEME_SHARPNESS))
            .expect("finite weights");
        let mut stamps: Vec<i64> = (0..config.history_len)
            .map(|_| TIMESTAMP_BASE + rng.random_range(0..TIMESTAMP_SPAN))
            .collect();
        stamps.sort_unstable();
        let interactions = stamps
            .into_iter()
            .map(|ts| {
                let g = genre_index.sample(&mut rng);
                let title = match by_genre[g].choose(&mut rng) {
                    Some(&i) => &catalog[i],
                    None => catalog.choose(&mut rng).expect("non-empty"),
                };
                let p_like = crate::numeric::sigmoid(latent[g]);
                let r: f64 = rng.random();
                let engagement = if r < 0.6 * p_like {
                    Engagement::Liked
                } else if r < 0.6 * p_like + 0.4 * (1.0 - p_like) {
                    Engagement::Abandoned
                } else {
                    Engagement::Watched
                };
                Interaction {
                    ts,
                    title: title.name.clone(),
                    genres: title.genres.join(", "),
                    engagement,
                }
            })
            .collect();
        users.push(UserProfile {
            user_id: format!("u{u:06}"),
            interactions,
            latent,
        });
    }
    Ok(users)
}

/// Draws an option index (0-based) from the preference softmax.
pub(crate) fn sample_truth<R: Rng>(affinities: &[f64], noise: f64, rng: &mut R) -> usize {
    let p = preference_distribution(affinities, noise);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Samples `config.n_examples` distinct (user, title) tuples and their
/// ground-truth artwork.
pub fn synth_examples(
    catalog: &[Arc<TitleCard>],
    users: &[Arc<UserProfile>],
    config: &CorpusConfig,
) -> Result<(Vec<Example>, SynthStats)> {
    if catalog.is_empty() {
        return Err(CorpusError::Empty("catalog"));
    }
    if users.is_empty() {
        return Err(CorpusError::Empty("users"));
    }
    if config.preference_noise.is_nan() || config.preference_noise < 0.0 {
        return Err(CorpusError::Config {
            field: "preference_noise",
            reason: "must be >= 0".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, STREAM_EXAMPLES));
    let pairs = users.len() * catalog.len();
    let target = config.n_examples.min(pairs);
    let mut stats = SynthStats::default();

    let tuples: Vec<(usize, usize)> = if pairs <= 4 * target {
        let mut all: Vec<(usize, usize)> = (0..users.len())
            .flat_map(|u| (0..catalog.len()).map(move |t| (u, t)))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(target);
        all
    } else {
        let mut seen = HashSet::with_capacity(target);
        let mut out = Vec::with_capacity(target);
        while out.len() < target {
            let pair = (rng.random_range(0..users.len()), rng.random_range(0..catalog.len()));
            if seen.insert(pair) {
                out.push(pair);
            } else {
                stats.duplicates_skipped += 1;
            }
        }
        out
    };

    let examples = tuples
        .into_iter()
        .map(|(u, t)| {
            let mut example = Example {
                user: Arc::clone(&users[u]),
                title: Arc::clone(&catalog[t]),
                truth_index: 1,
            };
            let idx = sample_truth(&example.affinities(), config.preference_noise, &mut rng);
            example.truth_index = idx as u32 + 1;
            example
        })
        .collect();
    Ok((examples, stats))
}
