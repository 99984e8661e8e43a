//! Controlled text noise for robustness sweeps.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::ReferralDataset;
use crate::error::{Error, Result};
use crate::rng::{self, fnv1a64};

pub const MAX_LEVEL: f64 = 0.5;

/// Levels swept when none are given.
pub const DEFAULT_LEVELS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    CharSub,
    CharDel,
    WordSwap,
    WordDel,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::CharSub,
        NoiseKind::CharDel,
        NoiseKind::WordSwap,
        NoiseKind::WordDel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::CharSub => "char_sub",
            NoiseKind::CharDel => "char_del",
            NoiseKind::WordSwap => "word_swap",
            NoiseKind::WordDel => "word_del",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown noise kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: f64, seed: u64) -> Result<Self> {
        let spec = NoiseSpec { kind, level, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_LEVEL).contains(&self.level) {
            return Err(Error::invalid(format!(
                "noise level {} outside [0, {MAX_LEVEL}]",
                self.level
            )));
        }
        Ok(())
    }
}

fn count(level: f64, units: usize) -> usize {
    (level * units as f64).floor() as usize
}

fn substitute(c: char, rng: &mut rng::Rng) -> char {
    // uniform over a-z minus the original letter
    if c.is_ascii_lowercase() {
        let orig = c as u8 - b'a';
        let mut r = rng.random_range(0..25u8);
        if r >= orig {
            r += 1;
        }
        (b'a' + r) as char
    } else {
        (b'a' + rng.random_range(0..26u8)) as char
    }
}

/// Applies `spec` to one text using the spec's seed directly.
pub fn perturb_text(text: &str, spec: &NoiseSpec) -> Result<String> {
    spec.validate()?;
    Ok(perturb_with(
        text,
        spec.kind,
        spec.level,
        &mut rng::from_seed(spec.seed),
    ))
}

fn perturb_with(text: &str, kind: NoiseKind, level: f64, rng: &mut rng::Rng) -> String {
    if level == 0.0 || text.is_empty() {
        return text.to_string();
    }
    match kind {
        NoiseKind::CharSub | NoiseKind::CharDel => {
            let mut chars: Vec<char> = text.chars().collect();
            let k = count(level, chars.len());
            if k == 0 {
                return text.to_string();
            }
            let mut positions = sample(rng, chars.len(), k).into_vec();
            if kind == NoiseKind::CharSub {
                for p in positions {
                    chars[p] = substitute(chars[p], rng);
                }
                chars.into_iter().collect()
            } else {
                positions.sort_unstable();
                let mut drop = positions.into_iter().peekable();
                chars
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| {
                        if drop.peek() == Some(i) {
                            drop.next();
                            false
                        } else {
                            true
                        }
                    })
                    .map(|(_, c)| c)
                    .collect()
            }
        }
        NoiseKind::WordSwap | NoiseKind::WordDel => {
            let mut words: Vec<&str> = text.split_whitespace().collect();
            let k = count(level, words.len());
            if k == 0 {
                return text.to_string();
            }
            if kind == NoiseKind::WordSwap {
                // k >= 1 implies at least two words since level <= 0.5
                for _ in 0..k {
                    let pair = sample(rng, words.len(), 2);
                    words.swap(pair.index(0), pair.index(1));
                }
                words.join(" ")
            } else {
                let mut dropped = vec![false; words.len()];
                for p in sample(rng, words.len(), k) {
                    dropped[p] = true;
                }
                words
                    .iter()
                    .zip(dropped)
                    .filter(|(_, d)| !d)
                    .map(|(w, _)| *w)
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        }
    }
}

/// Seed used for one record: independent of which other records are present.
pub fn record_seed(seed: u64, record_id: &str) -> u64 {
    seed ^ fnv1a64(record_id.as_bytes())
}

/// Perturbs every record's text with a per-record seed; ids and labels are
/// untouched.
pub fn perturb_dataset(dataset: &ReferralDataset, spec: &NoiseSpec) -> Result<ReferralDataset> {
    spec.validate()?;
    Ok(dataset.map_texts(|r| {
        let mut rng = rng::from_seed(record_seed(spec.seed, &r.record_id));
        perturb_with(&r.diagnosis_text, spec.kind, spec.level, &mut rng)
    }))
}
