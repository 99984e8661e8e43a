//! Synthetic stand-ins for the private referral corpus.
//!
//! [`referral_corpus`] builds short diagnostic texts whose positives carry
//! a few procedure-indicating tokens; [`gaussian_planted`] builds embedding
//! rows where positives are shifted along a handful of coordinates.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CodeDictionary, ReferralDataset, ReferralRecord};
use crate::embed::{EmbeddedDataset, EmbeddingMatrix, Variant};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::rng;

const NEUTRAL: &[&str] = &[
    "pain",
    "left",
    "right",
    "knee",
    "hip",
    "shoulder",
    "ankle",
    "wrist",
    "elbow",
    "back",
    "lower",
    "neck",
    "chronic",
    "acute",
    "joint",
    "swelling",
    "stiffness",
    "bilateral",
    "history",
    "of",
    "with",
    "without",
    "patient",
    "reports",
    "mild",
    "moderate",
    "severe",
    "intermittent",
    "persistent",
    "radiating",
    "numbness",
    "tingling",
    "weakness",
    "gait",
    "difficulty",
    "walking",
    "limited",
    "range",
    "motion",
    "tenderness",
    "osteoarthritis",
    "arthralgia",
    "strain",
    "sprain",
    "bursitis",
    "tendinitis",
    "lumbago",
    "cervicalgia",
    "primary",
    "care",
    "follow",
    "up",
    "evaluation",
    "referral",
    "imaging",
    "xray",
    "recommended",
    "worse",
    "activity",
    "night",
    "morning",
    "weeks",
    "months",
    "since",
    "fall",
    "injury",
    "overuse",
    "obesity",
    "diabetes",
    "hypertension",
    "encounter",
    "unspecified",
    "site",
    "region",
    "localized",
    "generalized",
    "symptoms",
    "noted",
];

const SIGNAL: &[&str] = &[
    "rupture",
    "meniscal",
    "displaced",
    "instability",
    "impingement",
    "stenosis",
    "nonunion",
    "arthroplasty",
    "ligamentous",
    "herniation",
    "malunion",
    "avulsion",
];

const GENERAL_CODES: &[(&str, &str)] = &[
    ("M25.561", "Pain in right knee"),
    ("M25.562", "Pain in left knee"),
    ("M54.50", "Low back pain, unspecified"),
    ("M54.2", "Cervicalgia"),
    ("M25.511", "Pain in right shoulder"),
    ("M79.641", "Pain in right hand"),
    ("M17.11", "Unilateral primary osteoarthritis, right knee"),
    ("M16.12", "Unilateral primary osteoarthritis, left hip"),
    ("M77.10", "Lateral epicondylitis, unspecified elbow"),
    ("M70.61", "Trochanteric bursitis, right hip"),
];

const PROCEDURE_CODES: &[(&str, &str)] = &[
    (
        "S83.241A",
        "Other tear of medial meniscus, current injury, right knee, initial encounter",
    ),
    (
        "M75.121",
        "Complete rotator cuff tear or rupture of right shoulder, not specified as traumatic",
    ),
    (
        "M48.062",
        "Spinal stenosis, lumbar region with neurogenic claudication",
    ),
    (
        "M51.16",
        "Intervertebral disc disorders with radiculopathy, lumbar region",
    ),
    (
        "S82.001A",
        "Unspecified fracture of right patella, initial encounter for closed fracture",
    ),
    (
        "M23.611",
        "Other spontaneous disruption of anterior cruciate ligament of right knee",
    ),
];

/// Shape of a generated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusShape {
    pub n_total: usize,
    pub n_positive: usize,
    /// Inclusive word-count range per record, signal tokens included.
    pub min_words: usize,
    pub max_words: usize,
    pub signal_tokens: usize,
}

impl Default for CorpusShape {
    /// Matches the referral cohort's counts: 2,086 records, 235 positive.
    fn default() -> Self {
        CorpusShape {
            n_total: 2086,
            n_positive: 235,
            min_words: 8,
            max_words: 16,
            signal_tokens: 3,
        }
    }
}

/// Code descriptions covering every code the generator emits.
pub fn code_dictionary() -> CodeDictionary {
    CodeDictionary::new(
        GENERAL_CODES
            .iter()
            .chain(PROCEDURE_CODES)
            .map(|(c, d)| (c.to_string(), d.to_string())),
    )
    .expect("static dictionary is valid")
}

/// Diagnostic texts where each positive record carries `signal_tokens`
/// distinct words from a vocabulary negatives never use. Word counts are
/// drawn from the same range for both classes.
pub fn referral_corpus(shape: &CorpusShape, seed: u64) -> ReferralDataset {
    let mut r = rng::from_seed(seed);
    let mut labels: Vec<u8> = (0..shape.n_total)
        .map(|i| u8::from(i < shape.n_positive))
        .collect();
    labels.shuffle(&mut r);

    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let n_words = r.random_range(shape.min_words..=shape.max_words);
            let mut words: Vec<&str> = Vec::with_capacity(n_words);
            let n_signal = if label == 1 {
                shape.signal_tokens.min(n_words)
            } else {
                0
            };
            for _ in 0..n_words - n_signal {
                words.push(NEUTRAL.choose(&mut r).copied().unwrap_or("pain"));
            }
            for w in SIGNAL.choose_multiple(&mut r, n_signal) {
                let at = r.random_range(0..=words.len());
                words.insert(at, w);
            }

            let mut codes = vec![GENERAL_CODES[r.random_range(0..GENERAL_CODES.len())].0];
            if label == 1 && r.random_bool(0.7) {
                codes.push(PROCEDURE_CODES[r.random_range(0..PROCEDURE_CODES.len())].0);
            } else if r.random_bool(0.3) {
                codes.push(GENERAL_CODES[r.random_range(0..GENERAL_CODES.len())].0);
            }

            ReferralRecord {
                record_id: format!("R{:05}", i + 1),
                diagnosis_text: words.join(" "),
                icd10_codes: codes.into_iter().map(String::from).collect(),
                label,
            }
        })
        .collect();
    ReferralDataset::new(records).expect("generated ids are unique")
}

/// Standard-normal rows; positives get `+shift` on the first `signal_dims`
/// coordinates.
pub fn gaussian_planted(
    n_total: usize,
    n_positive: usize,
    dim: usize,
    signal_dims: usize,
    shift: f64,
    seed: u64,
) -> Result<EmbeddedDataset> {
    let mut r = rng::from_seed(seed);
    let mut labels: Vec<u8> = (0..n_total).map(|i| u8::from(i < n_positive)).collect();
    labels.shuffle(&mut r);
    let mut data = Vec::with_capacity(n_total * dim);
    for &l in &labels {
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut r);
            data.push(if l == 1 && j < signal_dims {
                z + shift
            } else {
                z
            });
        }
    }
    let ids = (0..n_total).map(|i| format!("G{i:05}")).collect();
    let matrix = EmbeddingMatrix::new(ids, Matrix::from_vec(n_total, dim, data)?)?;
    EmbeddedDataset::new(matrix, labels, Variant::Base)
}
