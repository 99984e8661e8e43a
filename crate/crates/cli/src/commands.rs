use refertriage::dataset::{
    describe, enrich_hyde, load_code_dictionary, load_referrals, DatasetSummary, EnrichmentSummary,
};
use refertriage::econ::{
    capture_csv, compare_rates, invert_model_rate, simulate_capture, CaptureRow,
};
use refertriage::embed::{embed_dataset, write_embedding_file, EmbeddedDataset, Provider};
use refertriage::eval::{ClassifierChoice, Interval};
use refertriage::experiments::{
    balance_compare, comparison_csv, model_compare, noise_csv, noise_sweep, sweep_report,
    NoisePoint,
};
use refertriage::perturb::{perturb_dataset, NoiseSpec};
use refertriage::project::{load_external, pca_project, write_projection_csv, ProjectionMethod};
use refertriage::stats::ProportionTest;
use refertriage::synthetic::{code_dictionary, referral_corpus};
use refertriage::{ReferralDataset, ThresholdCurve, Variant};
use serde::Serialize;
use std::collections::BTreeMap;

use crate::args::Command;
use crate::config::RunConfig;
use crate::report::OutputDir;
use crate::CliError;

pub fn run(command: Command, cfg: &RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let out = OutputDir::acquire(&cfg.out)?;
    let name = command.name();
    let report = format!("{}.json", name.replace('-', "_"));
    let mut written = Vec::new();
    match command {
        Command::Stats => {
            let base = load_base(cfg)?;
            let enriched = match &cfg.dictionary {
                Some(p) => {
                    let dict = load_code_dictionary(p)?;
                    let (d, enrichment) = enrich_hyde(&base, &dict);
                    Some(EnrichedStats {
                        summary: describe(&d)?,
                        enrichment,
                    })
                }
                None => None,
            };
            let summary = describe(&base)?;
            let result = StatsResult {
                minority_pct: summary.minority_fraction * 100.0,
                summary,
                enriched,
            };
            written.push(out.write_report(&report, name, cfg, &result)?);
        }
        Command::Embed => {
            let data = embedded(cfg)?;
            let file = out.path("embeddings.csv");
            write_embedding_file(&file, &data.matrix)?;
            written.push(file);
            let result = EmbedResult {
                n_records: data.matrix.len(),
                dim: data.matrix.dim(),
                variant: data.variant,
                file: "embeddings.csv",
            };
            written.push(out.write_report(&report, name, cfg, &result)?);
        }
        Command::Cv => {
            let result = cfg.cv.run(&embedded(cfg)?)?;
            written.push(out.write_report(&report, name, cfg, &result)?);
        }
        Command::NoiseSweep => {
            let corpus = load_corpus(cfg)?;
            let points = noise_sweep(
                &corpus,
                &cfg.embedding,
                cfg.variant,
                &cfg.noise.kinds,
                &cfg.noise.levels,
                cfg.noise.seed,
                &cfg.cv,
            )?;
            written.push(out.write_text("noise_sweep.csv", &noise_csv(&points))?);
            written.push(out.write_report(&report, name, cfg, &NoiseResult { points })?);
        }
        Command::BalanceCompare => {
            let c = balance_compare(&embedded(cfg)?, &cfg.balance_strategies, &cfg.cv)?;
            written.push(out.write_text("balance_compare.csv", &comparison_csv(&c))?);
            written.push(out.write_report(&report, name, cfg, &c)?);
        }
        Command::ModelCompare => {
            let c = model_compare(&embedded(cfg)?, &cfg.models, &cfg.cv, cfg.model_seed)?;
            written.push(out.write_text("model_compare.csv", &comparison_csv(&c))?);
            written.push(out.write_report(&report, name, cfg, &c)?);
        }
        Command::ThresholdSweep => {
            let data = embedded(cfg)?;
            let cv = cfg.cv.run(&data)?;
            let curve = sweep_report(&cv, &data.labels, cfg.threshold_grid_step)?;
            written.push(out.write_text("threshold_curve.csv", &curve.to_csv())?);
            let result = ThresholdResult {
                cv_summary: cv.summary,
                selected: match &cfg.cv.classifier {
                    ClassifierChoice::Fixed { .. } => None,
                    ClassifierChoice::Grid { .. } => {
                        Some(cv.folds.iter().map(|f| f.selected.clone()).collect())
                    }
                },
                curve,
            };
            written.push(out.write_report(&report, name, cfg, &result)?);
        }
        Command::Project => {
            let data = embedded(cfg)?;
            let ids = data.matrix.record_ids.clone();
            let projection = match &cfg.coordinates {
                Some(p) => load_external(p, &ids)?,
                None => pca_project(data.features())?,
            };
            let file = out.path("projection.csv");
            write_projection_csv(&file, &ids, &data.labels, &projection)?;
            written.push(file);
            let result = ProjectResult {
                method: projection.method,
                n_records: ids.len(),
                explained_variance_fractions: projection.explained_variance_fractions,
                file: "projection.csv",
            };
            written.push(out.write_report(&report, name, cfg, &result)?);
        }
        Command::Simulate => {
            let mut scenario = cfg.scenario.clone();
            if let Some(rows) = &cfg.model_rate_from {
                scenario.model_rate = invert_model_rate(scenario.baseline_rate, rows)?;
            }
            let rows = simulate_capture(&scenario)?;
            let rate_test = match &cfg.rate_test {
                Some(t) => Some(compare_rates(
                    scenario.baseline_rate,
                    t.n_baseline,
                    scenario.model_rate,
                    t.n_model,
                )?),
                None => None,
            };
            written.push(out.write_text("capture.csv", &capture_csv(&rows))?);
            let result = SimulateResult {
                model_rate: scenario.model_rate,
                model_rate_fitted: cfg.model_rate_from.is_some(),
                headline_pct_increase: refertriage::econ::pct_increase(
                    scenario.baseline_rate,
                    scenario.model_rate,
                ),
                rows,
                rate_test,
            };
            written.push(out.write_report(&report, name, cfg, &result)?);
        }
        Command::Synth => {
            let corpus = referral_corpus(&cfg.synth, cfg.seed);
            let data = out.path("referrals.csv");
            corpus.write_csv(&data)?;
            let dict = out.path("icd10_descriptions.csv");
            code_dictionary().write_csv(&dict)?;
            written.push(data);
            written.push(dict);
            let result = SynthResult {
                summary: describe(&corpus)?,
                files: ["referrals.csv", "icd10_descriptions.csv"],
            };
            written.push(out.write_report(&report, name, cfg, &result)?);
        }
    }
    Ok(written)
}

fn load_base(cfg: &RunConfig) -> Result<ReferralDataset, CliError> {
    Ok(load_referrals(cfg.data_path()?, &cfg.schema)?)
}

/// Loaded corpus, enriched for the hyde variant.
fn load_corpus(cfg: &RunConfig) -> Result<ReferralDataset, CliError> {
    let base = load_base(cfg)?;
    match cfg.variant {
        Variant::Base => Ok(base),
        Variant::Hyde => {
            let path = cfg
                .dictionary
                .as_deref()
                .ok_or_else(|| CliError::Usage("the hyde variant needs --dictionary".into()))?;
            Ok(enrich_hyde(&base, &load_code_dictionary(path)?).0)
        }
    }
}

/// Corpus after the optional single-level perturbation, embedded.
fn embedded(cfg: &RunConfig) -> Result<EmbeddedDataset, CliError> {
    let mut corpus = load_corpus(cfg)?;
    let (kind, level) = (cfg.noise.kinds[0], cfg.noise.levels[0]);
    if level > 0.0 {
        if matches!(cfg.embedding, Provider::File { .. }) {
            return Err(CliError::Usage(
                "text noise cannot be applied to precomputed embeddings".into(),
            ));
        }
        corpus = perturb_dataset(&corpus, &NoiseSpec::new(kind, level, cfg.noise.seed)?)?;
    }
    Ok(embed_dataset(&corpus, &cfg.embedding, cfg.variant)?)
}

#[derive(Serialize)]
struct EnrichedStats {
    summary: DatasetSummary,
    enrichment: EnrichmentSummary,
}

#[derive(Serialize)]
struct StatsResult {
    summary: DatasetSummary,
    minority_pct: f64,
    enriched: Option<EnrichedStats>,
}

#[derive(Serialize)]
struct EmbedResult {
    n_records: usize,
    dim: usize,
    variant: Variant,
    file: &'static str,
}

#[derive(Serialize)]
struct NoiseResult {
    points: Vec<NoisePoint>,
}

#[derive(Serialize)]
struct ThresholdResult {
    cv_summary: BTreeMap<String, Interval>,
    selected: Option<Vec<refertriage::ClassifierSpec>>,
    curve: ThresholdCurve,
}

#[derive(Serialize)]
struct ProjectResult {
    method: ProjectionMethod,
    n_records: usize,
    explained_variance_fractions: Option<[f64; 2]>,
    file: &'static str,
}

#[derive(Serialize)]
struct SimulateResult {
    model_rate: f64,
    model_rate_fitted: bool,
    headline_pct_increase: f64,
    rows: Vec<CaptureRow>,
    rate_test: Option<ProportionTest>,
}

#[derive(Serialize)]
struct SynthResult {
    summary: DatasetSummary,
    files: [&'static str; 2],
}
