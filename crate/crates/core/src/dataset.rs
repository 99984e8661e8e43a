//! Referral corpora: loading, code-description enrichment and descriptive
//! statistics.
//!
//! The referral file is comma-separated UTF-8 with RFC-4180 quoting and the
//! header `record_id,diagnosis_text,icd10_codes,label` (column names are
//! configurable through [`Schema`]). `icd10_codes` holds `;`-separated codes.
//! A missing or blank text cell becomes the empty string.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separator placed between the original text and appended descriptions.
pub const ENRICH_SEPARATOR: &str = " | ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferralRecord {
    pub record_id: String,
    pub diagnosis_text: String,
    pub icd10_codes: Vec<String>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReferralDataset {
    records: Vec<ReferralRecord>,
    /// Set once code descriptions have been appended.
    pub enriched: bool,
}

impl ReferralDataset {
    /// Builds a dataset, checking ids are non-empty and unique and labels binary.
    pub fn new(records: Vec<ReferralRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.record_id.is_empty() {
                return Err(Error::invalid(format!("record {i}: empty record_id")));
            }
            if r.label > 1 {
                return Err(Error::invalid(format!(
                    "record {}: label {} is not 0 or 1",
                    r.record_id, r.label
                )));
            }
            if !seen.insert(r.record_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate record_id {}",
                    r.record_id
                )));
            }
        }
        Ok(ReferralDataset {
            records,
            enriched: false,
        })
    }

    pub fn records(&self) -> &[ReferralRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.records
            .iter()
            .map(|r| r.diagnosis_text.as_str())
            .collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.record_id.clone()).collect()
    }

    /// Same dataset with every text replaced through `f`; ids and labels kept.
    pub fn map_texts(&self, mut f: impl FnMut(&ReferralRecord) -> String) -> ReferralDataset {
        ReferralDataset {
            records: self
                .records
                .iter()
                .map(|r| ReferralRecord {
                    diagnosis_text: f(r),
                    ..r.clone()
                })
                .collect(),
            enriched: self.enriched,
        }
    }

    /// Keeps only records for which `keep` is true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&ReferralRecord) -> bool) -> ReferralDataset {
        ReferralDataset {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            enriched: self.enriched,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["record_id", "diagnosis_text", "icd10_codes", "label"])
            .map_err(|e| csv_io(path, e))?;
        for r in &self.records {
            let codes = r.icd10_codes.join(";");
            let label = r.label.to_string();
            w.write_record([
                r.record_id.as_str(),
                r.diagnosis_text.as_str(),
                codes.as_str(),
                label.as_str(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Column names of the referral file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub record_id: String,
    pub diagnosis_text: String,
    pub icd10_codes: String,
    pub label: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            record_id: "record_id".into(),
            diagnosis_text: "diagnosis_text".into(),
            icd10_codes: "icd10_codes".into(),
            label: "label".into(),
        }
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::row(path, 0, format!("{other:?}")),
    }
}

/// Row numbers reported in errors are 1-based file lines, header = line 1.
fn data_row(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map_or(fallback, |p| p.line() as usize)
}

pub fn load_referrals(path: &Path, schema: &Schema) -> Result<ReferralDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;

    let headers = reader.headers().map_err(|e| csv_io(path, e))?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::row(path, 1, format!("missing column `{name}` in header")))
    };
    let id_col = column(&schema.record_id)?;
    let text_col = column(&schema.diagnosis_text)?;
    let codes_col = column(&schema.icd10_codes)?;
    let label_col = column(&schema.label)?;
    let width = headers.len();

    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| match e.position() {
            Some(p) => Error::row(path, p.line() as usize, e.to_string()),
            None => csv_io(path, e),
        })?;
        let line = data_row(&row, i + 2);
        if row.len() != width {
            return Err(Error::row(
                path,
                line,
                format!("expected {width} columns, found {}", row.len()),
            ));
        }

        let record_id = row[id_col].trim().to_string();
        if record_id.is_empty() {
            return Err(Error::row(path, line, "empty record_id"));
        }
        if let Some(first) = seen.insert(record_id.clone(), line) {
            return Err(Error::row(
                path,
                line,
                format!("duplicate record_id `{record_id}` (first seen on row {first})"),
            ));
        }

        let label = match row[label_col].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::row(
                    path,
                    line,
                    format!("label `{other}` is not 0 or 1"),
                ))
            }
        };

        let diagnosis_text = if row[text_col].trim().is_empty() {
            String::new()
        } else {
            row[text_col].to_string()
        };
        let icd10_codes = row[codes_col]
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(String::from)
            .collect();

        records.push(ReferralRecord {
            record_id,
            diagnosis_text,
            icd10_codes,
            label,
        });
    }

    Ok(ReferralDataset {
        records,
        enriched: false,
    })
}

/// ICD-10-CM code to long description.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDictionary {
    entries: BTreeMap<String, String>,
}

impl CodeDictionary {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (code, description) in entries {
            if description.trim().is_empty() {
                return Err(Error::invalid(format!("code {code}: empty description")));
            }
            if map.insert(code.clone(), description).is_some() {
                return Err(Error::invalid(format!("duplicate code {code}")));
            }
        }
        Ok(CodeDictionary { entries: map })
    }

    pub fn get(&self, code: &str) -> Option<&str> {
        self.entries.get(code).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(c, d)| (c.as_str(), d.as_str()))
    }

    /// Writes `code,description` rows in code order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["code", "description"])
            .map_err(|e| csv_io(path, e))?;
        for (c, d) in self.iter() {
            w.write_record([c, d]).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a `code,description` file.
pub fn load_code_dictionary(path: &Path) -> Result<CodeDictionary> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = reader.headers().map_err(|e| csv_io(path, e))?.clone();
    let pos = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::row(path, 1, format!("missing column `{name}` in header")))
    };
    let (code_col, desc_col) = (pos("code")?, pos("description")?);

    let mut entries = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::row(path, i + 2, e.to_string()))?;
        let line = data_row(&row, i + 2);
        let code = row.get(code_col).unwrap_or("").trim().to_string();
        let desc = row.get(desc_col).unwrap_or("").trim().to_string();
        if code.is_empty() || desc.is_empty() {
            return Err(Error::row(path, line, "empty code or description"));
        }
        if entries.insert(code.clone(), desc).is_some() {
            return Err(Error::row(path, line, format!("duplicate code `{code}`")));
        }
    }
    Ok(CodeDictionary { entries })
}

/// Codes referenced by records but absent from the dictionary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EnrichmentSummary {
    pub records_enriched: usize,
    pub missing_code_occurrences: usize,
    pub missing_codes: Vec<String>,
}

/// Appends dictionary descriptions of each record's codes to its text.
///
/// Codes are deduplicated, kept in first-occurrence order, and unknown codes
/// are skipped. A dataset that is already enriched is returned unchanged so
/// descriptions are never appended twice.
pub fn enrich_hyde(
    dataset: &ReferralDataset,
    dict: &CodeDictionary,
) -> (ReferralDataset, EnrichmentSummary) {
    let mut summary = EnrichmentSummary::default();
    if dataset.enriched {
        return (dataset.clone(), summary);
    }

    let mut missing = std::collections::BTreeSet::new();
    let records = dataset
        .records
        .iter()
        .map(|r| {
            let mut seen = HashSet::new();
            let mut descriptions = Vec::new();
            for code in &r.icd10_codes {
                if !seen.insert(code.as_str()) {
                    continue;
                }
                match dict.get(code) {
                    Some(d) => descriptions.push(d),
                    None => {
                        summary.missing_code_occurrences += 1;
                        missing.insert(code.clone());
                    }
                }
            }
            let mut out = r.clone();
            if !descriptions.is_empty() {
                summary.records_enriched += 1;
                out.diagnosis_text = format!(
                    "{}{}{}",
                    r.diagnosis_text,
                    ENRICH_SEPARATOR,
                    descriptions.join(ENRICH_SEPARATOR)
                );
            }
            out
        })
        .collect();
    summary.missing_codes = missing.into_iter().collect();

    (
        ReferralDataset {
            records,
            enriched: true,
        },
        summary,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_total: usize,
    pub n_class0: usize,
    pub n_class1: usize,
    pub total_chars: usize,
    pub total_words: usize,
    pub avg_chars: f64,
    pub avg_words: f64,
    pub minority_fraction: f64,
}

/// Table-1 style statistics. Characters are Unicode scalar values, words are
/// maximal runs of non-whitespace.
pub fn describe(dataset: &ReferralDataset) -> Result<DatasetSummary> {
    let n_total = dataset.len();
    if n_total == 0 {
        return Err(Error::invalid("cannot describe an empty dataset"));
    }
    let n_class1 = dataset.records.iter().filter(|r| r.label == 1).count();
    let total_chars = dataset
        .records
        .iter()
        .map(|r| r.diagnosis_text.chars().count())
        .sum();
    let total_words = dataset
        .records
        .iter()
        .map(|r| r.diagnosis_text.split_whitespace().count())
        .sum();
    Ok(DatasetSummary {
        n_total,
        n_class0: n_total - n_class1,
        n_class1,
        total_chars,
        total_words,
        avg_chars: total_chars as f64 / n_total as f64,
        avg_words: total_words as f64 / n_total as f64,
        minority_fraction: n_class1 as f64 / n_total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn rec(id: &str, text: &str, codes: &[&str], label: u8) -> ReferralRecord {
        ReferralRecord {
            record_id: id.into(),
            diagnosis_text: text.into(),
            icd10_codes: codes.iter().map(|c| c.to_string()).collect(),
            label,
        }
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp(
            "record_id,diagnosis_text,icd10_codes,label\n\
             a,knee pain,M17.11,0\n\
             b,\"shoulder, torn\",M75.1;S43.4,1\n\
             c,back pain,,0\n",
        );
        let d = load_referrals(f.path(), &Schema::default()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.labels(), vec![0, 1, 0]);
        assert_eq!(d.records()[1].diagnosis_text, "shoulder, torn");
        assert_eq!(d.records()[1].icd10_codes, vec!["M75.1", "S43.4"]);
        assert!(d.records()[2].icd10_codes.is_empty());
        assert_eq!(describe(&d).unwrap().n_class1, 1);
    }

    #[test]
    fn blank_text_becomes_empty() {
        let f = write_tmp("record_id,diagnosis_text,icd10_codes,label\na,,M17.11,0\nb,   ,,1\n");
        let d = load_referrals(f.path(), &Schema::default()).unwrap();
        assert_eq!(d.records()[0].diagnosis_text, "");
        assert_eq!(d.records()[1].diagnosis_text, "");
    }

    #[test]
    fn non_binary_label_names_row() {
        let f = write_tmp("record_id,diagnosis_text,icd10_codes,label\na,x,,0\nb,y,,1\nc,z,,2\n");
        let err = load_referrals(f.path(), &Schema::default()).unwrap_err();
        match err {
            Error::Row { row, message, .. } => {
                assert_eq!(row, 4);
                assert!(message.contains('2'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_duplicate_rows() {
        let f = write_tmp("record_id,diagnosis_text,icd10_codes,label\na,x,,0\nb,y,1\n");
        assert!(matches!(
            load_referrals(f.path(), &Schema::default()),
            Err(Error::Row { row: 3, .. })
        ));
        let f = write_tmp("record_id,diagnosis_text,icd10_codes,label\na,x,,0\na,y,,1\n");
        assert!(matches!(
            load_referrals(f.path(), &Schema::default()),
            Err(Error::Row { row: 3, .. })
        ));
    }

    #[test]
    fn custom_schema_and_missing_file() {
        let f = write_tmp("id,text,codes,y\na,x,,1\n");
        let schema = Schema {
            record_id: "id".into(),
            diagnosis_text: "text".into(),
            icd10_codes: "codes".into(),
            label: "y".into(),
        };
        assert_eq!(load_referrals(f.path(), &schema).unwrap().len(), 1);
        assert!(load_referrals(f.path(), &Schema::default()).is_err());
        assert!(matches!(
            load_referrals(Path::new("/nonexistent/x.csv"), &schema),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn enrichment_appends_descriptions() {
        let dict = CodeDictionary::new([(
            "M17.11".to_string(),
            "Unilateral primary osteoarthritis, right knee".to_string(),
        )])
        .unwrap();
        let d = ReferralDataset::new(vec![
            rec("a", "knee pain", &["M17.11"], 0),
            rec("b", "back pain", &[], 1),
            rec("c", "knee", &["M17.11", "M17.11"], 1),
            rec("d", "hip", &["Z99.9"], 0),
        ])
        .unwrap();
        let (e, summary) = enrich_hyde(&d, &dict);
        assert_eq!(
            e.records()[0].diagnosis_text,
            "knee pain | Unilateral primary osteoarthritis, right knee"
        );
        assert_eq!(e.records()[1].diagnosis_text, "back pain");
        assert_eq!(
            e.records()[2]
                .diagnosis_text
                .matches("Unilateral primary osteoarthritis")
                .count(),
            1
        );
        assert_eq!(e.records()[3].diagnosis_text, "hip");
        assert_eq!(summary.missing_codes, vec!["Z99.9"]);
        assert_eq!(summary.records_enriched, 2);
        assert!(e.enriched && !d.enriched);
        assert_eq!(d.records()[0].diagnosis_text, "knee pain");

        let (twice, _) = enrich_hyde(&e, &dict);
        assert_eq!(twice, e);
        assert!(describe(&e).unwrap().total_chars >= describe(&d).unwrap().total_chars);
    }

    #[test]
    fn describe_arithmetic() {
        let d = ReferralDataset::new(vec![rec("a", "ab", &[], 0), rec("b", "cd", &[], 1)]).unwrap();
        let s = describe(&d).unwrap();
        assert_eq!(s.total_chars, 4);
        assert_eq!(s.avg_chars, 2.0);
        assert_eq!(s.total_words, 2);
        assert_eq!(s.minority_fraction, 0.5);
        assert!(describe(&ReferralDataset::default()).is_err());
    }

    #[test]
    fn words_are_whitespace_runs() {
        let d = ReferralDataset::new(vec![rec("a", "  left\tknee \n pain ", &[], 0)]).unwrap();
        assert_eq!(describe(&d).unwrap().total_words, 3);
    }

    #[test]
    fn dictionary_file() {
        let f = write_tmp("code,description\nM17.11,\"Osteoarthritis, right knee\"\n");
        let dict = load_code_dictionary(f.path()).unwrap();
        assert_eq!(dict.get("M17.11"), Some("Osteoarthritis, right knee"));
        let f = write_tmp("code,description\nM17.11,a\nM17.11,b\n");
        assert!(load_code_dictionary(f.path()).is_err());
    }

    #[test]
    fn constructor_rejects_bad_records() {
        assert!(ReferralDataset::new(vec![rec("", "x", &[], 0)]).is_err());
        assert!(ReferralDataset::new(vec![rec("a", "x", &[], 3)]).is_err());
        assert!(ReferralDataset::new(vec![rec("a", "x", &[], 0), rec("a", "y", &[], 1)]).is_err());
    }
}
