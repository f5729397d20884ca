use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Citation, Result, RuleError};

/// A ranked retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub text: String,
    pub score: f64,
}

impl Passage {
    pub fn citation(&self) -> Citation {
        Citation { doc_id: self.doc_id.clone(), start: 0, end: self.text.len() }
    }
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase())
}

/// TF-IDF index over whole documents.
///
/// Raw term counts, smoothed idf `ln((1+N)/(1+df)) + 1`, l2-normalized rows.
#[derive(Debug, Clone)]
pub struct Corpus {
    ids: Vec<String>,
    texts: Vec<String>,
    idf: BTreeMap<String, f64>,
    rows: Vec<BTreeMap<String, f64>>,
}

impl Corpus {
    /// Builds from `(doc_id, text)` pairs; documents are kept in doc_id order.
    pub fn new<I, S, T>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut docs: Vec<(String, String)> = docs.into_iter().map(|(a, b)| (a.into(), b.into())).collect();
        if docs.is_empty() {
            return Err(RuleError::EmptyCorpus);
        }
        docs.sort_by(|a, b| a.0.cmp(&b.0));
        let counts: Vec<BTreeMap<String, f64>> = docs
            .iter()
            .map(|(_, text)| {
                let mut tf = BTreeMap::new();
                for tok in tokenize(text) {
                    *tf.entry(tok).or_insert(0.0) += 1.0;
                }
                tf
            })
            .collect();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for tf in &counts {
            for term in tf.keys() {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
        }
        let n = docs.len() as f64;
        let idf: BTreeMap<String, f64> =
            df.into_iter().map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)).collect();
        let rows = counts.into_iter().map(|tf| weigh(tf, &idf)).collect();
        let (ids, texts) = docs.into_iter().unzip();
        Ok(Self { ids, texts, idf, rows })
    }

    /// Every regular file in `dir`, doc_id = file name.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut docs = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                let id = entry.file_name().to_string_lossy().into_owned();
                docs.push((id, std::fs::read_to_string(entry.path())?));
            }
        }
        Self::new(docs)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Top-`k` documents by cosine similarity; ties go to the smaller doc_id.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Passage>> {
        if k == 0 {
            return Err(RuleError::InvalidK);
        }
        let mut tf = BTreeMap::new();
        for tok in tokenize(query).filter(|t| self.idf.contains_key(t)) {
            *tf.entry(tok).or_insert(0.0) += 1.0;
        }
        let q = weigh(tf, &self.idf);
        let mut scored: Vec<(usize, f64)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let dot: f64 = q.iter().filter_map(|(t, w)| row.get(t).map(|v| v * w)).sum();
                (i, dot.clamp(0.0, 1.0))
            })
            .collect();
        // ids are sorted, so index order is doc_id order
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, score)| Passage { doc_id: self.ids[i].clone(), text: self.texts[i].clone(), score })
            .collect())
    }
}

fn weigh(tf: BTreeMap<String, f64>, idf: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut row: BTreeMap<String, f64> = tf.into_iter().map(|(t, c)| { let w = c * idf[&t]; (t, w) }).collect();
    let norm = row.values().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.values_mut().for_each(|v| *v /= norm);
    }
    row
}
