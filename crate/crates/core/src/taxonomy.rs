//! Intent label spaces and the fine-to-coarse clustering.
//!
//! A [`Taxonomy`] is immutable after construction. Labels are compared
//! byte-exact after trimming surrounding whitespace; no case folding is done.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Coarse,
    Fine,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Coarse => "coarse",
            Granularity::Fine => "fine",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntentLabel {
    pub name: String,
    pub granularity: Granularity,
}

impl IntentLabel {
    pub fn coarse(name: impl Into<String>) -> Self {
        Self { name: name.into(), granularity: Granularity::Coarse }
    }

    pub fn fine(name: impl Into<String>) -> Self {
        Self { name: name.into(), granularity: Granularity::Fine }
    }
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    dataset: String,
    coarse_to_fine: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
}

/// Fine-to-coarse label clustering for one dataset family.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    dataset: String,
    coarse_to_fine: BTreeMap<String, Vec<String>>,
    fine_to_coarse: HashMap<String, String>,
    fine_sorted: Vec<String>,
    notes: Option<String>,
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.dataset == other.dataset && self.coarse_to_fine == other.coarse_to_fine
    }
}

/// Outcome of [`Taxonomy::validate_expected_sizes`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeCheck {
    pub passed: bool,
    pub expected: usize,
    pub actual: usize,
    pub message: String,
}

impl Taxonomy {
    /// Builds and validates a taxonomy. Label lists are trimmed and sorted.
    pub fn new<I, C, F>(dataset: impl Into<String>, clusters: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, Vec<F>)>,
        C: AsRef<str>,
        F: AsRef<str>,
    {
        let dataset = dataset.into();
        let mut coarse_to_fine: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut fine_to_coarse: HashMap<String, String> = HashMap::new();

        for (coarse, fines) in clusters {
            let coarse = coarse.as_ref().trim().to_string();
            if coarse.is_empty() {
                return Err(Error::EmptyLabel(format!("taxonomy {dataset:?}")));
            }
            if fines.is_empty() {
                return Err(Error::EmptyCoarseCluster(coarse));
            }
            let entry = coarse_to_fine.entry(coarse.clone()).or_default();
            for fine in fines {
                let fine = fine.as_ref().trim().to_string();
                if fine.is_empty() {
                    return Err(Error::EmptyLabel(format!("coarse cluster {coarse:?}")));
                }
                if let Some(first) = fine_to_coarse.get(&fine) {
                    return Err(Error::DuplicateFineLabel {
                        label: fine,
                        first: first.clone(),
                        second: coarse,
                    });
                }
                fine_to_coarse.insert(fine.clone(), coarse.clone());
                entry.push(fine);
            }
        }

        // A coarse name may only coincide with a fine name when it is that
        // label's singleton cluster (ATIS-style self clusters, SNIPS GetWeather).
        for (coarse, fines) in &coarse_to_fine {
            if fine_to_coarse.contains_key(coarse) && !(fines.len() == 1 && &fines[0] == coarse) {
                return Err(Error::LabelCollision(coarse.clone()));
            }
        }

        for fines in coarse_to_fine.values_mut() {
            fines.sort();
        }
        let mut fine_sorted: Vec<String> = fine_to_coarse.keys().cloned().collect();
        fine_sorted.sort();

        Ok(Self { dataset, coarse_to_fine, fine_to_coarse, fine_sorted, notes: None })
    }

    /// Every fine label becomes its own coarse cluster.
    pub fn degenerate<F: AsRef<str>>(dataset: impl Into<String>, fines: &[F]) -> Result<Self> {
        Self::new(dataset, fines.iter().map(|f| (f.as_ref().to_string(), vec![f.as_ref().to_string()])))
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = Some(notes.into());
        self
    }

    pub fn from_json_str(text: &str, context: &str) -> Result<Self> {
        let raw: TaxonomyFile = serde_json::from_str(text).map_err(|e| Error::parse(context, e))?;
        let mut tax = Self::new(raw.dataset, raw.coarse_to_fine)?;
        tax.notes = raw.notes;
        Ok(tax)
    }

    pub fn to_json_string(&self) -> String {
        let file = TaxonomyFile {
            dataset: self.dataset.clone(),
            coarse_to_fine: self.coarse_to_fine.clone(),
            notes: self.notes.clone(),
        };
        serde_json::to_string_pretty(&file).expect("taxonomy serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn dataset(&self) -> &str {
        &self.dataset
    }

    pub fn notes(&self) -> Option<&str> {
        self.notes.as_deref()
    }

    pub fn coarse_to_fine(&self) -> &BTreeMap<String, Vec<String>> {
        &self.coarse_to_fine
    }

    /// Coarse labels in sorted order; position is the class index.
    pub fn coarse_labels(&self) -> Vec<&str> {
        self.coarse_to_fine.keys().map(String::as_str).collect()
    }

    /// Fine labels in sorted order; position is the class index.
    pub fn fine_labels(&self) -> Vec<&str> {
        self.fine_sorted.iter().map(String::as_str).collect()
    }

    pub fn num_coarse(&self) -> usize {
        self.coarse_to_fine.len()
    }

    pub fn num_fine(&self) -> usize {
        self.fine_sorted.len()
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.num_coarse(), self.num_fine())
    }

    pub fn contains_fine(&self, fine: &str) -> bool {
        self.fine_to_coarse.contains_key(fine.trim())
    }

    pub fn contains_coarse(&self, coarse: &str) -> bool {
        self.coarse_to_fine.contains_key(coarse.trim())
    }

    pub fn coarse_of_name(&self, fine: &str) -> Result<&str> {
        self.fine_to_coarse
            .get(fine.trim())
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownLabel { granularity: "fine", name: fine.to_string() })
    }

    pub fn coarse_of(&self, fine: &IntentLabel) -> Result<IntentLabel> {
        if fine.granularity != Granularity::Fine {
            return Err(Error::Validation(format!(
                "coarse_of expects a fine label, got coarse label {:?}",
                fine.name
            )));
        }
        self.coarse_of_name(&fine.name).map(IntentLabel::coarse)
    }

    pub fn coarse_index(&self, coarse: &str) -> Result<usize> {
        let key = coarse.trim();
        self.coarse_to_fine
            .keys()
            .position(|c| c == key)
            .ok_or_else(|| Error::UnknownLabel { granularity: "coarse", name: coarse.to_string() })
    }

    pub fn fine_index(&self, fine: &str) -> Result<usize> {
        self.fine_sorted
            .binary_search_by(|f| f.as_str().cmp(fine.trim()))
            .map_err(|_| Error::UnknownLabel { granularity: "fine", name: fine.to_string() })
    }

    pub fn coarse_name(&self, index: usize) -> Option<&str> {
        self.coarse_to_fine.keys().nth(index).map(String::as_str)
    }

    pub fn fine_name(&self, index: usize) -> Option<&str> {
        self.fine_sorted.get(index).map(String::as_str)
    }

    pub fn validate_expected_sizes(&self, expected_coarse: usize) -> SizeCheck {
        let actual = self.num_coarse();
        let passed = actual == expected_coarse;
        let message = if passed {
            format!("{}: {actual} coarse labels as expected", self.dataset)
        } else {
            format!("{}: expected {expected_coarse} coarse labels, actual={actual}", self.dataset)
        };
        SizeCheck { passed, expected: expected_coarse, actual, message }
    }

    /// SHA-256 over the canonical (sorted) mapping.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dataset.as_bytes());
        for (coarse, fines) in &self.coarse_to_fine {
            h.update([0u8]);
            h.update(coarse.as_bytes());
            for f in fines {
                h.update([1u8]);
                h.update(f.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Taxonomy::from_json_str(&text, &path.display().to_string())
}
