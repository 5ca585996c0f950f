//! Shared domain types: response logs, signed response vectors and the
//! item-by-knowledge Q-matrix.
//!
//! String identifiers are mapped to dense indices once, at construction. All
//! numerical code works on the dense indices.

use std::collections::HashSet;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of string identifiers; position is the dense index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdIndex(IndexSet<String>);

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, inserting it at the end if absent.
    pub fn intern(&mut self, id: &str) -> usize {
        match self.0.get_index_of(id) {
            Some(i) => i,
            None => self.0.insert_full(id.to_owned()).0,
        }
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.0.get_index_of(id)
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.0.get_index(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for IdIndex {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        IdIndex(iter.into_iter().map(Into::into).collect())
    }
}

/// One observed response, in dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Response {
    pub learner: usize,
    pub item: usize,
    pub score: u8,
}

/// Learner/item/score triplets plus the identifier maps.
///
/// The index maps may contain learners or items without any response; this
/// happens for the parts of a random split, which all share the parent's
/// index so that models trained on one part can score the others.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseDataset {
    learners: IdIndex,
    items: IdIndex,
    responses: Vec<Response>,
}

impl ResponseDataset {
    /// Builds a dataset from string triplets; identifiers are indexed in order
    /// of first appearance.
    pub fn from_records<I, L, T>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (L, T, i64)>,
        L: AsRef<str>,
        T: AsRef<str>,
    {
        let mut learners = IdIndex::new();
        let mut items = IdIndex::new();
        let mut responses = Vec::new();
        for (learner, item, score) in records {
            let learner = learners.intern(learner.as_ref());
            let item = items.intern(item.as_ref());
            responses.push(Response {
                learner,
                item,
                score: checked_score(score)?,
            });
        }
        Self::with_index(learners, items, responses)
    }

    /// Builds a dataset over an existing identifier universe.
    pub fn with_index(learners: IdIndex, items: IdIndex, responses: Vec<Response>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(responses.len());
        for r in &responses {
            if r.learner >= learners.len() {
                return Err(Error::OutOfRange {
                    what: "learner",
                    index: r.learner,
                    len: learners.len(),
                });
            }
            if r.item >= items.len() {
                return Err(Error::OutOfRange {
                    what: "item",
                    index: r.item,
                    len: items.len(),
                });
            }
            checked_score(i64::from(r.score))?;
            if !seen.insert((r.learner, r.item)) {
                return Err(Error::DuplicatePair {
                    learner: learners.id(r.learner).unwrap_or_default().to_owned(),
                    item: items.id(r.item).unwrap_or_default().to_owned(),
                });
            }
        }
        Ok(Self {
            learners,
            items,
            responses,
        })
    }

    /// Same identifier universe, different responses. The responses must be
    /// drawn from `self` (so they are in range and duplicate-free).
    pub(crate) fn subset(&self, responses: Vec<Response>) -> Self {
        Self {
            learners: self.learners.clone(),
            items: self.items.clone(),
            responses,
        }
    }

    pub fn learners(&self) -> &IdIndex {
        &self.learners
    }

    pub fn items(&self) -> &IdIndex {
        &self.items
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn n_learners(&self) -> usize {
        self.learners.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Triplets with string identifiers, in storage order.
    pub fn records(&self) -> impl Iterator<Item = (&str, &str, u8)> {
        self.responses.iter().map(|r| {
            (
                self.learners.id(r.learner).unwrap_or_default(),
                self.items.id(r.item).unwrap_or_default(),
                r.score,
            )
        })
    }
}

pub(crate) fn checked_score(score: i64) -> Result<u8> {
    match score {
        0 => Ok(0),
        1 => Ok(1),
        other => Err(Error::InvalidScore { score: other }),
    }
}

/// Dense response vector with entries in {-1, 0, +1}: +1 correct, -1 wrong,
/// 0 unobserved.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedResponseVector {
    values: Vec<i8>,
    observed: usize,
}

impl SignedResponseVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0; len],
            observed: 0,
        }
    }

    pub fn from_values(values: Vec<i8>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::InvalidScore {
                score: i64::from(bad),
            });
        }
        let observed = values.iter().filter(|&&v| v != 0).count();
        Ok(Self { values, observed })
    }

    /// Records `score` at `index`, replacing any previous entry.
    pub fn set(&mut self, index: usize, score: u8) {
        let new = if score == 1 { 1 } else { -1 };
        if self.values[index] == 0 {
            self.observed += 1;
        }
        self.values[index] = new;
    }

    pub fn clear(&mut self, index: usize) {
        if self.values[index] != 0 {
            self.observed -= 1;
            self.values[index] = 0;
        }
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn get(&self, index: usize) -> i8 {
        self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.observed
    }

    /// `(index, sign)` for every observed entry, ascending by index.
    pub fn observed(&self) -> impl Iterator<Item = (usize, i8)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, &v)| (i, v))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Signed vectors for every learner (length M) and every item (length N).
pub fn build_vectors(
    ds: &ResponseDataset,
) -> (Vec<SignedResponseVector>, Vec<SignedResponseVector>) {
    let (n, m) = (ds.n_learners(), ds.n_items());
    let mut learners = vec![SignedResponseVector::zeros(m); n];
    let mut items = vec![SignedResponseVector::zeros(n); m];
    for r in ds.responses() {
        learners[r.learner].set(r.item, r.score);
        items[r.item].set(r.learner, r.score);
    }
    (learners, items)
}

/// Evidence for a learner outside the training cohort, projected onto a
/// model's item index.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub vector: SignedResponseVector,
    /// Item identifiers that the model does not know; skipped.
    pub unknown: Vec<String>,
}

/// Builds the signed vector for `(item_id, score)` pairs. Unknown items are
/// skipped and reported; a later response on the same item replaces an
/// earlier one.
pub fn evidence_vector<S: AsRef<str>>(items: &IdIndex, responses: &[(S, u8)]) -> Result<Evidence> {
    if responses.is_empty() {
        return Err(Error::NoEvidence);
    }
    let mut vector = SignedResponseVector::zeros(items.len());
    let mut unknown = Vec::new();
    for (id, score) in responses {
        let score = checked_score(i64::from(*score))?;
        match items.get(id.as_ref()) {
            Some(j) => vector.set(j, score),
            None => unknown.push(id.as_ref().to_owned()),
        }
    }
    if vector.observed_count() == 0 {
        return Err(Error::AllItemsUnknown { unknown });
    }
    Ok(Evidence { vector, unknown })
}

/// Binary item-by-knowledge incidence matrix. Row `j` belongs to `item_ids[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QMatrix {
    knowledge_labels: Vec<String>,
    item_ids: Vec<String>,
    rows: Vec<Vec<u8>>,
}

impl QMatrix {
    pub fn new(
        knowledge_labels: Vec<String>,
        item_ids: Vec<String>,
        rows: Vec<Vec<u8>>,
    ) -> Result<Self> {
        if item_ids.len() != rows.len() {
            return Err(Error::Dimension {
                expected: item_ids.len(),
                actual: rows.len(),
                context: "q-matrix rows",
            });
        }
        let k = knowledge_labels.len();
        if k == 0 {
            return Err(Error::Config(
                "q-matrix needs at least one knowledge concept".into(),
            ));
        }
        let mut seen = HashSet::new();
        for (id, row) in item_ids.iter().zip(&rows) {
            if row.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    actual: row.len(),
                    context: "q-matrix columns",
                });
            }
            if let Some(&bad) = row.iter().find(|&&v| v > 1) {
                return Err(Error::InvalidScore {
                    score: i64::from(bad),
                });
            }
            if row.iter().all(|&v| v == 0) {
                return Err(Error::EmptyQRow { item: id.clone() });
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::QMatrixMismatch(format!("item `{id}` listed twice")));
            }
        }
        Ok(Self {
            knowledge_labels,
            item_ids,
            rows,
        })
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn n_knowledge(&self) -> usize {
        self.knowledge_labels.len()
    }

    pub fn knowledge_labels(&self) -> &[String] {
        &self.knowledge_labels
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn row(&self, item: usize) -> &[u8] {
        &self.rows[item]
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    /// Reorders rows to follow `items`. Every dataset item needs a row and
    /// every row must name a dataset item.
    pub fn aligned_to(&self, items: &IdIndex) -> Result<QMatrix> {
        if let Some(stray) = self.item_ids.iter().find(|id| items.get(id).is_none()) {
            return Err(Error::QMatrixMismatch(format!(
                "q-matrix item `{stray}` is absent from the dataset"
            )));
        }
        let mut rows = Vec::with_capacity(items.len());
        for id in items.iter() {
            let pos = self.item_ids.iter().position(|x| x == id).ok_or_else(|| {
                Error::QMatrixMismatch(format!("no q-matrix row for item `{id}`"))
            })?;
            rows.push(self.rows[pos].clone());
        }
        Ok(QMatrix {
            knowledge_labels: self.knowledge_labels.clone(),
            item_ids: items.iter().map(str::to_owned).collect(),
            rows,
        })
    }

    pub fn is_aligned_to(&self, items: &IdIndex) -> bool {
        self.item_ids.len() == items.len()
            && self.item_ids.iter().zip(items.iter()).all(|(a, b)| a == b)
    }
}
