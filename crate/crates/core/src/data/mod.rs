//! Interaction datasets: loading, cleaning, implicit conversion and statistics.
//!
//! Loading produces a [`RawDataset`] whose cells may be absent. The cleaning
//! pipeline (dedup → missing → scale filter) turns it into a validated
//! [`Dataset`] whose user and item ids are interned into dense indices.

mod clean;
mod implicit;
mod load;
mod synthetic;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub use clean::{clean, deduplicate, drop_missing, filter_rating_scale, CleaningReport};
pub use implicit::{convert_implicit, ImplicitDataset};
pub use load::{load_interactions, ColumnMapping};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// Dense user index.
pub type UserIdx = u32;
/// Dense item index.
pub type ItemIdx = u32;

/// Closed interval of valid ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self, DataError> {
        let s = RatingScale { min, max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.min.is_finite() && self.max.is_finite() && self.min < self.max {
            Ok(())
        } else {
            Err(DataError::InvalidScale {
                min: self.min,
                max: self.max,
            })
        }
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    /// Positive-feedback threshold: 4.0 on a 5-point scale, 7.0 on a 10-point scale,
    /// otherwise the same relative position (75% of the span above `min`).
    pub fn default_implicit_threshold(&self) -> f64 {
        if self.max == 5.0 {
            4.0
        } else if self.max == 10.0 {
            7.0
        } else {
            self.min + 0.75 * (self.max - self.min)
        }
    }
}

/// Bidirectional map between external ids and dense indices.
///
/// Indices follow a canonical ordering of the ids (numeric when every id parses
/// as an unsigned integer, lexicographic otherwise), so the same id set always
/// yields the same indices regardless of file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        let numeric = ids.iter().all(|s| s.parse::<u64>().is_ok());
        if numeric {
            ids.sort_by_key(|s| s.parse::<u64>().unwrap_or(0));
        } else {
            ids.sort();
        }
        ids.dedup();
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Vocab { ids, index }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    pub fn get(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    #[inline]
    pub fn id(&self, idx: u32) -> &str {
        &self.ids[idx as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// One validated rating event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: UserIdx,
    pub item: ItemIdx,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// One row as read from disk; any cell may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user: Option<String>,
    pub item: Option<String>,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

/// Interactions before cleaning, in source-file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub name: String,
    pub scale: RatingScale,
    pub records: Vec<RawInteraction>,
}

impl From<&Dataset> for RawDataset {
    fn from(d: &Dataset) -> Self {
        RawDataset {
            name: d.name.clone(),
            scale: d.scale,
            records: d
                .interactions
                .iter()
                .map(|x| RawInteraction {
                    user: Some(d.users.id(x.user).to_owned()),
                    item: Some(d.items.id(x.item).to_owned()),
                    rating: Some(x.rating),
                    timestamp: x.timestamp,
                })
                .collect(),
        }
    }
}

/// A validated explicit-rating dataset. Immutable once built; clones share the id maps.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    scale: RatingScale,
    users: Arc<Vocab>,
    items: Arc<Vocab>,
    interactions: Vec<Interaction>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        scale: RatingScale,
        users: Arc<Vocab>,
        items: Arc<Vocab>,
        interactions: Vec<Interaction>,
    ) -> Self {
        Dataset {
            name: name.into(),
            scale,
            users,
            items,
            interactions,
        }
    }

    /// Builds a dataset from `(user, item, rating)` triples with string ids.
    pub fn from_triples<U, I>(
        name: &str,
        scale: RatingScale,
        triples: impl IntoIterator<Item = (U, I, f64)>,
    ) -> Self
    where
        U: Into<String>,
        I: Into<String>,
    {
        let raw = RawDataset {
            name: name.to_owned(),
            scale,
            records: triples
                .into_iter()
                .map(|(u, i, r)| RawInteraction {
                    user: Some(u.into()),
                    item: Some(i.into()),
                    rating: Some(r),
                    timestamp: None,
                })
                .collect(),
        };
        drop_missing(&raw).0
    }

    /// Same vocabularies and metadata, different interactions.
    pub fn with_interactions(&self, interactions: Vec<Interaction>) -> Self {
        Dataset {
            name: self.name.clone(),
            scale: self.scale,
            users: Arc::clone(&self.users),
            items: Arc::clone(&self.items),
            interactions,
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn users(&self) -> &Arc<Vocab> {
        &self.users
    }

    pub fn items(&self) -> &Arc<Vocab> {
        &self.items
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Size of the user index space (may exceed the number of users present).
    pub fn user_capacity(&self) -> usize {
        self.users.len()
    }

    pub fn item_capacity(&self) -> usize {
        self.items.len()
    }

    /// Distinct users with at least one interaction.
    pub fn n_users(&self) -> usize {
        count_distinct(self.interactions.iter().map(|x| x.user), self.users.len())
    }

    pub fn n_items(&self) -> usize {
        count_distinct(self.interactions.iter().map(|x| x.item), self.items.len())
    }

    /// `1 − |interactions| / (n_users · n_items)`; 0 for an empty dataset.
    pub fn sparsity(&self) -> f64 {
        let cells = self.n_users() as f64 * self.n_items() as f64;
        if cells == 0.0 {
            0.0
        } else {
            1.0 - self.len() as f64 / cells
        }
    }

    pub fn has_timestamps(&self) -> bool {
        self.interactions.iter().any(|x| x.timestamp.is_some())
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.is_empty() {
            None
        } else {
            Some(self.interactions.iter().map(|x| x.rating).sum::<f64>() / self.len() as f64)
        }
    }

    /// Per-user `(item, rating)` lists indexed by user, in interaction order.
    pub fn by_user(&self) -> Vec<Vec<(ItemIdx, f64)>> {
        let mut out = vec![Vec::new(); self.users.len()];
        for x in &self.interactions {
            out[x.user as usize].push((x.item, x.rating));
        }
        out
    }

    /// Per-item `(user, rating)` lists indexed by item, in interaction order.
    pub fn by_item(&self) -> Vec<Vec<(UserIdx, f64)>> {
        let mut out = vec![Vec::new(); self.items.len()];
        for x in &self.interactions {
            out[x.item as usize].push((x.user, x.rating));
        }
        out
    }

    /// Writes `user, item, rating[, timestamp]` as TSV with external ids.
    pub fn write_tsv(&self, path: &Path) -> Result<(), DataError> {
        let io = |source| DataError::Io {
            path: path.to_owned(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let ts = self.has_timestamps();
        let header = if ts {
            "user\titem\trating\ttimestamp\n"
        } else {
            "user\titem\trating\n"
        };
        w.write_all(header.as_bytes()).map_err(io)?;
        for x in &self.interactions {
            write!(w, "{}\t{}\t{}", self.users.id(x.user), self.items.id(x.item), x.rating)
                .map_err(io)?;
            if ts {
                match x.timestamp {
                    Some(t) => writeln!(w, "\t{t}"),
                    None => writeln!(w, "\t"),
                }
                .map_err(io)?;
            } else {
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

fn count_distinct(it: impl Iterator<Item = u32>, capacity: usize) -> usize {
    let mut seen = vec![false; capacity];
    let mut n = 0;
    for v in it {
        let s = &mut seen[v as usize];
        if !*s {
            *s = true;
            n += 1;
        }
    }
    n
}

/// Summary counts, as reported in the dataset overview table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    /// Fraction in `[0, 1]`, rounded to 4 decimal places.
    pub sparsity: f64,
}

pub fn compute_stats(d: &Dataset) -> Result<DatasetStats, DataError> {
    if d.is_empty() {
        return Err(DataError::Empty(d.name.clone()));
    }
    Ok(DatasetStats {
        users: d.n_users(),
        items: d.n_items(),
        ratings: d.len(),
        sparsity: (d.sparsity() * 1e4).round() / 1e4,
    })
}
