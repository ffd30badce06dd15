use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Dataset, ItemIdx, UserIdx, Vocab};
use crate::error::DataError;

/// Binary positive feedback derived from thresholded ratings.
#[derive(Debug, Clone)]
pub struct ImplicitDataset {
    name: String,
    threshold: f64,
    users: Arc<Vocab>,
    items: Arc<Vocab>,
    positives: Vec<(UserIdx, ItemIdx)>,
}

impl ImplicitDataset {
    pub fn new(
        name: impl Into<String>,
        threshold: f64,
        users: Arc<Vocab>,
        items: Arc<Vocab>,
        positives: Vec<(UserIdx, ItemIdx)>,
    ) -> Self {
        ImplicitDataset {
            name: name.into(),
            threshold,
            users,
            items,
            positives,
        }
    }

    /// Builds a dataset from `(user, item)` string pairs; threshold recorded as 1.
    pub fn from_pairs<U: AsRef<str>, I: AsRef<str>>(
        name: &str,
        pairs: impl IntoIterator<Item = (U, I)>,
    ) -> Self {
        let pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(u, i)| (u.as_ref().to_owned(), i.as_ref().to_owned()))
            .collect();
        let users = Arc::new(Vocab::from_ids(pairs.iter().map(|p| p.0.clone())));
        let items = Arc::new(Vocab::from_ids(pairs.iter().map(|p| p.1.clone())));
        let positives = pairs
            .iter()
            .map(|(u, i)| (users.get(u).expect("interned"), items.get(i).expect("interned")))
            .collect();
        ImplicitDataset::new(name, 1.0, users, items, positives)
    }

    pub fn with_positives(&self, positives: Vec<(UserIdx, ItemIdx)>) -> Self {
        ImplicitDataset {
            name: self.name.clone(),
            threshold: self.threshold,
            users: Arc::clone(&self.users),
            items: Arc::clone(&self.items),
            positives,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn users(&self) -> &Arc<Vocab> {
        &self.users
    }

    pub fn items(&self) -> &Arc<Vocab> {
        &self.items
    }

    pub fn positives(&self) -> &[(UserIdx, ItemIdx)] {
        &self.positives
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    pub fn user_capacity(&self) -> usize {
        self.users.len()
    }

    pub fn item_capacity(&self) -> usize {
        self.items.len()
    }

    /// Sorted item lists indexed by user.
    pub fn by_user(&self) -> Vec<Vec<ItemIdx>> {
        let mut out = vec![Vec::new(); self.users.len()];
        for &(u, i) in &self.positives {
            out[u as usize].push(i);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }

    /// Sorted user lists indexed by item.
    pub fn by_item(&self) -> Vec<Vec<UserIdx>> {
        let mut out = vec![Vec::new(); self.items.len()];
        for &(u, i) in &self.positives {
            out[i as usize].push(u);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }

    /// Number of positives per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.items.len()];
        for &(_, i) in &self.positives {
            c[i as usize] += 1;
        }
        c
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), DataError> {
        let io = |source| DataError::Io {
            path: path.to_owned(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(b"user\titem\n").map_err(io)?;
        for &(u, i) in &self.positives {
            writeln!(w, "{}\t{}", self.users.id(u), self.items.id(i)).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Keeps pairs rated at or above `threshold` (the scale default when `None`).
/// The id vocabularies are shared with the explicit dataset.
pub fn convert_implicit(d: &Dataset, threshold: Option<f64>) -> Result<ImplicitDataset, DataError> {
    let scale = d.scale();
    let threshold = threshold.unwrap_or_else(|| scale.default_implicit_threshold());
    if !scale.contains(threshold) {
        return Err(DataError::ThresholdOutsideScale {
            threshold,
            min: scale.min,
            max: scale.max,
        });
    }
    let positives: Vec<_> = d
        .interactions()
        .iter()
        .filter(|x| x.rating >= threshold)
        .map(|x| (x.user, x.item))
        .collect();
    if positives.is_empty() {
        log::warn!("{}: no rating reaches the implicit threshold {threshold}", d.name());
    }
    Ok(ImplicitDataset::new(
        d.name(),
        threshold,
        Arc::clone(d.users()),
        Arc::clone(d.items()),
        positives,
    ))
}
