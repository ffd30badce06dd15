use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Dataset, Interaction, RawDataset, RawInteraction, Vocab};

/// Rows removed by each cleaning stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_rows: usize,
    pub duplicates_removed: usize,
    pub missing_removed: usize,
    pub out_of_scale_removed: usize,
}

/// Keeps one record per `(user, item)` pair: the one with the largest timestamp,
/// or the last in file order when timestamps are absent or tied. Records lacking a
/// user or item are passed through untouched for `drop_missing` to handle.
pub fn deduplicate(d: &RawDataset) -> (RawDataset, usize) {
    let mut winner: HashMap<(&str, &str), usize> = HashMap::new();
    for (pos, r) in d.records.iter().enumerate() {
        let (Some(u), Some(i)) = (r.user.as_deref(), r.item.as_deref()) else {
            continue;
        };
        winner
            .entry((u, i))
            .and_modify(|best| {
                let key = |p: usize| (d.records[p].timestamp.unwrap_or(i64::MIN), p);
                if key(pos) > key(*best) {
                    *best = pos;
                }
            })
            .or_insert(pos);
    }
    let records: Vec<RawInteraction> = d
        .records
        .iter()
        .enumerate()
        .filter(|(pos, r)| match (r.user.as_deref(), r.item.as_deref()) {
            (Some(u), Some(i)) => winner[&(u, i)] == *pos,
            _ => true,
        })
        .map(|(_, r)| r.clone())
        .collect();
    let removed = d.records.len() - records.len();
    (
        RawDataset {
            name: d.name.clone(),
            scale: d.scale,
            records,
        },
        removed,
    )
}

/// Drops rows with an absent user, item or rating and interns the ids.
pub fn drop_missing(d: &RawDataset) -> (Dataset, usize) {
    let complete: Vec<(&str, &str, f64, Option<i64>)> = d
        .records
        .iter()
        .filter_map(|r| match (&r.user, &r.item, r.rating) {
            (Some(u), Some(i), Some(rt)) if rt.is_finite() => {
                Some((u.as_str(), i.as_str(), rt, r.timestamp))
            }
            _ => None,
        })
        .collect();
    let removed = d.records.len() - complete.len();
    let users = Arc::new(Vocab::from_ids(complete.iter().map(|c| c.0)));
    let items = Arc::new(Vocab::from_ids(complete.iter().map(|c| c.1)));
    let interactions = complete
        .iter()
        .map(|&(u, i, rating, timestamp)| Interaction {
            user: users.get(u).expect("interned"),
            item: items.get(i).expect("interned"),
            rating,
            timestamp,
        })
        .collect();
    (
        Dataset::new(d.name.clone(), d.scale, users, items, interactions),
        removed,
    )
}

/// Removes ratings outside the dataset's declared scale.
pub fn filter_rating_scale(d: &Dataset) -> (Dataset, usize) {
    let scale = d.scale();
    let kept: Vec<Interaction> = d
        .interactions()
        .iter()
        .filter(|x| scale.contains(x.rating))
        .copied()
        .collect();
    let removed = d.len() - kept.len();
    (d.with_interactions(kept), removed)
}

/// Full cleaning pipeline in its fixed order: dedup → missing → scale filter.
/// The ids are re-interned at the end so the vocabularies only hold surviving ids.
pub fn clean(raw: &RawDataset) -> (Dataset, CleaningReport) {
    let (deduped, duplicates_removed) = deduplicate(raw);
    let (complete, missing_removed) = drop_missing(&deduped);
    let (in_scale, out_of_scale_removed) = filter_rating_scale(&complete);
    let (dataset, _) = drop_missing(&RawDataset::from(&in_scale));
    let report = CleaningReport {
        input_rows: raw.records.len(),
        duplicates_removed,
        missing_removed,
        out_of_scale_removed,
    };
    log::info!(
        "{}: {} rows in, removed {} duplicates, {} with missing fields, {} outside [{}, {}]",
        raw.name,
        report.input_rows,
        report.duplicates_removed,
        report.missing_removed,
        report.out_of_scale_removed,
        raw.scale.min,
        raw.scale.max
    );
    if dataset.is_empty() {
        log::warn!("{}: no interactions left after cleaning", raw.name);
    }
    (dataset, report)
}
