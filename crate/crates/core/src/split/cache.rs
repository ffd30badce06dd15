//! On-disk split cache: `train.tsv`, `test.tsv` and a `manifest.json` holding the
//! split configuration and the checksum of both files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{checksum_of, Partitionable, SplitConfig, TrainTestSplit};
use crate::data::{Dataset, ImplicitDataset, Interaction, RatingScale, Vocab};
use crate::error::{DataError, SplitError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Explicit,
    Implicit,
}

/// What is needed besides the TSV rows to rebuild a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub kind: Kind,
    pub name: String,
    pub scale: Option<RatingScale>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    meta: CacheMeta,
    config: SplitConfig,
    checksum: String,
    train_rows: usize,
    test_rows: usize,
}

const TRAIN: &str = "train.tsv";
const TEST: &str = "test.tsv";
const MANIFEST: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SplitError + '_ {
    move |source| SplitError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn cache_split<D: Partitionable>(s: &TrainTestSplit<D>, dir: &Path) -> Result<(), SplitError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let train = s.train.to_tsv();
    let test = s.test.to_tsv();
    let manifest = Manifest {
        meta: s.train.cache_meta(),
        config: s.config,
        checksum: checksum_of(&train, &test),
        train_rows: s.train.len(),
        test_rows: s.test.len(),
    };
    let write = |name: &str, body: &[u8]| -> Result<(), SplitError> {
        let p: PathBuf = dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))
    };
    write(TRAIN, train.as_bytes())?;
    write(TEST, test.as_bytes())?;
    write(MANIFEST, serde_json::to_string_pretty(&manifest)?.as_bytes())
}

/// Reads a cached split, refusing it when the files do not hash to the manifest checksum.
pub fn load_split<D: Partitionable>(dir: &Path) -> Result<TrainTestSplit<D>, SplitError> {
    let read = |name: &str| -> Result<String, SplitError> {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(io_err(&p))
    };
    let manifest: Manifest = serde_json::from_str(&read(MANIFEST)?)?;
    let train = read(TRAIN)?;
    let test = read(TEST)?;
    let actual = checksum_of(&train, &test);
    if actual != manifest.checksum {
        return Err(SplitError::Checksum {
            expected: manifest.checksum,
            actual,
        });
    }
    let (train, test) = D::from_tsv_pair(&manifest.meta, &train, &test)?;
    Ok(TrainTestSplit {
        train,
        test,
        config: manifest.config,
        checksum: actual,
    })
}

/// Loads the split cached in `dir`, or builds it with `make`, caches it and loads
/// it back so callers always see the cache's representation. The flag is true
/// when a new split was created.
pub fn load_or_create_split<D, F>(dir: &Path, make: F) -> Result<(TrainTestSplit<D>, bool), SplitError>
where
    D: Partitionable,
    F: FnOnce() -> Result<TrainTestSplit<D>, SplitError>,
{
    if dir.join(MANIFEST).exists() {
        log::info!("loading cached split from {}", dir.display());
        return Ok((load_split(dir)?, false));
    }
    let s = make()?;
    cache_split(&s, dir)?;
    Ok((load_split(dir)?, true))
}

fn rows(body: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    body.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| (n + 1, l.split('\t').collect()))
}

fn bad(row: usize, field: &'static str, value: &str) -> SplitError {
    SplitError::Data(DataError::Parse {
        row,
        field,
        value: value.to_owned(),
    })
}

fn vocabs<'a>(all: impl Iterator<Item = &'a Vec<&'a str>> + Clone) -> (Arc<Vocab>, Arc<Vocab>) {
    (
        Arc::new(Vocab::from_ids(all.clone().map(|r| r[0]))),
        Arc::new(Vocab::from_ids(all.map(|r| r[1]))),
    )
}

pub(super) fn explicit_from_tsv(
    meta: &CacheMeta,
    train: &str,
    test: &str,
) -> Result<(Dataset, Dataset), SplitError> {
    let scale = meta
        .scale
        .ok_or_else(|| SplitError::Config("explicit cache lacks a rating scale".into()))?;
    let parts: Vec<Vec<(usize, Vec<&str>)>> = [train, test].iter().map(|b| rows(b).collect()).collect();
    for (n, r) in parts.iter().flatten() {
        if r.len() < 3 {
            return Err(bad(*n, "row", &r.join("\t")));
        }
    }
    let (users, items) = vocabs(parts.iter().flatten().map(|(_, r)| r));
    let build = |part: &[(usize, Vec<&str>)]| -> Result<Dataset, SplitError> {
        let xs = part
            .iter()
            .map(|(n, r)| {
                let rating: f64 = r[2].parse().map_err(|_| bad(*n, "rating", r[2]))?;
                let timestamp = match r.get(3).filter(|t| !t.is_empty()) {
                    Some(t) => Some(t.parse::<i64>().map_err(|_| bad(*n, "timestamp", t))?),
                    None => None,
                };
                Ok(Interaction {
                    user: users.get(r[0]).expect("interned"),
                    item: items.get(r[1]).expect("interned"),
                    rating,
                    timestamp,
                })
            })
            .collect::<Result<Vec<_>, SplitError>>()?;
        Ok(Dataset::new(meta.name.clone(), scale, Arc::clone(&users), Arc::clone(&items), xs))
    };
    Ok((build(&parts[0])?, build(&parts[1])?))
}

pub(super) fn implicit_from_tsv(
    meta: &CacheMeta,
    train: &str,
    test: &str,
) -> Result<(ImplicitDataset, ImplicitDataset), SplitError> {
    let threshold = meta.threshold.unwrap_or(1.0);
    let parts: Vec<Vec<(usize, Vec<&str>)>> = [train, test].iter().map(|b| rows(b).collect()).collect();
    for (n, r) in parts.iter().flatten() {
        if r.len() < 2 {
            return Err(bad(*n, "row", &r.join("\t")));
        }
    }
    let (users, items) = vocabs(parts.iter().flatten().map(|(_, r)| r));
    let build = |part: &[(usize, Vec<&str>)]| {
        let pos = part
            .iter()
            .map(|(_, r)| (users.get(r[0]).expect("interned"), items.get(r[1]).expect("interned")))
            .collect();
        ImplicitDataset::new(meta.name.clone(), threshold, Arc::clone(&users), Arc::clone(&items), pos)
    };
    Ok((build(&parts[0]), build(&parts[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{convert_implicit, generate_synthetic, SyntheticConfig};
    use crate::split::{global_random_split, per_user_split};

    #[test]
    fn explicit_round_trip_and_tamper() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let s = global_random_split(&d, &SplitConfig::global(0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        cache_split(&s, dir.path()).unwrap();
        let back: TrainTestSplit<Dataset> = load_split(dir.path()).unwrap();
        assert_eq!(back.checksum, s.checksum);
        assert_eq!(back.train.to_tsv(), s.train.to_tsv());
        assert_eq!(back.test.to_tsv(), s.test.to_tsv());
        assert_eq!(back.config, s.config);

        let p = dir.path().join(TEST);
        let mut body = fs::read_to_string(&p).unwrap();
        body.push_str("999\t999\t5\n");
        fs::write(&p, body).unwrap();
        assert!(matches!(
            load_split::<Dataset>(dir.path()),
            Err(SplitError::Checksum { .. })
        ));
    }

    #[test]
    fn implicit_round_trip() {
        let d = generate_synthetic(&SyntheticConfig {
            density: 0.8,
            ..Default::default()
        })
        .unwrap();
        let imp = convert_implicit(&d, Some(2.5)).unwrap();
        let s = per_user_split(&imp, &SplitConfig::per_user(0, 3, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        cache_split(&s, dir.path()).unwrap();
        let back: TrainTestSplit<ImplicitDataset> = load_split(dir.path()).unwrap();
        assert_eq!(back.train.to_tsv(), s.train.to_tsv());
        assert_eq!(back.train.threshold(), 2.5);
    }

    #[test]
    fn second_request_reuses_cache() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (first, created) =
            load_or_create_split(dir.path(), || global_random_split(&d, &SplitConfig::global(0))).unwrap();
        assert!(created);
        let (second, created) = load_or_create_split::<Dataset, _>(dir.path(), || {
            panic!("cache present, must not re-split")
        })
        .unwrap();
        assert!(!created);
        assert_eq!(first.checksum, second.checksum);
        assert_eq!(first.train.interactions(), second.train.interactions());
    }
}
