use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RatingScale, RawDataset, RawInteraction};
use crate::error::DataError;

/// Which header columns hold the user, item, rating and (optionally) timestamp.
///
/// Names match a header cell exactly or after stripping a RecBole-style type
/// suffix, so `user_id` matches the header token `user_id:token`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub user_column: String,
    pub item_column: String,
    pub rating_column: String,
    pub timestamp_column: Option<String>,
    pub delimiter: char,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            user_column: "user_id".into(),
            item_column: "item_id".into(),
            rating_column: "rating".into(),
            timestamp_column: Some("timestamp".into()),
            delimiter: '\t',
        }
    }
}

impl ColumnMapping {
    pub fn validate(&self) -> Result<(), DataError> {
        let cols = [&self.user_column, &self.item_column, &self.rating_column];
        for (i, a) in cols.iter().enumerate() {
            if cols[i + 1..].contains(a) {
                return Err(DataError::DuplicateColumn((*a).clone()));
            }
        }
        Ok(())
    }

    fn locate(&self, header: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| {
                let h = h.trim();
                h == name || h.split_once(':').is_some_and(|(base, _)| base == name)
            })
            .ok_or_else(|| DataError::MissingColumn(name.to_owned()))
    }
}

/// Reads a delimited interaction file with a header row. Empty cells (and `NaN`)
/// become absent values; any other unparseable number is an error naming its line.
pub fn load_interactions(
    path: &Path,
    name: &str,
    mapping: &ColumnMapping,
    scale: RatingScale,
) -> Result<RawDataset, DataError> {
    mapping.validate()?;
    scale.validate()?;
    let csv_err = |source| DataError::Csv {
        path: path.to_owned(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .quoting(mapping.delimiter != '\t')
        .from_reader(std::io::BufReader::new(file));

    let header = reader.headers().map_err(csv_err)?.clone();
    let user_col = mapping.locate(&header, &mapping.user_column)?;
    let item_col = mapping.locate(&header, &mapping.item_column)?;
    let rating_col = mapping.locate(&header, &mapping.rating_column)?;
    let ts_col = match &mapping.timestamp_column {
        Some(c) => Some(mapping.locate(&header, c)?),
        None => None,
    };

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |i: usize| rec.get(i).map(str::trim).filter(|s| !s.is_empty());
        let rating = match cell(rating_col) {
            None => None,
            Some(v) => {
                let r: f64 = v.parse().map_err(|_| DataError::Parse {
                    row: line,
                    field: "rating",
                    value: v.to_owned(),
                })?;
                (!r.is_nan()).then_some(r)
            }
        };
        let timestamp = match ts_col.and_then(cell) {
            None => None,
            Some(v) => {
                let t: f64 = v.parse().map_err(|_| DataError::Parse {
                    row: line,
                    field: "timestamp",
                    value: v.to_owned(),
                })?;
                t.is_finite().then_some(t as i64)
            }
        };
        records.push(RawInteraction {
            user: cell(user_col).map(str::to_owned),
            item: cell(item_col).map(str::to_owned),
            rating,
            timestamp,
        });
    }
    Ok(RawDataset {
        name: name.to_owned(),
        scale,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn scale() -> RatingScale {
        RatingScale::new(1.0, 5.0).unwrap()
    }

    #[test]
    fn parses_recbole_header() {
        let f = write(
            "user_id:token\titem_id:token\trating:float\n1\t10\t4\n2\t10\t3.5\n1\t11\t5\n",
        );
        let m = ColumnMapping {
            timestamp_column: None,
            ..ColumnMapping::default()
        };
        let d = load_interactions(f.path(), "toy", &m, scale()).unwrap();
        assert_eq!(d.records.len(), 3);
        assert_eq!(d.records[1].user.as_deref(), Some("2"));
        assert_eq!(d.records[1].rating, Some(3.5));
        assert_eq!(d.records[2].timestamp, None);
    }

    #[test]
    fn parses_timestamps_when_mapped() {
        let f = write("user_id:token\titem_id:token\trating:float\ttimestamp:float\n7\t8\t2\t881250949\n");
        let d = load_interactions(f.path(), "t", &ColumnMapping::default(), scale()).unwrap();
        assert_eq!(d.records[0].timestamp, Some(881_250_949));
    }

    #[test]
    fn bad_rating_names_the_row() {
        let f = write("user_id\titem_id\trating\n1\t2\t3\n1\t3\tabc\n");
        let m = ColumnMapping {
            timestamp_column: None,
            ..ColumnMapping::default()
        };
        match load_interactions(f.path(), "t", &m, scale()) {
            Err(DataError::Parse { row, field, value }) => {
                assert_eq!(row, 3);
                assert_eq!(field, "rating");
                assert_eq!(value, "abc");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_file() {
        let f = write("u\ti\tr\n1\t2\t3\n");
        let err = load_interactions(f.path(), "t", &ColumnMapping::default(), scale());
        assert!(matches!(err, Err(DataError::MissingColumn(c)) if c == "user_id"));
        let err = load_interactions(
            Path::new("/nonexistent/x.tsv"),
            "t",
            &ColumnMapping::default(),
            scale(),
        );
        assert!(matches!(err, Err(DataError::Io { .. })));
    }

    #[test]
    fn empty_cells_are_missing() {
        let f = write("user,item,rating\n1,,4\n2,5,\n");
        let m = ColumnMapping {
            user_column: "user".into(),
            item_column: "item".into(),
            rating_column: "rating".into(),
            timestamp_column: None,
            delimiter: ',',
        };
        let d = load_interactions(f.path(), "t", &m, scale()).unwrap();
        assert_eq!(d.records[0].item, None);
        assert_eq!(d.records[1].rating, None);
    }

    #[test]
    fn duplicate_mapping_rejected() {
        let m = ColumnMapping {
            item_column: "user_id".into(),
            ..ColumnMapping::default()
        };
        assert!(matches!(m.validate(), Err(DataError::DuplicateColumn(_))));
    }
}
