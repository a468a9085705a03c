//! Unit-level ingestion and stratified contingency tables.
//!
//! A [`Record`] is one observed unit `(z, d, y, v)`. Records are tabulated
//! into per-stratum [`JointCounts`] tensors indexed by `(z, d, y)` with a
//! binary outcome; strata are the observed cross-classification cells of the
//! selected covariates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One unit-level observation.
///
/// `y` is kept as a raw numeric value so that a continuous outcome can be
/// dichotomized downstream; `v` holds the covariate values in the order the
/// schema listed them.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub z: usize,
    pub d: usize,
    pub y: f64,
    pub v: Vec<String>,
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    pub z: String,
    pub d: String,
    pub y: String,
    /// Covariate columns, in the order they define the stratum key.
    pub covariates: Vec<String>,
}

impl ColumnMap {
    pub fn new(z: &str, d: &str, y: &str, covariates: &[&str]) -> Self {
        ColumnMap {
            z: z.to_string(),
            d: d.to_string(),
            y: y.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Integer cell counts `n(z, d, y)` for one stratum, with a binary outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCounts {
    counts: Vec<u64>,
    levels_z: usize,
    levels_d: usize,
}

impl JointCounts {
    /// An all-zero table with `levels_z >= 2` instrument levels and
    /// `levels_d >= 2` treatment levels.
    pub fn zeros(levels_z: usize, levels_d: usize) -> Result<Self> {
        if levels_z < 2 || levels_d < 2 {
            return Err(Error::NotBinary {
                l: levels_z,
                m: levels_d,
            });
        }
        Ok(JointCounts {
            counts: vec![0; levels_z * levels_d * 2],
            levels_z,
            levels_d,
        })
    }

    /// A binary (L=M=2) table from cells ordered
    /// `[n(0,0,0), n(0,0,1), n(0,1,0), n(0,1,1), n(1,0,0), ..., n(1,1,1)]`.
    pub fn binary(cells: [u64; 8]) -> Self {
        JointCounts {
            counts: cells.to_vec(),
            levels_z: 2,
            levels_d: 2,
        }
    }

    pub fn levels_z(&self) -> usize {
        self.levels_z
    }

    pub fn levels_d(&self) -> usize {
        self.levels_d
    }

    pub fn is_binary(&self) -> bool {
        self.levels_z == 2 && self.levels_d == 2
    }

    fn index(&self, z: usize, d: usize, y: usize) -> usize {
        debug_assert!(z < self.levels_z && d < self.levels_d && y < 2);
        (z * self.levels_d + d) * 2 + y
    }

    pub fn count(&self, z: usize, d: usize, y: usize) -> u64 {
        self.counts[self.index(z, d, y)]
    }

    pub fn add(&mut self, z: usize, d: usize, y: usize, n: u64) {
        let i = self.index(z, d, y);
        self.counts[i] += n;
    }

    /// Total observations in instrument arm `z`.
    pub fn arm_total(&self, z: usize) -> u64 {
        (0..self.levels_d)
            .flat_map(|d| (0..2).map(move |y| (d, y)))
            .map(|(d, y)| self.count(z, d, y))
            .sum()
    }

    /// Total observations in the table.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Empirical `p(d, y | z)`; errors if arm `z` is empty.
    pub fn prop(&self, z: usize, d: usize, y: usize) -> Result<f64> {
        let n = self.arm_total(z);
        if n == 0 {
            return Err(Error::EmptyArm(z));
        }
        Ok(self.count(z, d, y) as f64 / n as f64)
    }

    pub(crate) fn require_binary(&self) -> Result<()> {
        if !self.is_binary() {
            return Err(Error::NotBinary {
                l: self.levels_z,
                m: self.levels_d,
            });
        }
        Ok(())
    }
}

/// Stratum key: the covariate values defining one subgroup.
pub type StratumKey = Vec<String>;

/// Contingency tables cross-classified by covariate values.
///
/// Keys are sorted, so iteration order is deterministic and independent of
/// record order. Only observed combinations appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedCounts {
    pub strata: BTreeMap<StratumKey, JointCounts>,
}

impl StratifiedCounts {
    /// Number of observed subgroups `K`.
    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }

    pub fn total(&self) -> u64 {
        self.strata.values().map(JointCounts::total).sum()
    }

    /// The single table of an unconditional model (`K = 1`, empty key).
    pub fn single(table: JointCounts) -> Self {
        let mut strata = BTreeMap::new();
        strata.insert(Vec::new(), table);
        StratifiedCounts { strata }
    }
}

/// Read unit-level records from a CSV file with a header row.
///
/// Rows are returned in file order. `z` and `d` must parse as non-negative
/// integers and `y` as a number; failures report the 1-based data row.
pub fn ingest_csv(path: &Path, schema: &ColumnMap) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let z_col = position(&schema.z)?;
    let d_col = position(&schema.d)?;
    let y_col = position(&schema.y)?;
    let v_cols = schema
        .covariates
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let data_row = i + 1;
        let field = |col: usize, name: &str| -> Result<&str> {
            row.get(col).map(str::trim).ok_or_else(|| Error::Parse {
                row: data_row,
                message: format!("missing field `{name}`"),
            })
        };
        let parse_level = |col: usize, name: &str| -> Result<usize> {
            let raw = field(col, name)?;
            raw.parse::<usize>().map_err(|_| Error::Parse {
                row: data_row,
                message: format!("`{name}` value {raw:?} is not a non-negative integer"),
            })
        };
        let y_raw = field(y_col, &schema.y)?;
        let y = y_raw.parse::<f64>().map_err(|_| Error::Parse {
            row: data_row,
            message: format!("`{}` value {y_raw:?} is not numeric", schema.y),
        })?;
        let v = v_cols
            .iter()
            .zip(&schema.covariates)
            .map(|(&col, name)| field(col, name).map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        records.push(Record {
            z: parse_level(z_col, &schema.z)?,
            d: parse_level(d_col, &schema.d)?,
            y,
            v,
        });
    }
    Ok(records)
}

/// Sample median: the middle order statistic, or the midpoint of the two
/// central order statistics when the count is even.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Replace each record's outcome with `1` if strictly above the sample
/// median, else `0`. Ties at the median go to `0`.
pub fn dichotomize_median(records: &mut [Record]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyInput("dichotomize_median needs records"));
    }
    let mut values: Vec<f64> = records.iter().map(|r| r.y).collect();
    let m = median(&mut values);
    for r in records.iter_mut() {
        r.y = if r.y > m { 1.0 } else { 0.0 };
    }
    Ok(())
}

/// Cross-classify records into strata by the covariates at positions
/// `selected` within each record's `v`, and tabulate `(z, d, y)` counts.
///
/// `selected` empty yields the unconditional model: one stratum keyed by the
/// empty tuple. All strata share the same `(L, M)`, taken from the largest
/// observed levels. Outcomes must already be binary.
pub fn tabulate(records: &[Record], selected: &[usize]) -> Result<StratifiedCounts> {
    if records.is_empty() {
        return Err(Error::EmptyInput("tabulate needs records"));
    }
    let mut levels_z = 0usize;
    let mut levels_d = 0usize;
    for (i, r) in records.iter().enumerate() {
        if r.y != 0.0 && r.y != 1.0 {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("outcome {} is not binary; dichotomize first", r.y),
            });
        }
        if let Some(&bad) = selected.iter().find(|&&s| s >= r.v.len()) {
            return Err(Error::Config(format!(
                "covariate index {bad} out of range for record with {} covariates",
                r.v.len()
            )));
        }
        levels_z = levels_z.max(r.z + 1);
        levels_d = levels_d.max(r.d + 1);
    }
    let levels_z = levels_z.max(2);
    let levels_d = levels_d.max(2);

    let mut strata: BTreeMap<StratumKey, JointCounts> = BTreeMap::new();
    for r in records {
        let key: StratumKey = selected.iter().map(|&s| r.v[s].clone()).collect();
        let table = match strata.entry(key) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(JointCounts::zeros(levels_z, levels_d)?)
            }
        };
        table.add(r.z, r.d, r.y as usize, 1);
    }
    Ok(StratifiedCounts { strata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn rec(z: usize, d: usize, y: f64) -> Record {
        Record {
            z,
            d,
            y,
            v: Vec::new(),
        }
    }

    fn rec_v(z: usize, d: usize, y: f64, v: &[&str]) -> Record {
        Record {
            z,
            d,
            y,
            v: v.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_reads_rows_in_order() {
        let f = write_csv("z,d,y\n1,0,3.5\n0,1,2.0\n1,1,0.0\n");
        let schema = ColumnMap::new("z", "d", "y", &[]);
        let records = ingest_csv(f.path(), &schema).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0], rec(1, 0, 3.5));
        assert_eq!(records[1], rec(0, 1, 2.0));
        assert_eq!(records[2], rec(1, 1, 0.0));
    }

    #[test]
    fn ingest_header_only_gives_empty_list() {
        let f = write_csv("z,d,y\n");
        let schema = ColumnMap::new("z", "d", "y", &[]);
        assert!(ingest_csv(f.path(), &schema).unwrap().is_empty());
    }

    #[test]
    fn ingest_maps_renamed_outcome_column() {
        let f = write_csv("near,school,wage\n1,0,12.7\n");
        let schema = ColumnMap::new("near", "school", "wage", &[]);
        let records = ingest_csv(f.path(), &schema).unwrap();
        assert_eq!(records[0].y, 12.7);
    }

    #[test]
    fn ingest_rejects_missing_column() {
        let f = write_csv("z,d\n1,0\n");
        let schema = ColumnMap::new("z", "d", "y", &[]);
        match ingest_csv(f.path(), &schema) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "y"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_row_number_on_bad_value() {
        let f = write_csv("z,d,y\n1,0,1.0\nx,0,1.0\n");
        let schema = ColumnMap::new("z", "d", "y", &[]);
        match ingest_csv(f.path(), &schema) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn median_split_strictly_above() {
        let mut records = vec![rec(0, 0, 1.0), rec(0, 0, 2.0), rec(0, 0, 3.0)];
        dichotomize_median(&mut records).unwrap();
        let ys: Vec<f64> = records.iter().map(|r| r.y).collect();
        assert_eq!(ys, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn median_all_equal_goes_to_zero() {
        let mut records = vec![rec(0, 0, 5.0), rec(0, 0, 5.0), rec(0, 0, 5.0)];
        dichotomize_median(&mut records).unwrap();
        assert!(records.iter().all(|r| r.y == 0.0));
    }

    #[test]
    fn median_even_count_uses_midpoint() {
        let mut records = vec![
            rec(0, 0, 1.0),
            rec(0, 0, 2.0),
            rec(0, 0, 3.0),
            rec(0, 0, 4.0),
        ];
        dichotomize_median(&mut records).unwrap();
        let ys: Vec<f64> = records.iter().map(|r| r.y).collect();
        assert_eq!(ys, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn median_empty_is_error() {
        let mut records: Vec<Record> = Vec::new();
        assert!(dichotomize_median(&mut records).is_err());
    }

    #[test]
    fn tabulate_unconditional_collapses_to_one_stratum() {
        let records: Vec<Record> = (0..10).map(|i| rec(i % 2, (i / 2) % 2, 1.0)).collect();
        let s = tabulate(&records, &[]).unwrap();
        assert_eq!(s.stratum_count(), 1);
        assert_eq!(s.total(), 10);
    }

    #[test]
    fn tabulate_one_factor_stratification() {
        let records = vec![
            rec_v(0, 0, 0.0, &["a"]),
            rec_v(1, 0, 1.0, &["b"]),
            rec_v(0, 1, 1.0, &["a"]),
        ];
        let s = tabulate(&records, &[0]).unwrap();
        assert_eq!(s.stratum_count(), 2);
        assert_eq!(s.strata[&vec!["a".to_string()]].total(), 2);
    }

    #[test]
    fn tabulate_rejects_non_binary_outcome() {
        let records = vec![rec(0, 0, 2.0)];
        assert!(tabulate(&records, &[]).is_err());
    }

    #[test]
    fn tabulate_is_permutation_invariant() {
        let mut records = vec![
            rec_v(0, 0, 0.0, &["a", "x"]),
            rec_v(1, 1, 1.0, &["b", "x"]),
            rec_v(1, 0, 1.0, &["a", "y"]),
            rec_v(0, 1, 0.0, &["b", "y"]),
            rec_v(1, 1, 0.0, &["a", "x"]),
        ];
        let forward = tabulate(&records, &[0, 1]).unwrap();
        records.reverse();
        let backward = tabulate(&records, &[0, 1]).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn coarser_strata_are_sums_of_finer_ones() {
        let mut records = Vec::new();
        for i in 0..40 {
            records.push(rec_v(
                i % 2,
                (i / 2) % 2,
                f64::from(u32::from(i % 3 == 0)),
                &[["a", "b"][i % 2], ["x", "y", "w"][i % 3]],
            ));
        }
        let fine = tabulate(&records, &[0, 1]).unwrap();
        let coarse = tabulate(&records, &[0]).unwrap();
        for (key, table) in &coarse.strata {
            let sum: u64 = fine
                .strata
                .iter()
                .filter(|(k, _)| k[0] == key[0])
                .map(|(_, t)| t.total())
                .sum();
            assert_eq!(table.total(), sum);
        }
    }

    #[test]
    fn counts_total_matches_records() {
        let records: Vec<Record> =
            (0..25).map(|i| rec_v(i % 2, i % 2, 0.0, &[["u", "v"][i % 2]])).collect();
        let s = tabulate(&records, &[0]).unwrap();
        assert_eq!(s.total(), 25);
    }
}
