//! Case-control biomarker data and its CSV file format.
//!
//! Files carry a header row; one column (named on the command line) holds
//! the 0/1 disease label, every other column is a numeric marker. Missing
//! values are written as the literal token `NA`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TdaError};

/// N x J biomarker matrix with binary disease labels and a missingness mask.
#[derive(Debug, Clone)]
pub struct CaseControlData {
    values: Vec<f64>,
    observed: Vec<bool>,
    disease: Vec<u8>,
    marker_names: Vec<String>,
    n: usize,
    j: usize,
}

impl CaseControlData {
    /// Builds and validates a dataset. `values` and `observed` are row-major
    /// `n x j`; unobserved cells may hold any value.
    pub fn from_parts(
        values: Vec<f64>,
        observed: Vec<bool>,
        disease: Vec<u8>,
        marker_names: Vec<String>,
    ) -> Result<Self> {
        let j = marker_names.len();
        let n = disease.len();
        if j == 0 {
            return Err(TdaError::Data("no marker columns".into()));
        }
        if values.len() != n * j || observed.len() != n * j {
            return Err(TdaError::Data("matrix shape mismatch".into()));
        }
        if disease.iter().any(|&d| d > 1) {
            return Err(TdaError::Data("disease labels must be 0 or 1".into()));
        }
        let n1 = disease.iter().filter(|&&d| d == 1).count();
        if n1 == 0 || n1 == n {
            return Err(TdaError::Data(
                "need at least one diseased and one nondiseased subject".into(),
            ));
        }
        for i in 0..n {
            let row = &observed[i * j..(i + 1) * j];
            if row.iter().all(|&o| !o) {
                return Err(TdaError::Data(format!("row {i} has no observed marker")));
            }
            for (k, (&o, &v)) in row.iter().zip(&values[i * j..(i + 1) * j]).enumerate() {
                if o && !v.is_finite() {
                    return Err(TdaError::Data(format!(
                        "non-finite value at row {i}, marker {k}"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            observed,
            disease,
            marker_names,
            n,
            j,
        })
    }

    /// Fully observed data from a row-major matrix.
    pub fn complete(values: Vec<f64>, disease: Vec<u8>, marker_names: Vec<String>) -> Result<Self> {
        let len = values.len();
        Self::from_parts(values, vec![true; len], disease, marker_names)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_markers(&self) -> usize {
        self.j
    }

    pub fn marker_names(&self) -> &[String] {
        &self.marker_names
    }

    pub fn disease(&self, i: usize) -> u8 {
        self.disease[i]
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.j + k]
    }

    pub fn is_observed(&self, i: usize, k: usize) -> bool {
        self.observed[i * self.j + k]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[i * self.j..(i + 1) * self.j]
    }

    pub fn row_observed(&self, i: usize) -> &[bool] {
        &self.observed[i * self.j..(i + 1) * self.j]
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.disease.iter().filter(|&&d| d == 1).count();
        (self.n - n1, n1)
    }

    pub fn rows_of_class(&self, d: u8) -> Vec<usize> {
        (0..self.n).filter(|&i| self.disease[i] == d).collect()
    }

    /// Observed values of one marker, optionally restricted to a class.
    pub fn observed_column(&self, k: usize, class: Option<u8>) -> Vec<f64> {
        (0..self.n)
            .filter(|&i| class.is_none_or(|d| self.disease[i] == d))
            .filter(|&i| self.is_observed(i, k))
            .map(|i| self.value(i, k))
            .collect()
    }

    /// New dataset from a subset of row indices (used by holdout splits).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.j);
        let mut observed = Vec::with_capacity(rows.len() * self.j);
        let mut disease = Vec::with_capacity(rows.len());
        for &i in rows {
            values.extend_from_slice(self.row_values(i));
            observed.extend_from_slice(self.row_observed(i));
            disease.push(self.disease[i]);
        }
        Self::from_parts(values, observed, disease, self.marker_names.clone())
    }

    /// Reads the CSV format described in the module docs.
    pub fn from_csv_reader<R: Read>(reader: R, disease_col: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let d_idx = headers
            .iter()
            .position(|h| h == disease_col)
            .ok_or_else(|| TdaError::Data(format!("no column named '{disease_col}'")))?;
        let marker_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != d_idx)
            .map(|(_, h)| h.to_string())
            .collect();
        if marker_names.is_empty() {
            return Err(TdaError::Data("no marker columns besides the label".into()));
        }
        let mut values = Vec::new();
        let mut observed = Vec::new();
        let mut disease = Vec::new();
        for (row_no, record) in rdr.records().enumerate() {
            let record = record?;
            for (i, cell) in record.iter().enumerate() {
                if i == d_idx {
                    match cell.trim() {
                        "0" => disease.push(0),
                        "1" => disease.push(1),
                        other => {
                            return Err(TdaError::Data(format!(
                                "row {row_no}: disease value '{other}' not in {{0,1}}"
                            )))
                        }
                    }
                } else if cell.trim() == "NA" {
                    values.push(f64::NAN);
                    observed.push(false);
                } else {
                    let v: f64 = cell.trim().parse().map_err(|_| {
                        TdaError::Data(format!(
                            "row {row_no}: cannot parse marker value '{cell}'"
                        ))
                    })?;
                    values.push(v);
                    observed.push(true);
                }
            }
        }
        Self::from_parts(values, observed, disease, marker_names)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, disease_col: &str) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, disease_col)
    }

    /// Writes the dataset back out, disease column first.
    pub fn to_csv_writer<W: Write>(&self, writer: W, disease_col: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![disease_col.to_string()];
        header.extend(self.marker_names.iter().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.n {
            let mut rec = vec![self.disease[i].to_string()];
            for k in 0..self.j {
                if self.is_observed(i, k) {
                    rec.push(format!("{}", self.value(i, k)));
                } else {
                    rec.push("NA".to_string());
                }
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_path<P: AsRef<Path>>(&self, path: P, disease_col: &str) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(file, disease_col)
    }
}

/// Reads unlabeled scoring data: marker columns are matched to `marker_names`
/// by header name; extra columns are ignored.
pub fn read_unlabeled_csv<R: Read>(
    reader: R,
    marker_names: &[String],
) -> Result<Vec<(Vec<f64>, Vec<bool>)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col_of = Vec::with_capacity(marker_names.len());
    for name in marker_names {
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TdaError::Data(format!("scoring file lacks marker column '{name}'")))?;
        col_of.push(idx);
    }
    let mut rows = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let mut vals = Vec::with_capacity(col_of.len());
        let mut mask = Vec::with_capacity(col_of.len());
        for &c in &col_of {
            let cell = record
                .get(c)
                .ok_or_else(|| TdaError::Data(format!("row {row_no}: short record")))?;
            if cell.trim() == "NA" {
                vals.push(f64::NAN);
                mask.push(false);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    TdaError::Data(format!("row {row_no}: cannot parse '{cell}'"))
                })?;
                vals.push(v);
                mask.push(true);
            }
        }
        rows.push((vals, mask));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "y1,disease,y2\n0.5,0,1.2\nNA,1,0.3\n2.0,1,NA\n";

    #[test]
    fn parse_with_na_and_label_column() {
        let data = CaseControlData::from_csv_reader(SAMPLE.as_bytes(), "disease").unwrap();
        assert_eq!(data.n_rows(), 3);
        assert_eq!(data.n_markers(), 2);
        assert_eq!(data.marker_names(), &["y1".to_string(), "y2".to_string()]);
        assert_eq!(data.disease(0), 0);
        assert!(!data.is_observed(1, 0));
        assert!(data.is_observed(1, 1));
        assert_eq!(data.value(2, 0), 2.0);
        assert_eq!(data.class_counts(), (1, 2));
    }

    #[test]
    fn rejects_bad_labels_and_cells() {
        let bad_label = "y1,disease\n1.0,2\n0.5,0\n";
        assert!(CaseControlData::from_csv_reader(bad_label.as_bytes(), "disease").is_err());
        let bad_cell = "y1,disease\nfoo,0\n0.5,1\n";
        assert!(CaseControlData::from_csv_reader(bad_cell.as_bytes(), "disease").is_err());
        let all_missing = "y1,disease\nNA,0\n0.5,1\n";
        assert!(CaseControlData::from_csv_reader(all_missing.as_bytes(), "disease").is_err());
    }

    #[test]
    fn round_trip_preserves_values() {
        let data = CaseControlData::from_csv_reader(SAMPLE.as_bytes(), "disease").unwrap();
        let mut buf = Vec::new();
        data.to_csv_writer(&mut buf, "disease").unwrap();
        let back = CaseControlData::from_csv_reader(buf.as_slice(), "disease").unwrap();
        assert_eq!(back.n_rows(), data.n_rows());
        for i in 0..data.n_rows() {
            for k in 0..data.n_markers() {
                assert_eq!(back.is_observed(i, k), data.is_observed(i, k));
                if data.is_observed(i, k) {
                    assert_eq!(back.value(i, k), data.value(i, k));
                }
            }
        }
    }

    #[test]
    fn unlabeled_reader_matches_by_name() {
        let rows = read_unlabeled_csv(SAMPLE.as_bytes(), &["y2".into(), "y1".into()]).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].0, vec![1.2, 0.5]);
        assert_eq!(rows[2].1, vec![false, true]);
    }
}
