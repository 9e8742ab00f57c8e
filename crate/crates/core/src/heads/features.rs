//! Dense feature matrices and their export formats.

use std::io::{Read, Write};

use crate::codec::{put_f64s, put_u32, put_u64, ByteReader};
use crate::error::{Error, Result};

pub const FEATURES_MAGIC: &[u8; 4] = b"FMAT";
pub const FEATURES_VERSION: u32 = 1;

/// One row of features per image with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl FeatureMatrix {
    pub fn new(cols: usize, values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let rows = labels.len();
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for {rows} rows of {cols} features",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::param(format!("non-finite feature at row {}", i / cols.max(1))));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            values,
            labels,
        })
    }

    pub fn from_rows(cols: usize, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(format!("row of {} features, expected {cols}", r.len())));
        }
        Self::new(cols, rows.concat(), labels)
    }

    pub fn empty(cols: usize) -> Self {
        FeatureMatrix {
            rows: 0,
            cols,
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Rows whose label is in `classes`.
    pub fn filter_classes(&self, classes: &[u8]) -> Self {
        let idx: Vec<usize> = (0..self.rows).filter(|&i| classes.contains(&self.labels[i])).collect();
        self.select(&idx)
    }

    /// Multiplies every value by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for x in &mut self.values {
            *x *= factor;
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Binary layout (little-endian): `"FMAT"`, version `u32`, rows `u64`,
    /// cols `u64`, values as row-major `f64`, then one `u32` label per row.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.values.len() + 4 * self.rows);
        out.extend_from_slice(FEATURES_MAGIC);
        put_u32(&mut out, FEATURES_VERSION);
        put_u64(&mut out, self.rows as u64);
        put_u64(&mut out, self.cols as u64);
        put_f64s(&mut out, &self.values);
        for &l in &self.labels {
            put_u32(&mut out, u32::from(l));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "feature matrix");
        r.expect(FEATURES_MAGIC)?;
        let version = r.u32()?;
        if version != FEATURES_VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let rows = usize::try_from(r.u64()?).map_err(|_| r.error("row count overflow"))?;
        let cols = usize::try_from(r.u64()?).map_err(|_| r.error("column count overflow"))?;
        let n = rows.checked_mul(cols).ok_or_else(|| r.error("size overflow"))?;
        let values = r.f64s(n)?;
        let mut labels = Vec::with_capacity(rows);
        for _ in 0..rows {
            let l = r.u32()?;
            labels.push(u8::try_from(l).map_err(|_| r.error(format!("label {l} out of range")))?);
        }
        r.finish()?;
        Self::new(cols, values, labels)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Comma-separated text, one line per image, label in the last column.
    /// Values use the shortest representation that parses back exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let mut record = Vec::with_capacity(self.cols + 1);
        for i in 0..self.rows {
            record.clear();
            record.extend(self.row(i).iter().map(|x| x.to_string()));
            record.push(self.labels[i].to_string());
            w.write_record(&record).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut cols = None;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(csv_error)?;
            let n = record.len();
            if n == 0 || *cols.get_or_insert(n - 1) != n - 1 {
                return Err(Error::parse("feature csv", format!("line {}: ragged row", line + 1)));
            }
            for field in record.iter().take(n - 1) {
                values.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::parse("feature csv", format!("line {}: {e}", line + 1))
                })?);
            }
            labels.push(record[n - 1].trim().parse::<u8>().map_err(|e| {
                Error::parse("feature csv", format!("line {}: label: {e}", line + 1))
            })?);
        }
        Self::new(cols.unwrap_or(0), values, labels)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::parse("feature csv", e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        FeatureMatrix::new(3, vec![0.1, -2.5, 1e-300, 3.0, f64::MAX, 0.0], vec![7, 2]).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let m = sample();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"FMAT");
        let back = FeatureMatrix::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn csv_has_one_line_per_row_and_round_trips() {
        let m = sample();
        let mut text = Vec::new();
        m.write_csv(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().ends_with(",7"));
        assert_eq!(FeatureMatrix::read_csv(text.as_bytes()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(FeatureMatrix::new(2, vec![1.0; 3], vec![0, 1]).is_err());
        assert!(FeatureMatrix::new(1, vec![f64::NAN], vec![0]).is_err());
        let mut bytes = sample().to_bytes();
        bytes.push(0);
        assert!(FeatureMatrix::from_bytes(&bytes).is_err());
        assert!(FeatureMatrix::read_csv("1,2,3\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn select_and_filter() {
        let m = sample();
        assert_eq!(m.select(&[1, 1]).labels(), &[2, 2]);
        assert_eq!(m.filter_classes(&[7]).row(0), &[0.1, -2.5, 1e-300]);
        assert_eq!(FeatureMatrix::empty(4).rows(), 0);
    }
}
