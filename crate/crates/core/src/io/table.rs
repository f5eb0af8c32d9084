use std::path::Path;

use crate::error::{Error, Result};
use crate::selection::KSelectionReport;
use crate::tensor::DenseMatrix;

/// Seventeen significant digits: enough for every f64 to parse back exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("CSV: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Header row `c0,c1,...` followed by one line per matrix row.
pub fn factors_to_csv(m: &DenseMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..m.cols()).map(|j| format!("c{j}"))).map_err(csv_err)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| fmt_f64(*v))).map_err(csv_err)?;
    }
    finish(w)
}

pub fn parse_factors(text: &str) -> Result<DenseMatrix> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cols = r.headers().map_err(csv_err)?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for field in rec.iter() {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("CSV row {rows}: {field:?}: {e}")))?,
            );
        }
        rows += 1;
    }
    DenseMatrix::new(rows, cols, data)
}

pub fn write_factors(path: &Path, m: &DenseMatrix) -> Result<()> {
    super::write_atomic(path, factors_to_csv(m)?.as_bytes())
}

pub fn read_factors(path: &Path) -> Result<DenseMatrix> {
    let bytes = super::read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    parse_factors(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Per-k silhouette and error table of a selection sweep.
pub fn selection_csv(report: &KSelectionReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "k",
        "min_silhouette",
        "mean_silhouette",
        "mean_relative_error",
        "failed_replicas",
        "valid",
        "selected",
    ])
    .map_err(csv_err)?;
    for r in &report.records {
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.min_silhouette),
            fmt_f64(r.mean_silhouette),
            fmt_f64(r.mean_relative_error),
            r.failed_replicas.to_string(),
            r.valid.to_string(),
            (report.selected_k == Some(r.k)).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_digits() {
        let m = DenseMatrix::from_rows(&[vec![0.1, 1.0 / 3.0]]).unwrap();
        let text = factors_to_csv(&m).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("c0,c1"));
        let row = lines.next().unwrap();
        let mantissa = row.split(',').next().unwrap().split('e').next().unwrap();
        assert_eq!(mantissa.replace(['.', '-'], "").len(), 17);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(parse_factors("c0,c1\n1,2\n3\n"), Err(Error::Format(_))));
        assert!(matches!(parse_factors("c0\nabc\n"), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        let m = DenseMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) / (j as f64 + 7.0));
        write_factors(&p, &m).unwrap();
        assert_eq!(read_factors(&p).unwrap(), m);
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            values in proptest::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 36),
        ) {
            let m = DenseMatrix::from_fn(rows, cols, |i, j| values[i * cols + j]);
            let back = parse_factors(&factors_to_csv(&m).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in back.data().iter().zip(m.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
