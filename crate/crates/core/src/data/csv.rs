//! Plain CSV export of datasets: header `label,f0,…,f{D−1}`, one row per
//! sample, floats in shortest round-trip form.

use std::io::{BufRead, Write};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub fn write_csv<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..ds.dim()).map(|j| format!("f{j}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (row, &y) in ds.features().row_iter().zip(ds.labels()) {
        write!(out, "{y}")?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a CSV produced by [`write_csv`]. Offsets in errors are line numbers.
pub fn read_csv<R: BufRead>(input: R, num_classes: usize) -> Result<Dataset> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Format {
        offset: 0,
        detail: "empty CSV".into(),
    })?;
    let header = header.map_err(|e| Error::Format {
        offset: 1,
        detail: e.to_string(),
    })?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"label") {
        return Err(Error::Format {
            offset: 1,
            detail: "first column must be `label`".into(),
        });
    }
    let dim = cols.len() - 1;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (i, line) in lines {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::Format {
            offset: line_no,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Format {
                offset: line_no,
                detail: format!("expected {} fields, got {}", dim + 1, fields.len()),
            });
        }
        let bad = |f: &str| Error::Format {
            offset: line_no,
            detail: format!("unparseable field `{f}`"),
        };
        labels.push(fields[0].parse::<usize>().map_err(|_| bad(fields[0]))?);
        for f in &fields[1..] {
            data.push(f.parse::<f64>().map_err(|_| bad(f))?);
        }
    }
    Dataset::new(Matrix::new(labels.len(), dim, data)?, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let f = Matrix::from_rows(&[[0.1, -2.5e-17], [1.0 / 3.0, 7.0]]).unwrap();
        let ds = Dataset::new(f, vec![1, 0], 2).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,f0,f1\n1,0.1,"));
        let back = read_csv(buf.as_slice(), 2).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn ragged_row_is_rejected() {
        let text = "label,f0,f1\n0,1,2\n1,3\n";
        match read_csv(text.as_bytes(), 2) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
    }
}
