//! SVM-light / LIBSVM sparse text format: one sample per line,
//! `<label> <index>:<value> ...`, whitespace-separated, 1-based strictly
//! ascending indices, ASCII decimal floats.

use std::io::BufRead;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SqpError};

/// Parse a LIBSVM-format stream into a dense matrix and a +/-1 label vector.
///
/// Absent indices are zeros; the feature count is the largest index present.
/// Raw labels already in {-1, +1} are kept; otherwise exactly two distinct
/// raw labels are required and the smaller one maps to -1.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut n_features = 0usize;

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().ok_or_else(|| SqpError::Parse {
            line: line_no,
            message: "missing label".into(),
        })?;
        let label: f64 = label_tok.parse().map_err(|_| SqpError::Parse {
            line: line_no,
            message: format!("malformed label {label_tok:?}"),
        })?;

        let mut row = Vec::new();
        let mut last_index = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| SqpError::Parse {
                line: line_no,
                message: format!("expected index:value, got {tok:?}"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| SqpError::Parse {
                line: line_no,
                message: format!("malformed index {idx_str:?}"),
            })?;
            let val: f64 = val_str.parse().map_err(|_| SqpError::Parse {
                line: line_no,
                message: format!("malformed value {val_str:?}"),
            })?;
            if idx == 0 {
                return Err(SqpError::Parse {
                    line: line_no,
                    message: "indices are 1-based".into(),
                });
            }
            if idx <= last_index {
                return Err(SqpError::Parse {
                    line: line_no,
                    message: format!(
                        "indices must be strictly ascending: {idx} after {last_index}"
                    ),
                });
            }
            last_index = idx;
            n_features = n_features.max(idx);
            row.push((idx - 1, val));
        }
        raw_labels.push(label);
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(SqpError::Parse {
            line: 0,
            message: "empty file".into(),
        });
    }

    let labels = remap_labels(&raw_labels)?;
    let mut x = DMatrix::zeros(rows.len(), n_features);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            x[(i, j)] = v;
        }
    }
    Ok((x, labels))
}

fn remap_labels(raw: &[f64]) -> Result<DVector<f64>> {
    if raw.iter().all(|&l| l == 1.0 || l == -1.0) {
        return Ok(DVector::from_vec(raw.to_vec()));
    }
    let mut distinct: Vec<f64> = Vec::new();
    for &l in raw {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    if distinct.len() != 2 {
        return Err(SqpError::Parse {
            line: 0,
            message: format!(
                "expected two distinct label values for the smaller-to-minus-one remap, found {}",
                distinct.len()
            ),
        });
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let low = distinct[0];
    Ok(DVector::from_iterator(
        raw.len(),
        raw.iter().map(|&l| if l == low { -1.0 } else { 1.0 }),
    ))
}

/// Serialize a dense matrix and labels back to LIBSVM text. Zeros are omitted.
pub fn write_libsvm(x: &DMatrix<f64>, labels: &DVector<f64>) -> String {
    let mut out = String::new();
    for i in 0..x.nrows() {
        out.push_str(&format!("{}", labels[i]));
        for j in 0..x.ncols() {
            let v = x[(i, j)];
            if v != 0.0 {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_the_documented_example() {
        let text = "+1 1:0.5 3:2.0\n-1 2:1.0\n";
        let (x, labels) = parse_libsvm(Cursor::new(text)).unwrap();
        assert_eq!(x.nrows(), 2);
        assert_eq!(x.ncols(), 3);
        assert_eq!(x[(0, 0)], 0.5);
        assert_eq!(x[(0, 1)], 0.0);
        assert_eq!(x[(0, 2)], 2.0);
        assert_eq!(x[(1, 1)], 1.0);
        assert_eq!(labels, DVector::from_vec(vec![1.0, -1.0]));
    }

    #[test]
    fn label_only_line_gives_zero_row() {
        let (x, labels) = parse_libsvm(Cursor::new("+1 1:1.0\n+1\n")).unwrap();
        assert_eq!(x.nrows(), 2);
        assert_eq!(x.row(1).iter().copied().sum::<f64>(), 0.0);
        assert_eq!(labels[1], 1.0);
    }

    #[test]
    fn malformed_label_names_line() {
        let err = parse_libsvm(Cursor::new("abc 1:1")).unwrap_err();
        match err {
            SqpError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_ascending_indices_rejected() {
        assert!(parse_libsvm(Cursor::new("+1 2:1.0 2:2.0\n")).is_err());
        assert!(parse_libsvm(Cursor::new("+1 3:1.0 2:2.0\n")).is_err());
        assert!(parse_libsvm(Cursor::new("+1 0:1.0\n")).is_err());
    }

    #[test]
    fn empty_file_rejected() {
        assert!(parse_libsvm(Cursor::new("")).is_err());
    }

    #[test]
    fn zero_one_labels_remap_smaller_to_minus_one() {
        let (_, labels) = parse_libsvm(Cursor::new("0 1:1.0\n1 1:2.0\n")).unwrap();
        assert_eq!(labels, DVector::from_vec(vec![-1.0, 1.0]));
        let (_, labels) = parse_libsvm(Cursor::new("2 1:1.0\n1 1:2.0\n")).unwrap();
        assert_eq!(labels, DVector::from_vec(vec![1.0, -1.0]));
    }

    #[test]
    fn serialize_then_parse_is_idempotent() {
        let text = "1 1:0.5 3:-2.25\n-1 2:1e-3\n1\n";
        let (x, labels) = parse_libsvm(Cursor::new(text)).unwrap();
        let round = write_libsvm(&x, &labels);
        let (x2, labels2) = parse_libsvm(Cursor::new(round.as_str())).unwrap();
        assert_eq!(x, x2);
        assert_eq!(labels, labels2);
    }
}
