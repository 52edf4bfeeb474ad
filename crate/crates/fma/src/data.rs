//! CSV ingestion and train/test splitting.

use std::path::Path;

use fma_core::rng::{stream, Purpose};
use fma_core::Matrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Logistic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Logistic => "logistic",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}, column {column:?}: cannot parse {value:?} as a number")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("response column {0:?} not found in header")]
    MissingColumn(String),
    #[error("dataset has no rows")]
    Empty,
    #[error("logistic response must be 0 or 1, found {value} at line {line}")]
    NonBinary { line: u64, value: f64 },
    #[error("training size {n_train} must be between 1 and {}", .n - 1)]
    SplitSize { n_train: usize, n: usize },
}

/// Response vector and design matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub response: Vec<f64>,
    pub design: Matrix,
    /// Names of the design columns, starting with `(intercept)`.
    pub column_names: Vec<String>,
    pub response_name: String,
    pub family: Family,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    /// Number of predictors excluding the intercept.
    pub fn n_predictors(&self) -> usize {
        self.design.ncols() - 1
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            response: rows.iter().map(|&i| self.response[i]).collect(),
            design: self.design.select_rows(rows),
            column_names: self.column_names.clone(),
            response_name: self.response_name.clone(),
            family: self.family,
        }
    }

    /// Writes the dataset back as CSV (predictors then response, no intercept).
    pub fn to_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.column_names[1..].iter().map(String::as_str).collect();
        header.push(&self.response_name);
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.design.row(i)[1..].iter().map(|v| v.to_string()).collect();
            rec.push(self.response[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const INTERCEPT: &str = "(intercept)";

/// Reads a headed numeric CSV. Every column other than `response` becomes a
/// predictor, in file order, after a prepended intercept column.
pub fn load_csv(path: &Path, response: &str, family: Family) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, response, family)
}

pub fn read_csv<R: std::io::Read>(input: R, response: &str, family: Family) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let csv_err = |e: csv::Error| DataError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let resp_idx = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| DataError::MissingColumn(response.to_owned()))?;

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(header.len());
        row.push(1.0);
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| DataError::Parse {
                line,
                column: header[j].clone(),
                value: cell.to_owned(),
            })?;
            if j == resp_idx {
                if family == Family::Logistic && v != 0.0 && v != 1.0 {
                    return Err(DataError::NonBinary { line, value: v });
                }
                y.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let mut column_names = vec![INTERCEPT.to_owned()];
    column_names.extend(header.iter().enumerate().filter(|(j, _)| *j != resp_idx).map(|(_, h)| h.clone()));
    let design = Matrix::from_rows(&rows).map_err(|e| DataError::Csv {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(Dataset {
        response: y,
        design,
        column_names,
        response_name: response.to_owned(),
        family,
    })
}

/// Row indices of a uniform random split, each part sorted.
pub fn split_indices(n: usize, n_train: usize, seed: u64, index: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if n_train == 0 || n_train >= n {
        return Err(DataError::SplitSize { n_train, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, Purpose::Split, index));
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Train/test split, deterministic in `seed`.
pub fn split(dataset: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = split_indices(dataset.len(), n_train, seed, 0)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "a,b,y\n1,2,0.5\n3,4,1.5\n5,6,2.5\n";

    #[test]
    fn toy_csv_gets_intercept() {
        let d = read_csv(TOY.as_bytes(), "y", Family::Linear).unwrap();
        assert_eq!(d.design.nrows(), 3);
        assert_eq!(d.design.ncols(), 3);
        assert_eq!(d.design.column(0), vec![1.0; 3]);
        assert_eq!(d.design.row(1), &[1.0, 3.0, 4.0]);
        assert_eq!(d.response, vec![0.5, 1.5, 2.5]);
        assert_eq!(d.column_names, vec![INTERCEPT, "a", "b"]);
    }

    #[test]
    fn response_may_sit_anywhere() {
        let d = read_csv("y,a\n1,2\n0,3\n".as_bytes(), "y", Family::Logistic).unwrap();
        assert_eq!(d.response, vec![1.0, 0.0]);
        assert_eq!(d.design.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn errors_are_named() {
        let e = read_csv(TOY.as_bytes(), "lpsa", Family::Linear).unwrap_err();
        assert!(matches!(e, DataError::MissingColumn(ref c) if c == "lpsa"));
        let e = read_csv("a,y\n1,2\nx,3\n".as_bytes(), "y", Family::Linear).unwrap_err();
        match e {
            DataError::Parse { line, column, value } => {
                assert_eq!((line, column.as_str(), value.as_str()), (3, "a", "x"));
            }
            other => panic!("{other:?}"),
        }
        let e = read_csv("a,y\n1,2\n".as_bytes(), "y", Family::Logistic).unwrap_err();
        assert!(matches!(e, DataError::NonBinary { .. }));
        assert!(matches!(read_csv("a,y\n".as_bytes(), "y", Family::Linear), Err(DataError::Empty)));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (tr, te) = split_indices(97, 67, 5, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (67, 30));
        assert_eq!(split_indices(97, 67, 5, 0).unwrap(), (tr.clone(), te.clone()));
        assert_ne!(split_indices(97, 67, 6, 0).unwrap().0, tr);
        let mut all: Vec<usize> = tr.into_iter().chain(te).collect();
        all.sort_unstable();
        assert_eq!(all, (0..97).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 9, 1, 0).unwrap().1.len(), 1);
        assert!(split_indices(10, 10, 1, 0).is_err());
        assert!(split_indices(10, 0, 1, 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let src = "a,b,y\n0.1,-2.5e-3,0.30000000000000004\n1e10,7,-0.0\n";
        let d = read_csv(src.as_bytes(), "y", Family::Linear).unwrap();
        let mut buf = Vec::new();
        d.to_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "y", Family::Linear).unwrap();
        assert_eq!(d, back);
    }
}
