use std::collections::HashSet;

use crate::correlate::RankedTerm;
use crate::error::{Error, Result};
use crate::series::RegionSeries;

/// Named columns of term intensities over named rows (regions).
///
/// The intercept column is implicit. Data are stored column-major since
/// every solver here walks one column at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    rows: Vec<String>,
    columns: Vec<String>,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: Vec<String>, columns: Vec<String>, column_data: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("design matrix needs at least one row"));
        }
        if column_data.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} column names for {} data columns",
                columns.len(),
                column_data.len()
            )));
        }
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.as_str()) {
                return Err(Error::DuplicateRegion(r.clone()));
            }
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::DuplicateTerm(c.clone()));
            }
        }
        let mut data = Vec::with_capacity(rows.len() * columns.len());
        for (name, col) in columns.iter().zip(&column_data) {
            if col.len() != rows.len() {
                return Err(Error::Dimension(format!(
                    "column `{name}` has {} entries for {} rows",
                    col.len(),
                    rows.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    name: name.clone(),
                    region: rows[i].clone(),
                });
            }
            data.extend_from_slice(col);
        }
        Ok(Self {
            rows,
            columns,
            data,
        })
    }

    /// One column per ranked term, taken from its z-scored series; rows are
    /// the sorted region codes shared by all terms.
    pub fn from_ranked(terms: &[RankedTerm]) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::Empty("no terms for design matrix"));
        };
        let rows: Vec<String> = first.z_series.values().keys().cloned().collect();
        let mut cols = Vec::with_capacity(terms.len());
        for t in terms {
            cols.push(t.z_series.aligned(&rows)?);
        }
        Self::new(rows, terms.iter().map(|t| t.term.clone()).collect(), cols)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.rows.len();
        &self.data[j * n..(j + 1) * n]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|j| self.column(j))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows.len() + row]
    }

    pub fn select_rows(&self, keep: &[usize]) -> Self {
        let n = self.rows.len();
        let mut data = Vec::with_capacity(keep.len() * self.columns.len());
        for j in 0..self.columns.len() {
            data.extend(keep.iter().map(|&i| self.data[j * n + i]));
        }
        Self {
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            columns: self.columns.clone(),
            data,
        }
    }

    pub fn select_columns(&self, names: &[&str]) -> Result<Self> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let col = self
                .column_by_name(name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
            cols.push(col.to_vec());
        }
        Self::new(
            self.rows.clone(),
            names.iter().map(|s| s.to_string()).collect(),
            cols,
        )
    }
}

/// A design matrix paired with the response aligned to its rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub variable: String,
    pub x: DesignMatrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DesignMatrix, y: &RegionSeries) -> Result<Self> {
        let aligned = y.aligned(x.rows())?;
        Ok(Self {
            variable: y.name().to_string(),
            x,
            y: aligned,
        })
    }

    /// `y` is taken in the row order of `x`.
    pub fn from_parts(variable: impl Into<String>, x: DesignMatrix, y: Vec<f64>) -> Result<Self> {
        if y.len() != x.n_rows() {
            return Err(Error::LengthMismatch {
                left: x.n_rows(),
                right: y.len(),
            });
        }
        let variable = variable.into();
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                name: variable,
                region: x.rows()[i].clone(),
            });
        }
        Ok(Self { variable, x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn select_rows(&self, keep: &[usize]) -> Self {
        Self {
            variable: self.variable.clone(),
            x: self.x.select_rows(keep),
            y: keep.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn without_row(&self, i: usize) -> Self {
        let keep: Vec<usize> = (0..self.n()).filter(|&k| k != i).collect();
        self.select_rows(&keep)
    }

    pub fn select_columns(&self, names: &[&str]) -> Result<Self> {
        Ok(Self {
            variable: self.variable.clone(),
            x: self.x.select_columns(names)?,
            y: self.y.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn layout_and_row_selection() {
        let x = DesignMatrix::new(
            names(&["A", "B", "C"]),
            names(&["t1", "t2"]),
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        )
        .unwrap();
        assert_eq!(x.get(1, 1), 5.0);
        assert_eq!(x.column_by_name("t1"), Some(&[1.0, 2.0, 3.0][..]));
        let sub = x.select_rows(&[0, 2]);
        assert_eq!(sub.rows(), ["A", "C"]);
        assert_eq!(sub.column(1), [4.0, 6.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DesignMatrix::new(names(&["A", "B"]), names(&["t"]), vec![vec![1.0]]).is_err());
        assert!(DesignMatrix::new(names(&["A"]), names(&["t", "t"]), vec![vec![1.0], vec![2.0]]).is_err());
        assert!(matches!(
            DesignMatrix::new(names(&["A"]), names(&["t"]), vec![]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dataset_aligns_response_by_region() {
        let x = DesignMatrix::new(names(&["C", "A", "B"]), vec![], vec![]).unwrap();
        let y = RegionSeries::new("y", [("A", 1.0), ("B", 2.0), ("C", 3.0)]).unwrap();
        let ds = Dataset::new(x, &y).unwrap();
        assert_eq!(ds.y, vec![3.0, 1.0, 2.0]);
        assert_eq!(ds.without_row(0).y, vec![1.0, 2.0]);
    }
}
