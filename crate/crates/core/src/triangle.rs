//! Cumulative claims development triangles and their one-year extension.
//!
//! Accident years `i` and development years `k` are 0-based. A triangle of
//! horizon `n` holds `C[i][k]` for every `i + k <= n`, stored densely row by
//! row; cells beyond the latest calendar diagonal do not exist.
//!
//! Text format: one comma-separated row per accident year in increasing
//! order, row `i` holding exactly `n - i + 1` cumulative values. Blank lines
//! and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    n: usize,
    cells: Vec<f64>,
    offsets: Vec<usize>,
}

fn row_len(n: usize, i: usize) -> usize {
    n - i + 1
}

impl Triangle {
    /// Builds a triangle from its rows. Row `i` must have `n - i + 1` finite
    /// values and a strictly positive first value.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::Shape(format!(
                "{} accident year(s) given; a development horizon n >= 2 needs at least 3 rows",
                rows.len()
            )));
        }
        let n = rows.len() - 1;
        let mut cells = Vec::with_capacity((n + 1) * (n + 2) / 2);
        let mut offsets = Vec::with_capacity(n + 1);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != row_len(n, i) {
                return Err(Error::Shape(format!(
                    "accident year {i} has {} values, expected {}",
                    row.len(),
                    row_len(n, i)
                )));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("C[{i}][{k}] is not finite")));
            }
            if row[0] <= 0.0 {
                return Err(Error::Validation(format!(
                    "C[{i}][0] = {} must be positive",
                    row[0]
                )));
            }
            offsets.push(cells.len());
            cells.extend_from_slice(row);
        }
        Ok(Self { n, cells, offsets })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_triangle(&text)
    }

    /// Development horizon `n`; the triangle has `n + 1` accident years.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        assert!(i + k <= self.n, "cell ({i}, {k}) lies beyond the observed diagonal");
        self.cells[self.offsets[i] + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = self.offsets[i];
        &self.cells[start..start + row_len(self.n, i)]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..=self.n).map(move |i| self.row(i))
    }

    /// Latest observed cumulative value `C[i][n - i]`.
    pub fn latest(&self, i: usize) -> f64 {
        self.get(i, self.n - i)
    }

    /// Latest diagonal for all accident years `0..=n`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.latest(i)).collect()
    }

    /// Multiplies every cell by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            cells: self.cells.iter().map(|v| v * c).collect(),
            offsets: self.offsets.clone(),
        }
    }

    /// Renders the triangle in the text format. Values use the shortest
    /// decimal form that parses back to the identical `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for Triangle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_triangle(s)
    }
}

/// Parses the comma-separated triangle format. Every error carries the
/// 1-based line number (and field number where applicable).
pub fn parse_triangle(text: &str) -> Result<Triangle> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (col, field) in line.split(',').enumerate() {
            let field = field.trim();
            if field.is_empty() {
                return Err(Error::parse(line_no, col + 1, "empty field"));
            }
            let value: f64 = field
                .parse()
                .map_err(|_| Error::parse(line_no, col + 1, format!("'{field}' is not a number")))?;
            if !value.is_finite() {
                return Err(Error::parse(line_no, col + 1, format!("'{field}' is not finite")));
            }
            row.push(value);
        }
        if row[0] <= 0.0 {
            return Err(Error::parse(
                line_no,
                1,
                format!("first development value {} must be positive", row[0]),
            ));
        }
        rows.push(row);
        lines.push(line_no);
    }

    let Some(first) = rows.first() else {
        return Err(Error::Shape("no data rows".into()));
    };
    let n = first.len() - 1;
    if n < 2 {
        return Err(Error::parse(
            lines[0],
            0,
            format!("first row has {} value(s); development horizon n < 2 is unsupported", n + 1),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if i > n {
            return Err(Error::parse(
                lines[i],
                0,
                format!("more than n + 1 = {} accident years", n + 1),
            ));
        }
        if row.len() != row_len(n, i) {
            return Err(Error::parse(
                lines[i],
                0,
                format!(
                    "accident year {i} has {} values, a trapezoid of horizon {n} needs {}",
                    row.len(),
                    row_len(n, i)
                ),
            ));
        }
    }
    if rows.len() != n + 1 {
        return Err(Error::parse(
            *lines.last().unwrap(),
            0,
            format!("{} accident years found, horizon {n} needs {}", rows.len(), n + 1),
        ));
    }
    Triangle::from_rows(&rows)
}

/// Individual development ratios `F[i][k] = C[i][k] / C[i][k-1]`, `k >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DevRatios {
    n: usize,
    columns: Vec<Vec<f64>>,
}

impl DevRatios {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ratios of development year `k` (1..=n), indexed by accident year.
    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k - 1]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.columns[k - 1][i]
    }
}

pub fn dev_ratios(tri: &Triangle) -> Result<DevRatios> {
    let n = tri.n();
    let mut columns = Vec::with_capacity(n);
    for k in 1..=n {
        let mut col = Vec::with_capacity(n - k + 1);
        for i in 0..=n - k {
            let prev = tri.get(i, k - 1);
            if prev == 0.0 {
                return Err(Error::Validation(format!(
                    "ratio F[{i}][{k}] undefined: C[{i}][{}] is zero",
                    k - 1
                )));
            }
            col.push(tri.get(i, k) / prev);
        }
        columns.push(col);
    }
    Ok(DevRatios { n, columns })
}

/// Payments `Z[i][n-i+1]` of the next calendar year for accident years `1..=n`.
///
/// Accident year 0 is fully developed and has no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NextDiagonal {
    payments: Vec<f64>,
}

impl NextDiagonal {
    /// `payments[0]` belongs to accident year 1.
    pub fn new(payments: Vec<f64>) -> Self {
        Self { payments }
    }

    pub fn zeros(n: usize) -> Self {
        Self { payments: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.payments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payments.is_empty()
    }

    /// Payment of accident year `i` (1..=n).
    pub fn get(&self, i: usize) -> f64 {
        self.payments[i - 1]
    }

    pub fn payments(&self) -> &[f64] {
        &self.payments
    }

    pub fn total(&self) -> f64 {
        self.payments.iter().sum()
    }
}

/// A triangle together with the next calendar year's payments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTriangle {
    base: Triangle,
    diagonal: NextDiagonal,
}

impl ExtendedTriangle {
    pub fn base(&self) -> &Triangle {
        &self.base
    }

    pub fn diagonal(&self) -> &NextDiagonal {
        &self.diagonal
    }

    /// Implied cumulative value `C[i][n-i+1] = C[i][n-i] + Z[i][n-i+1]`, `1 <= i <= n`.
    pub fn next_cumulative(&self, i: usize) -> f64 {
        self.base.latest(i) + self.diagonal.get(i)
    }

    /// Rows of the extended trapezoid: row 0 is unchanged, row `i >= 1`
    /// gains the implied cell at development year `n - i + 1`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.base
            .rows()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.to_vec();
                if i >= 1 {
                    r.push(self.next_cumulative(i));
                }
                r
            })
            .collect()
    }
}

pub fn extend(tri: &Triangle, diag: &NextDiagonal) -> Result<ExtendedTriangle> {
    if diag.len() != tri.n() {
        return Err(Error::Shape(format!(
            "next diagonal has {} payments, triangle horizon is {}",
            diag.len(),
            tri.n()
        )));
    }
    Ok(ExtendedTriangle {
        base: tri.clone(),
        diagonal: diag.clone(),
    })
}
