//! Floor map partitioned into rectangular cells. Cell labels are strings of
//! the form `r<row>c<col>`; the map keeps a bijection between labels,
//! (row, col) indices, and metric cell-center coordinates.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "GridSpec", into = "GridSpec")]
pub struct GridMap {
    origin: (f64, f64),
    cell_width: f64,
    cell_height: f64,
    n_rows: usize,
    n_cols: usize,
    active_cells: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, (usize, usize)>,
}

/// Wire form; `active_cells: null` means every cell is active.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub origin: (f64, f64),
    pub cell_width: f64,
    pub cell_height: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    #[serde(default)]
    pub active_cells: Option<Vec<String>>,
}

impl Default for GridSpec {
    /// 12.5 m by 18 m floor split into 1.25 m by 1.5 m cells (10 by 12).
    fn default() -> Self {
        GridSpec {
            origin: (0.0, 0.0),
            cell_width: 1.25,
            cell_height: 1.5,
            n_rows: 12,
            n_cols: 10,
            active_cells: None,
        }
    }
}

impl TryFrom<GridSpec> for GridMap {
    type Error = Error;
    fn try_from(spec: GridSpec) -> Result<GridMap> {
        GridMap::new(spec)
    }
}

impl From<GridMap> for GridSpec {
    fn from(g: GridMap) -> GridSpec {
        GridSpec {
            origin: g.origin,
            cell_width: g.cell_width,
            cell_height: g.cell_height,
            n_rows: g.n_rows,
            n_cols: g.n_cols,
            active_cells: Some(g.active_cells),
        }
    }
}

pub fn cell_label(row: usize, col: usize) -> String {
    format!("r{row}c{col}")
}

fn parse_label(label: &str) -> Option<(usize, usize)> {
    let rest = label.strip_prefix('r')?;
    let c_at = rest.find('c')?;
    let row = rest[..c_at].parse().ok()?;
    let col = rest[c_at + 1..].parse().ok()?;
    Some((row, col))
}

impl GridMap {
    pub fn new(spec: GridSpec) -> Result<GridMap> {
        if !(spec.cell_width > 0.0) || !(spec.cell_height > 0.0) {
            return Err(Error::Config("cell dimensions must be positive".into()));
        }
        if spec.n_rows == 0 || spec.n_cols == 0 {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        let active_cells = match spec.active_cells {
            Some(cells) => cells,
            None => (0..spec.n_rows)
                .flat_map(|r| (0..spec.n_cols).map(move |c| cell_label(r, c)))
                .collect(),
        };
        let mut index = HashMap::new();
        for label in &active_cells {
            let (row, col) = parse_label(label)
                .ok_or_else(|| Error::Config(format!("malformed cell label '{label}'")))?;
            if row >= spec.n_rows || col >= spec.n_cols {
                return Err(Error::Config(format!(
                    "cell '{label}' outside {}x{} grid",
                    spec.n_rows, spec.n_cols
                )));
            }
            if index.insert(label.clone(), (row, col)).is_some() {
                return Err(Error::Config(format!("duplicate cell label '{label}'")));
            }
        }
        Ok(GridMap {
            origin: spec.origin,
            cell_width: spec.cell_width,
            cell_height: spec.cell_height,
            n_rows: spec.n_rows,
            n_cols: spec.n_cols,
            active_cells,
            index,
        })
    }

    pub fn default_map() -> GridMap {
        GridMap::new(GridSpec::default()).expect("default grid is valid")
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn active_cells(&self) -> &[String] {
        &self.active_cells
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn cell_height(&self) -> f64 {
        self.cell_height
    }

    pub fn width(&self) -> f64 {
        self.n_cols as f64 * self.cell_width
    }

    pub fn height(&self) -> f64 {
        self.n_rows as f64 * self.cell_height
    }

    /// Length of one cell diagonal in meters.
    pub fn cell_diagonal(&self) -> f64 {
        self.cell_width.hypot(self.cell_height)
    }

    /// Whether a point lies inside the map rectangle.
    pub fn contains_point(&self, (x, y): (f64, f64)) -> bool {
        x >= self.origin.0
            && y >= self.origin.1
            && x <= self.origin.0 + self.width()
            && y <= self.origin.1 + self.height()
    }

    /// Metric center of a cell: origin + ((col+0.5)·w, (row+0.5)·h).
    pub fn cell_center(&self, label: &str) -> Result<(f64, f64)> {
        let &(row, col) = self
            .index
            .get(label)
            .ok_or_else(|| Error::Data(format!("unknown cell label '{label}'")))?;
        Ok((
            self.origin.0 + (col as f64 + 0.5) * self.cell_width,
            self.origin.1 + (row as f64 + 0.5) * self.cell_height,
        ))
    }
}
