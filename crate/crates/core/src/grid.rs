use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Map dimensions, rows x cols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn cells(self) -> usize {
        self.rows * self.cols
    }

    pub fn fits_in(self, other: Shape) -> bool {
        self.rows <= other.rows && self.cols <= other.cols
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Axis-aligned rectangle of cells inside a map, used for tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Region {
    pub fn full(shape: Shape) -> Self {
        Self {
            row: 0,
            col: 0,
            rows: shape.rows,
            cols: shape.cols,
        }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.rows && c >= self.col && c < self.col + self.cols
    }

    /// Non-overlapping tiles of at most `tile` cells covering `shape`, row-major.
    pub fn tiles(shape: Shape, tile: Shape) -> Vec<Region> {
        let mut out = Vec::new();
        let mut row = 0;
        while row < shape.rows {
            let rows = tile.rows.min(shape.rows - row);
            let mut col = 0;
            while col < shape.cols {
                let cols = tile.cols.min(shape.cols - col);
                out.push(Region {
                    row,
                    col,
                    rows,
                    cols,
                });
                col += cols;
            }
            row += rows;
        }
        out
    }
}

/// Dense row-major 2-D map of real values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            rows: shape.rows,
            cols: shape.cols,
            data: vec![value; shape.cells()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.cells() {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {shape} grid",
                data.len()
            )));
        }
        Ok(Self {
            rows: shape.rows,
            cols: shape.cols,
            data,
        })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(Shape::new(r, c), rows.iter().flat_map(|row| row.iter().copied()).collect())
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.cells());
        for r in 0..shape.rows {
            for c in 0..shape.cols {
                data.push(f(r, c));
            }
        }
        Self {
            rows: shape.rows,
            cols: shape.cols,
            data,
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Value at a signed offset, or `None` outside the grid.
    #[inline]
    pub fn get_signed(&self, r: isize, c: isize) -> Option<f64> {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            None
        } else {
            Some(self.data[r as usize * self.cols + c as usize])
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        assert_eq!(self.shape(), other.shape(), "grid shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Center cell (rows/2, cols/2).
    pub fn center(&self) -> f64 {
        self.get(self.rows / 2, self.cols / 2)
    }

    /// Copies `region` of `src` into the same region of `self`.
    pub fn copy_region(&mut self, src: &Grid, region: Region) {
        for r in region.row..region.row + region.rows {
            for c in region.col..region.col + region.cols {
                self.set(r, c, src.get(r, c));
            }
        }
    }
}
