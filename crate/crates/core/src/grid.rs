use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform partition `t_i = i/n` of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return domain("grid needs at least one interval");
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// All points `t_0..=t_n`.
    pub fn points(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.t(i)).collect()
    }

    /// Points `t_1..=t_n`, where path values are stored.
    pub fn interior(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.t(i)).collect()
    }
}

/// A path observed at `t_1..=t_n`; the value at `t_0` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return domain(format!("path has {} values but the grid has {} points", values.len(), grid.n()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("path values must be finite");
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.interior().into_iter().map(f).collect())
    }

    /// Value at `t_i`, including the implicit zero at `i = 0`.
    pub fn at(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Writes paths column-wise as `t,path_0,...,path_{k-1}` including the `t_0 = 0` row.
///
/// All paths must share one grid.
pub fn write_paths_csv<W: Write>(out: &mut W, paths: &[SamplePath]) -> io::Result<()> {
    let Some(first) = paths.first() else {
        return writeln!(out, "t");
    };
    let grid = first.grid;
    write!(out, "t")?;
    for k in 0..paths.len() {
        write!(out, ",path_{k}")?;
    }
    writeln!(out)?;
    for i in 0..=grid.n() {
        write!(out, "{}", grid.t(i))?;
        for p in paths {
            write!(out, ",{}", p.at(i))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
