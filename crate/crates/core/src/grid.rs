//! Uniform truncated grids on `[-L, L]` and nodal fields.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Round-off allowance for nonnegativity of densities.
pub const TOL_NEG: f64 = 1e-10;

/// Uniform grid `x_i = -L + i h`, `i = 0..=n`, `h = 2L/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    half_length: f64,
    intervals: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(half_length: f64, intervals: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::Domain(format!(
                "grid needs L > 0, got {half_length}"
            )));
        }
        if intervals < 2 {
            return Err(Error::Domain(format!("grid needs n >= 2, got {intervals}")));
        }
        Ok(Grid1D {
            half_length,
            intervals,
            h: 2.0 * half_length / intervals as f64,
        })
    }

    /// Grid on `[-L, L]` with spacing as close to `h` as an integer count allows.
    pub fn with_spacing(half_length: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("grid needs h > 0, got {h}")));
        }
        Grid1D::new(half_length, (2.0 * half_length / h).round() as usize)
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.half_length
        } else {
            -self.half_length + i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.x(i))
    }

    /// Index of the last node with `x_i <= x` (clamped to the grid).
    pub fn floor_index(&self, x: f64) -> usize {
        let s = ((x + self.half_length) / self.h).floor();
        if s <= 0.0 {
            0
        } else {
            (s as usize).min(self.intervals)
        }
    }

    /// Index of the node nearest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let s = ((x + self.half_length) / self.h).round();
        if s <= 0.0 {
            0
        } else {
            (s as usize).min(self.intervals)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= -self.half_length && x <= self.half_length
    }
}

/// Samples of a real function at the nodes of a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Grid1D, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Field::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.grid.x(i), v))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.same_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "(L = {}, n = {}) vs (L = {}, n = {})",
                self.grid.half_length,
                self.grid.intervals,
                other.grid.half_length,
                other.grid.intervals
            )));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite {
                value: self.values[i],
                location: format!("{what} at x = {}", self.grid.x(i)),
            }),
        }
    }

    /// Writes `x,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &str) -> Result<()> {
        writeln!(out, "x,{header}")?;
        for (x, v) in self.iter() {
            writeln!(out, "{},{}", fmt_full(x), fmt_full(v))?;
        }
        Ok(())
    }
}

/// 17 significant digits, scientific notation.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn make_grid(half_length: f64, intervals: usize) -> Result<Grid1D> {
    Grid1D::new(half_length, intervals)
}

/// Samples `f` at every node. Non-finite samples are reported as errors.
pub fn sample(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Result<Field> {
    let field = Field {
        grid: *grid,
        values: grid.nodes().map(f).collect(),
    };
    field.check_finite("sample")?;
    Ok(field)
}

pub fn sup_norm(f: &Field) -> f64 {
    f.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sup_diff(f: &Field, g: &Field) -> Result<f64> {
    f.same_grid(g)?;
    Ok(f.values
        .iter()
        .zip(&g.values)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Piecewise-linear interpolation; exact at nodes.
pub fn interp(f: &Field, x: f64) -> Result<f64> {
    let grid = &f.grid;
    if !grid.contains(x) {
        return Err(Error::Domain(format!(
            "interpolation point {x} outside [-{0}, {0}]",
            grid.half_length
        )));
    }
    let j = grid.nearest_index(x);
    if grid.x(j) == x {
        return Ok(f.values[j]);
    }
    let i = grid.floor_index(x);
    if i == grid.intervals {
        return Ok(f.values[i]);
    }
    let t = (x - grid.x(i)) / grid.h;
    if t == 0.0 {
        return Ok(f.values[i]);
    }
    Ok(f.values[i] + t * (f.values[i + 1] - f.values[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_grid_nodes() {
        let g = make_grid(10.0, 4).unwrap();
        let xs: Vec<f64> = g.nodes().collect();
        assert_eq!(xs, vec![-10.0, -5.0, 0.0, 5.0, 10.0]);
    }

    #[test]
    fn production_spacing() {
        let g = make_grid(60.0, 12000).unwrap();
        assert!((g.h() - 0.01).abs() < 1e-15);
        assert_eq!(g.x(0), -60.0);
        assert_eq!(g.x(12000), 60.0);
        for i in 1..g.len() {
            assert!((g.x(i) - g.x(i - 1) - g.h()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_grid(0.0, 10).is_err());
        assert!(make_grid(-1.0, 10).is_err());
        assert!(make_grid(1.0, 1).is_err());
        assert!(make_grid(f64::NAN, 10).is_err());
    }

    #[test]
    fn sampling() {
        let g = make_grid(4.0, 8).unwrap();
        let one = sample(&g, |_| 1.0).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));
        let phi = sample(&g, |x| (-0.5 * x).exp()).unwrap();
        assert!((interp(&phi, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(sample(&g, |x| 1.0 / x).is_err());
    }

    #[test]
    fn norms() {
        let g = make_grid(1.0, 10).unwrap();
        let c = Field::constant(g, -3.0);
        assert_eq!(sup_norm(&c), 3.0);
        assert_eq!(sup_diff(&c, &c).unwrap(), 0.0);
        let other = Field::constant(make_grid(2.0, 10).unwrap(), 1.0);
        assert!(matches!(sup_diff(&c, &other), Err(Error::GridMismatch(_))));
        assert!(interp(&c, 1.5).is_err());
    }

    #[test]
    fn csv_has_full_precision() {
        let g = make_grid(1.0, 2).unwrap();
        let f = Field::from_values(g, vec![0.1, 1.0 / 3.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, "value").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
        assert_eq!(row[1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(text.lines().next().unwrap(), "x,value");
    }

    proptest! {
        #[test]
        fn interp_is_identity_at_nodes(l in 0.5f64..50.0, n in 2usize..400, seed in 0u64..1000) {
            let g = make_grid(l, n).unwrap();
            let f = sample(&g, |x| (x * 0.37 + seed as f64).sin()).unwrap();
            for i in 0..g.len() {
                prop_assert_eq!(interp(&f, g.x(i)).unwrap(), f.values()[i]);
            }
        }

        #[test]
        fn sup_diff_is_a_metric(a in prop::collection::vec(-5.0f64..5.0, 9),
                                b in prop::collection::vec(-5.0f64..5.0, 9),
                                c in prop::collection::vec(-5.0f64..5.0, 9)) {
            let g = make_grid(1.0, 8).unwrap();
            let (fa, fb, fc) = (
                Field::from_values(g, a).unwrap(),
                Field::from_values(g, b).unwrap(),
                Field::from_values(g, c).unwrap(),
            );
            let ab = sup_diff(&fa, &fb).unwrap();
            prop_assert_eq!(ab, sup_diff(&fb, &fa).unwrap());
            prop_assert!(ab <= sup_diff(&fa, &fc).unwrap() + sup_diff(&fc, &fb).unwrap() + 1e-12);
        }
    }
}
