//! Scalar fields sampled on a regular grid over the room footprint.
//!
//! Grid convention: points sit at `origin + (i * step, j * step)` for
//! `i in 0..nx`, `j in 0..ny`, with `origin` at the footprint's lower-left
//! corner and both endpoints included whenever the room size is a multiple
//! of the step. A 12 m footprint at 0.25 m therefore has 49 x 49 points.
//! Values are stored row-major: `j` (y) is the row, `i` (x) the column.
//!
//! Text format: optional `#` comment lines, the header `x,y,value`, then one
//! row per point in storage order.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scenario::Room;

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    origin: Point2,
    step_m: f64,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

/// How the `value` column is rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueFormat {
    /// Nine significant digits in scientific notation.
    Sig9,
    /// Rounded to an integer (used for AP ids).
    Integer,
}

/// Count of grid points along a span of `len` at spacing `step`, endpoints
/// included.
pub fn points_along(len: f64, step: f64) -> usize {
    (len / step + 1e-9).floor() as usize + 1
}

/// Formats `v` with nine significant digits.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

impl GridMap {
    pub fn new(origin: Point2, step_m: f64, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if !(step_m > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {step_m}")));
        }
        if values.len() != nx * ny {
            return Err(Error::Parse(format!(
                "grid of {nx}x{ny} needs {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        Ok(Self {
            origin,
            step_m,
            nx,
            ny,
            values,
        })
    }

    /// Evaluates `f` at every grid point of the room footprint.
    pub fn over_room<F>(room: &Room, step_m: f64, mut f: F) -> Result<Self>
    where
        F: FnMut(Point2) -> f64,
    {
        if !(step_m > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {step_m}")));
        }
        let origin = room.min_corner();
        let nx = points_along(room.width_m, step_m);
        let ny = points_along(room.depth_m, step_m);
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(Self::point_of(origin, step_m, i, j)));
            }
        }
        Ok(Self {
            origin,
            step_m,
            nx,
            ny,
            values,
        })
    }

    fn point_of(origin: Point2, step: f64, i: usize, j: usize) -> Point2 {
        Point2::new(origin.x + i as f64 * step, origin.y + j as f64 * step)
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn step_m(&self) -> f64 {
        self.step_m
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn point(&self, i: usize, j: usize) -> Point2 {
        Self::point_of(self.origin, self.step_m, i, j)
    }

    /// Grid indices whose value strictly exceeds all 8-connected neighbours.
    pub fn strict_local_maxima(&self) -> Vec<(usize, usize)> {
        self.extrema(|v, n| v > n)
    }

    /// Grid indices whose value is at most every 8-connected neighbour.
    pub fn local_minima(&self) -> Vec<(usize, usize)> {
        self.extrema(|v, n| v <= n)
    }

    fn extrema(&self, keep: impl Fn(f64, f64) -> bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let v = self.get(i, j);
                let ok = self.neighbours(i, j).all(|(a, b)| keep(v, self.get(a, b)));
                if ok {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn neighbours(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        (-1isize..=1)
            .flat_map(|dj| (-1isize..=1).map(move |di| (di, dj)))
            .filter(|&(di, dj)| di != 0 || dj != 0)
            .map(move |(di, dj)| (i as isize + di, j as isize + dj))
            .filter(move |&(a, b)| a >= 0 && b >= 0 && a < nx && b < ny)
            .map(|(a, b)| (a as usize, b as usize))
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best % self.nx, best / self.nx)
    }

    pub fn to_text(&self, comment: Option<&str>, fmt: ValueFormat) -> String {
        let mut s = String::with_capacity(48 * self.values.len() + 64);
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(s, "# {line}");
            }
        }
        s.push_str("x,y,value\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let p = self.point(i, j);
                let v = self.get(i, j);
                let vs = match fmt {
                    ValueFormat::Sig9 => sig9(v),
                    ValueFormat::Integer => format!("{}", v.round() as i64),
                };
                let _ = writeln!(s, "{},{},{}", sig9(p.x), sig9(p.y), vs);
            }
        }
        s
    }

    pub fn write_text<W: Write>(&self, mut w: W, comment: Option<&str>, fmt: ValueFormat) -> Result<()> {
        w.write_all(self.to_text(comment, fmt).as_bytes())?;
        Ok(())
    }

    /// Parses the text format back. The grid geometry is recovered from the
    /// point coordinates.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        let mut seen_header = false;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if line != "x,y,value" {
                    return Err(Error::Parse(format!("line {}: expected header x,y,value", n + 1)));
                }
                seen_header = true;
                continue;
            }
            let mut it = line.split(',');
            let mut field = |name: &str| -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::Parse(format!("line {}: missing {name}", n + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {name}: {e}", n + 1)))
            };
            rows.push((field("x")?, field("y")?, field("value")?));
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty grid".into()));
        }
        let origin = Point2::new(rows[0].0, rows[0].1);
        let nx = rows.iter().take_while(|r| r.1 == origin.y).count();
        if !rows.len().is_multiple_of(nx) {
            return Err(Error::Parse("ragged grid".into()));
        }
        let ny = rows.len() / nx;
        let step = if nx > 1 {
            rows[1].0 - origin.x
        } else if ny > 1 {
            rows[nx].1 - origin.y
        } else {
            1.0
        };
        GridMap::new(origin, step, nx, ny, rows.into_iter().map(|r| r.2).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;

    #[test]
    fn inclusive_endpoints() {
        let room = default_scenario().room;
        let g = GridMap::over_room(&room, 0.25, |_| 0.0).unwrap();
        assert_eq!(g.dims(), (49, 49));
        assert_eq!(g.point(0, 0), Point2::new(-6.0, -6.0));
        assert_eq!(g.point(48, 48), Point2::new(6.0, 6.0));
        let g = GridMap::over_room(&room, 0.5, |_| 0.0).unwrap();
        assert_eq!(g.dims(), (25, 25));
    }

    #[test]
    fn bad_step() {
        let room = default_scenario().room;
        assert!(GridMap::over_room(&room, 0.0, |_| 0.0).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let room = default_scenario().room;
        let g = GridMap::over_room(&room, 1.5, |p| p.x * 1.234567891 + p.y * p.y).unwrap();
        let txt = g.to_text(Some("config-hash: abc"), ValueFormat::Sig9);
        assert!(txt.starts_with("# config-hash: abc\nx,y,value\n"));
        assert_eq!(txt.lines().count(), 2 + 81);
        let back = GridMap::read_text(txt.as_bytes()).unwrap();
        assert_eq!(back.dims(), g.dims());
        for (a, b) in back.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn sig9_digits() {
        assert_eq!(sig9(0.098238), "9.82380000e-2");
        assert_eq!(sig9(-6.0), "-6.00000000e0");
    }

    #[test]
    fn maxima_and_minima() {
        let room = default_scenario().room;
        let g = GridMap::over_room(&room, 1.0, |p| -(p.x - 1.0).powi(2) - p.y.powi(2)).unwrap();
        let m = g.strict_local_maxima();
        assert_eq!(m.len(), 1);
        assert_eq!(g.point(m[0].0, m[0].1), Point2::new(1.0, 0.0));
        assert_eq!(g.point(g.argmax().0, g.argmax().1), Point2::new(1.0, 0.0));
    }
}
