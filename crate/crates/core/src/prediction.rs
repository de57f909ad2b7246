//! Coordinator-side path history, next-position extrapolation and the
//! pre-scanned best-transmitter table.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::grid::{GridMap, ValueFormat};
use crate::scenario::{ApId, Scenario};

/// Consecutive failures at one cell that trigger a table refresh.
pub const FAILURE_REFRESH_THRESHOLD: u32 = 3;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_CELL_SIZE_M: f64 = 0.5;
pub const DEFAULT_PATH_CAPACITY: usize = 16;

/// Time-ordered position estimates for one device, bounded by `capacity`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathReport {
    pub device_id: u32,
    entries: VecDeque<(u64, Point2)>,
    capacity: usize,
}

impl PathReport {
    pub fn new(device_id: u32, capacity: usize) -> Self {
        Self {
            device_id,
            entries: VecDeque::with_capacity(capacity.max(2)),
            capacity: capacity.max(2),
        }
    }

    /// Appends an estimate. Indices must increase strictly; a stale or
    /// duplicate index is rejected.
    pub fn push(&mut self, superframe_index: u64, xy: Point2) -> Result<()> {
        if let Some((last, _)) = self.entries.back() {
            if superframe_index <= *last {
                return Err(Error::Config(format!(
                    "path entries must be strictly increasing: {superframe_index} after {last}"
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((superframe_index, xy));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> impl Iterator<Item = &(u64, Point2)> {
        self.entries.iter()
    }

    pub fn last(&self) -> Option<(u64, Point2)> {
        self.entries.back().copied()
    }
}

/// How the coordinator extrapolates the next position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Predictor {
    /// `p2 + alpha * (p2 - p1)` from the last two estimates.
    Alpha { alpha: f64 },
    /// Straight-line least-squares fit over the last `history` estimates.
    LeastSquares { history: usize },
}

impl Default for Predictor {
    fn default() -> Self {
        Predictor::Alpha {
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl Predictor {
    pub fn predict(&self, path: &PathReport) -> Result<Point2> {
        match *self {
            Predictor::Alpha { alpha } => predict_next(path, alpha),
            Predictor::LeastSquares { history } => predict_next_k(path, history),
        }
    }
}

/// Extrapolates one superframe past the newest estimate using the last two.
///
/// The displacement is taken per superframe, so for consecutive entries this
/// is exactly `p2 + alpha * (p2 - p1)`.
pub fn predict_next(path: &PathReport, alpha: f64) -> Result<Point2> {
    let n = path.entries.len();
    if n < 2 {
        return Err(Error::InsufficientHistory { have: n, need: 2 });
    }
    let (k1, p1) = path.entries[n - 2];
    let (k2, p2) = path.entries[n - 1];
    let gap = (k2 - k1) as f64;
    Ok(p2 + (p2 - p1) * (alpha / gap))
}

/// Least-squares line through the last `k` estimates (against superframe
/// index), evaluated one superframe after the newest.
pub fn predict_next_k(path: &PathReport, k: usize) -> Result<Point2> {
    let n = path.entries.len();
    if k < 2 || n < k {
        return Err(Error::InsufficientHistory {
            have: n,
            need: k.max(2),
        });
    }
    let window: Vec<(u64, Point2)> = path.entries.iter().skip(n - k).copied().collect();
    let base = window[0].0;
    let ts: Vec<f64> = window.iter().map(|(i, _)| (i - base) as f64).collect();
    let t_mean = ts.iter().sum::<f64>() / k as f64;
    let mean = window.iter().fold(Point2::ORIGIN, |acc, (_, p)| acc + *p) * (1.0 / k as f64);
    let mut sxx = 0.0;
    let mut sxp = Point2::ORIGIN;
    for (t, (_, p)) in ts.iter().zip(&window) {
        let dt = t - t_mean;
        sxx += dt * dt;
        sxp = sxp + (*p - mean) * dt;
    }
    let slope = sxp * (1.0 / sxx);
    let t_next = ts[k - 1] + 1.0;
    Ok(mean + slope * (t_next - t_mean))
}

/// Best AP per grid cell, with failure bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct BestApDatabase {
    origin: Point2,
    cell_size_m: f64,
    nx: usize,
    ny: usize,
    best: Vec<ApId>,
    failure_counts: Vec<u32>,
    excluded: Vec<Vec<ApId>>,
}

/// Argmax of noiseless received power at `p`, ties to the lowest id,
/// skipping `exclude`.
pub fn best_ap_at(model: &ChannelModel<'_>, scenario: &Scenario, p: Point2, exclude: &[ApId]) -> Option<ApId> {
    let mut best: Option<(ApId, f64)> = None;
    for ap in scenario.aps_by_id() {
        if exclude.contains(&ap.id) {
            continue;
        }
        let pw = model.ap_power(ap, p);
        // Ascending id order, so strict > keeps the lowest id on ties.
        if best.is_none_or(|(_, b)| pw > b) {
            best = Some((ap.id, pw));
        }
    }
    best.map(|(id, _)| id)
}

/// Builds the table by evaluating every cell centre.
pub fn build_database(scenario: &Scenario, cell_size_m: f64) -> Result<BestApDatabase> {
    if !(cell_size_m > 0.0) {
        return Err(Error::Config(format!("cell size must be positive, got {cell_size_m}")));
    }
    let model = ChannelModel::for_scenario(scenario)?;
    let room = &scenario.room;
    let nx = cells_along(room.width_m, cell_size_m);
    let ny = cells_along(room.depth_m, cell_size_m);
    let origin = room.min_corner();
    let mut best = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let c = cell_center(origin, cell_size_m, i, j);
            best.push(best_ap_at(&model, scenario, c, &[]).ok_or_else(|| {
                Error::Scenario("scenario has no access points".into())
            })?);
        }
    }
    Ok(BestApDatabase {
        origin,
        cell_size_m,
        nx,
        ny,
        failure_counts: vec![0; nx * ny],
        excluded: vec![Vec::new(); nx * ny],
        best,
    })
}

fn cell_center(origin: Point2, size: f64, i: usize, j: usize) -> Point2 {
    Point2::new(
        origin.x + (i as f64 + 0.5) * size,
        origin.y + (j as f64 + 0.5) * size,
    )
}

impl BestApDatabase {
    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Index of the cell containing `xy`; points outside the grid are
    /// clamped to the nearest edge cell.
    pub fn cell_of(&self, xy: Point2) -> (usize, usize) {
        let fi = ((xy.x - self.origin.x) / self.cell_size_m).floor();
        let fj = ((xy.y - self.origin.y) / self.cell_size_m).floor();
        let clamp = |f: f64, n: usize| -> usize {
            if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(n - 1)
            }
        };
        (clamp(fi, self.nx), clamp(fj, self.ny))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        cell_center(self.origin, self.cell_size_m, i, j)
    }

    fn idx(&self, xy: Point2) -> usize {
        let (i, j) = self.cell_of(xy);
        j * self.nx + i
    }

    pub fn lookup(&self, xy: Point2) -> ApId {
        self.best[self.idx(xy)]
    }

    pub fn failure_count(&self, xy: Point2) -> u32 {
        self.failure_counts[self.idx(xy)]
    }

    pub fn entry(&self, i: usize, j: usize) -> ApId {
        self.best[j * self.nx + i]
    }

    /// Feeds one classified switch back. Success clears the cell's failure
    /// count; the third consecutive failure recomputes the cell's entry
    /// without the failed AP and clears the count. Returns true when the
    /// entry was refreshed.
    pub fn record_outcome(&mut self, xy: Point2, success: bool, scenario: &Scenario) -> Result<bool> {
        let k = self.idx(xy);
        if success {
            self.failure_counts[k] = 0;
            return Ok(false);
        }
        self.failure_counts[k] += 1;
        if self.failure_counts[k] < FAILURE_REFRESH_THRESHOLD {
            return Ok(false);
        }
        self.failure_counts[k] = 0;
        let failed = self.best[k];
        if !self.excluded[k].contains(&failed) {
            self.excluded[k].push(failed);
        }
        let model = ChannelModel::for_scenario(scenario)?;
        let center = cell_center(self.origin, self.cell_size_m, k % self.nx, k / self.nx);
        if let Some(next) = best_ap_at(&model, scenario, center, &self.excluded[k]) {
            self.best[k] = next;
        }
        Ok(true)
    }

    /// The table as a grid of cell centres with the AP id as value.
    pub fn to_grid(&self) -> GridMap {
        let origin = cell_center(self.origin, self.cell_size_m, 0, 0);
        GridMap::new(
            origin,
            self.cell_size_m,
            self.nx,
            self.ny,
            self.best.iter().map(|id| id.0 as f64).collect(),
        )
        .expect("dimensions match by construction")
    }

    pub fn to_text(&self, comment: Option<&str>) -> String {
        self.to_grid().to_text(comment, ValueFormat::Integer)
    }

    /// Rebuilds a table from its exported grid. Failure history is not part
    /// of the export and starts at zero.
    pub fn from_grid(grid: &GridMap) -> Result<Self> {
        let (nx, ny) = grid.dims();
        let step = grid.step_m();
        let best = grid
            .values()
            .iter()
            .map(|v| {
                if *v < 0.0 || *v > u16::MAX as f64 || v.fract() != 0.0 {
                    Err(Error::Parse(format!("invalid ap id {v}")))
                } else {
                    Ok(ApId(*v as u16))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let c0 = grid.origin();
        Ok(Self {
            origin: Point2::new(c0.x - step / 2.0, c0.y - step / 2.0),
            cell_size_m: step,
            nx,
            ny,
            failure_counts: vec![0; nx * ny],
            excluded: vec![Vec::new(); nx * ny],
            best,
        })
    }
}

/// Number of cells per axis covering a span of `len`.
pub fn cells_along(len: f64, cell: f64) -> usize {
    (len / cell - 1e-9).ceil().max(1.0) as usize
}
