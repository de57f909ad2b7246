//! Ground-truth receiver motion and the cell-gain throughput metric.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scenario::{AccessPoint, Room};
use crate::timeline::{ConnectivityLog, LinkState};

/// How a device moves. Motion is piecewise linear at constant speed and
/// stops at the last waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Trajectory {
    FixedWaypoints {
        waypoints: Vec<Point2>,
        speed_mps: f64,
    },
    ConstantVelocityLine {
        from: Point2,
        to: Point2,
        speed_mps: f64,
    },
    /// Uniform random destinations inside the room, zero pause. The
    /// waypoints come from the engine's per-device generator.
    RandomWaypoint {
        start: Point2,
        speed_mps: f64,
    },
}

impl Trajectory {
    pub fn speed_mps(&self) -> f64 {
        match self {
            Trajectory::FixedWaypoints { speed_mps, .. }
            | Trajectory::ConstantVelocityLine { speed_mps, .. }
            | Trajectory::RandomWaypoint { speed_mps, .. } => *speed_mps,
        }
    }

    pub fn check(&self, room: &Room) -> Result<()> {
        let v = self.speed_mps();
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("speed must be non-negative, got {v}")));
        }
        let pts: Vec<Point2> = match self {
            Trajectory::FixedWaypoints { waypoints, .. } => {
                if waypoints.is_empty() {
                    return Err(Error::Config("trajectory needs at least one waypoint".into()));
                }
                waypoints.clone()
            }
            Trajectory::ConstantVelocityLine { from, to, .. } => vec![*from, *to],
            Trajectory::RandomWaypoint { start, .. } => vec![*start],
        };
        if let Some(p) = pts.iter().find(|p| !room.contains(**p)) {
            return Err(Error::Config(format!("waypoint ({}, {}) outside room", p.x, p.y)));
        }
        Ok(())
    }

    /// Resolves the trajectory into a concrete path covering at least
    /// `duration_s`. Only the random model draws from `rng`.
    pub fn materialize<R: Rng + ?Sized>(&self, room: &Room, duration_s: f64, rng: &mut R) -> Path {
        match self {
            Trajectory::FixedWaypoints {
                waypoints,
                speed_mps,
            } => Path::new(waypoints.clone(), *speed_mps),
            Trajectory::ConstantVelocityLine { from, to, speed_mps } => {
                Path::new(vec![*from, *to], *speed_mps)
            }
            Trajectory::RandomWaypoint { start, speed_mps } => {
                let need = speed_mps * duration_s;
                let (lo, hi) = (room.min_corner(), room.max_corner());
                let mut pts = vec![*start];
                let mut len = 0.0;
                while len < need {
                    let next = Point2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
                    len += next.distance(*pts.last().expect("non-empty"));
                    pts.push(next);
                }
                Path::new(pts, *speed_mps)
            }
        }
    }
}

/// A concrete piecewise-linear path traversed at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    points: Vec<Point2>,
    speed_mps: f64,
    /// Arrival time at each waypoint.
    times: Vec<f64>,
}

impl Path {
    pub fn new(points: Vec<Point2>, speed_mps: f64) -> Self {
        assert!(!points.is_empty(), "path needs a waypoint");
        let mut times = Vec::with_capacity(points.len());
        let mut t = 0.0;
        times.push(0.0);
        for w in points.windows(2) {
            t += if speed_mps > 0.0 {
                w[0].distance(w[1]) / speed_mps
            } else {
                f64::INFINITY
            };
            times.push(t);
        }
        Self {
            points,
            speed_mps,
            times,
        }
    }

    pub fn waypoints(&self) -> &[Point2] {
        &self.points
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn position_at(&self, t: f64) -> Point2 {
        let t = t.max(0.0);
        if self.speed_mps <= 0.0 || self.points.len() == 1 {
            return self.points[0];
        }
        // First waypoint reached after t.
        let seg = self.times.partition_point(|&ti| ti <= t);
        if seg >= self.points.len() {
            return *self.points.last().expect("non-empty");
        }
        let (t0, t1) = (self.times[seg - 1], self.times[seg]);
        let (a, b) = (self.points[seg - 1], self.points[seg]);
        if t1 <= t0 {
            return b;
        }
        a.lerp(b, (t - t0) / (t1 - t0))
    }

    /// `t,x,y` rows sampled every `dt_s` for `count` samples.
    pub fn to_csv(&self, dt_s: f64, count: u64) -> String {
        let mut out = String::from("t,x,y\n");
        for k in 0..count {
            let t = k as f64 * dt_s;
            let p = self.position_at(t);
            out.push_str(&format!("{t},{},{}\n", p.x, p.y));
        }
        out
    }

    /// Time within `[t0, t1]` spent at most `r` from `center`.
    pub fn time_inside_disc(&self, center: Point2, r: f64, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let inside = |p: Point2| p.distance_sq(center) <= r * r;
        if self.speed_mps <= 0.0 || self.points.len() == 1 {
            return if inside(self.points[0]) { t1 - t0 } else { 0.0 };
        }
        let mut total = 0.0;
        for (i, w) in self.points.windows(2).enumerate() {
            let (sa, sb) = (self.times[i], self.times[i + 1]);
            let (lo, hi) = (sa.max(t0), sb.min(t1));
            if hi <= lo || sb <= sa {
                continue;
            }
            // p(t) = a + (t - sa)/(sb - sa) (b - a); solve |p - c|^2 <= r^2.
            let d = w[1] - w[0];
            let f = w[0] - center;
            let dur = sb - sa;
            let qa = d.norm_sq();
            let qb = 2.0 * f.x * d.x + 2.0 * f.y * d.y;
            let qc = f.norm_sq() - r * r;
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            let u0 = (-qb - sq) / (2.0 * qa);
            let u1 = (-qb + sq) / (2.0 * qa);
            let (e0, e1) = (sa + u0 * dur, sa + u1 * dur);
            let (a, b) = (e0.max(lo), e1.min(hi));
            if b > a {
                total += b - a;
            }
        }
        let end = self.end_time();
        if t1 > end && inside(*self.points.last().expect("non-empty")) {
            total += t1 - end.max(t0);
        }
        total
    }
}

/// Bits received from `ap` while connected to it inside its coverage disc.
/// Disruption and disconnected intervals earn nothing.
pub fn cell_gain(path: &Path, ap: &AccessPoint, log: &ConnectivityLog) -> f64 {
    log.segments()
        .iter()
        .filter(|s| s.state == LinkState::Connected(ap.id))
        .map(|s| path.time_inside_disc(ap.pos(), ap.coverage_radius_m, s.start_s(), s.end_s()))
        .sum::<f64>()
        * ap.data_rate_bps
}
