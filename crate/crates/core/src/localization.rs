//! Position estimation from per-AP RSS readings.
//!
//! Each reading is inverted through the LOS model to a 3-D distance, projected
//! onto the receiver plane, and three anchors are intersected by subtracting
//! pairs of circle equations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{collinear, Point2};
use crate::scenario::{AccessPoint, ApId, ChannelParams, Room, Scenario, COLLINEAR_TOL_M2};

/// One measurement report sent during the inactive portion of a superframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssReport {
    pub device_id: u32,
    pub superframe_index: u64,
    /// (AP, photocurrent in A); ap ids are distinct.
    pub readings: Vec<(ApId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionEstimate {
    pub xy: Point2,
    /// RMS of `| |xy - p_i| - r_i |` over the anchors used.
    pub residual_m: f64,
    pub used_aps: Vec<ApId>,
}

/// Anchor for trilateration: AP position and measured 3-D distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub pos: Point2,
    pub distance_m: f64,
}

/// Estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalizationConfig {
    /// Use every usable reading in a linear least-squares fit instead of
    /// the three strongest.
    #[serde(default)]
    pub least_squares_anchors: bool,
}

fn inversion_constant(ap: &AccessPoint, params: &ChannelParams, h: f64) -> f64 {
    let m = params.lambertian_order;
    ap.tx_power_w * (m + 1.0) * params.optics_gain() * h.powf(m + 1.0) / (2.0 * PI)
}

/// Squared 3-D distance implied by `rss_a`; the LOS model gives
/// `P = K / d^(m+3)`.
pub fn rss_to_distance_sq(rss_a: f64, ap: &AccessPoint, params: &ChannelParams, room: &Room) -> Result<f64> {
    if !(rss_a > 0.0) {
        return Err(Error::UnusableReading { ap: ap.id, rss_a });
    }
    let h = room.receiver_plane_separation_m;
    let p = rss_a / params.responsivity_a_per_w;
    let k = inversion_constant(ap, params, h);
    Ok((k / p).powf(2.0 / (params.lambertian_order + 3.0)))
}

pub fn rss_to_distance(rss_a: f64, ap: &AccessPoint, params: &ChannelParams, room: &Room) -> Result<f64> {
    Ok(rss_to_distance_sq(rss_a, ap, params, room)?.sqrt())
}

/// Ranks usable readings by RSS (ties: lowest id) and picks the three
/// strongest non-collinear APs.
pub fn select_anchor_triple(readings: &[(ApId, f64)], scenario: &Scenario) -> Result<[ApId; 3]> {
    let ranked = rank_usable(readings, scenario);
    if ranked.len() < 3 {
        return Err(Error::InsufficientAnchors {
            usable: ranked.len(),
        });
    }
    let (a, b) = (ranked[0], ranked[1]);
    // Ids are distinct, so positions of distinct ids are distinct in a valid
    // scenario; the first two define the reference line.
    let third = ranked[2..]
        .iter()
        .find(|c| !collinear(a.1.pos(), b.1.pos(), c.1.pos(), COLLINEAR_TOL_M2))
        .ok_or(Error::NoNonCollinearTriple)?;
    Ok([a.1.id, b.1.id, third.1.id])
}

fn rank_usable<'s>(readings: &[(ApId, f64)], scenario: &'s Scenario) -> Vec<(f64, &'s AccessPoint)> {
    let mut ranked: Vec<(f64, &AccessPoint)> = readings
        .iter()
        .filter(|(_, rss)| *rss > 0.0)
        .filter_map(|(id, rss)| scenario.ap(*id).map(|ap| (*rss, ap)))
        .collect();
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.id.cmp(&y.1.id)));
    ranked
}

/// Solves the three circle equations on the receiver plane. Distances are
/// 3-D; each is projected to a horizontal radius with `r^2 = max(d^2 - h^2, 0)`.
pub fn trilaterate(anchors: &[Anchor; 3], h: f64) -> Result<PositionEstimate> {
    let r_sq: Vec<f64> = anchors
        .iter()
        .map(|a| (a.distance_m * a.distance_m - h * h).max(0.0))
        .collect();
    solve_circles(
        &anchors.iter().map(|a| a.pos).collect::<Vec<_>>(),
        &r_sq,
    )
}

/// Difference-of-circles solve with squared horizontal radii. Three anchors
/// give an exact 2x2 system; more are fitted by least squares.
fn solve_circles(pos: &[Point2], r_sq: &[f64]) -> Result<PositionEstimate> {
    debug_assert!(pos.len() >= 3 && pos.len() == r_sq.len());
    let p0 = pos[0];
    // Row i: 2 (p_i - p_0) . x = r0^2 - ri^2 + |p_i|^2 - |p_0|^2.
    // Work relative to p0 to keep magnitudes small.
    let mut ata = [[0.0f64; 2]; 2];
    let mut atb = [0.0f64; 2];
    for (p, ri_sq) in pos.iter().zip(r_sq).skip(1) {
        let q = *p - p0;
        let row = [2.0 * q.x, 2.0 * q.y];
        let rhs = r_sq[0] - ri_sq + q.norm_sq();
        for a in 0..2 {
            for b in 0..2 {
                ata[a][b] += row[a] * row[b];
            }
            atb[a] += row[a] * rhs;
        }
    }
    let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
    let scale = ata[0][0].abs().max(ata[1][1].abs()).max(1e-300);
    if det.abs() <= 1e-12 * scale * scale {
        return Err(Error::SingularSystem);
    }
    let x = (atb[0] * ata[1][1] - atb[1] * ata[0][1]) / det;
    let y = (ata[0][0] * atb[1] - ata[1][0] * atb[0]) / det;
    let xy = p0 + Point2::new(x, y);
    let residual_m = (pos
        .iter()
        .zip(r_sq)
        .map(|(p, rs)| (xy.distance(*p) - rs.sqrt()).powi(2))
        .sum::<f64>()
        / pos.len() as f64)
        .sqrt();
    Ok(PositionEstimate {
        xy,
        residual_m,
        used_aps: Vec::new(),
    })
}

/// Full pipeline: distance inversion, anchor selection, trilateration,
/// clamp to the room footprint.
pub fn estimate_position(report: &RssReport, scenario: &Scenario) -> Result<PositionEstimate> {
    estimate_position_with(report, scenario, LocalizationConfig::default())
}

pub fn estimate_position_with(
    report: &RssReport,
    scenario: &Scenario,
    cfg: LocalizationConfig,
) -> Result<PositionEstimate> {
    let chosen: Vec<(ApId, f64)> = if cfg.least_squares_anchors {
        let ranked = rank_usable(&report.readings, scenario);
        if ranked.len() < 3 {
            return Err(Error::InsufficientAnchors {
                usable: ranked.len(),
            });
        }
        // Still requires a non-collinear triple among them.
        let triple = select_anchor_triple(&report.readings, scenario)?;
        let mut v: Vec<(ApId, f64)> = vec![];
        for id in triple {
            v.push((id, rss_of(&report.readings, id)));
        }
        v.extend(
            ranked
                .iter()
                .filter(|(_, ap)| !triple.contains(&ap.id))
                .map(|(rss, ap)| (ap.id, *rss)),
        );
        v
    } else {
        let triple = select_anchor_triple(&report.readings, scenario)?;
        triple.iter().map(|&id| (id, rss_of(&report.readings, id))).collect()
    };

    let h = scenario.separation();
    let mut pos = Vec::with_capacity(chosen.len());
    let mut r_sq = Vec::with_capacity(chosen.len());
    for (id, rss) in &chosen {
        let ap = scenario.ap(*id).ok_or(Error::UnknownAp(*id))?;
        let d_sq = rss_to_distance_sq(*rss, ap, &scenario.channel, &scenario.room)?;
        pos.push(ap.pos());
        r_sq.push((d_sq - h * h).max(0.0));
    }
    let mut est = solve_circles(&pos, &r_sq)?;
    est.xy = scenario.room.clamp(est.xy);
    est.used_aps = chosen.iter().map(|(id, _)| *id).collect();
    Ok(est)
}

fn rss_of(readings: &[(ApId, f64)], id: ApId) -> f64 {
    readings
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, r)| *r)
        .unwrap_or(0.0)
}
