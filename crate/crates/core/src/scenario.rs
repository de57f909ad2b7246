//! The static world: room geometry, ceiling access points and channel
//! constants.
//!
//! Frame: origin at the room centre on the receiver plane. The receiver
//! plane is `z = 0` and the LED plane sits at
//! `z = receiver_plane_separation_m`. The room footprint is
//! `[-width/2, width/2] x [-depth/2, depth/2]`.

use std::collections::HashSet;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{collinear, Point2};

/// Tolerance on twice the triangle area (m^2) below which three AP
/// positions count as collinear.
pub const COLLINEAR_TOL_M2: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApId(pub u16);

impl fmt::Display for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Room {
    pub width_m: f64,
    pub depth_m: f64,
    pub height_m: f64,
    /// Vertical distance between the LED plane and the receiver plane.
    pub receiver_plane_separation_m: f64,
}

impl Default for Room {
    fn default() -> Self {
        Self {
            width_m: 12.0,
            depth_m: 12.0,
            height_m: 3.0,
            receiver_plane_separation_m: 1.8,
        }
    }
}

impl Room {
    pub fn min_corner(&self) -> Point2 {
        Point2::new(-self.width_m / 2.0, -self.depth_m / 2.0)
    }

    pub fn max_corner(&self) -> Point2 {
        Point2::new(self.width_m / 2.0, self.depth_m / 2.0)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        Point2::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y))
    }

    pub fn corners(&self) -> [Point2; 4] {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        [
            lo,
            Point2::new(hi.x, lo.y),
            hi,
            Point2::new(lo.x, hi.y),
        ]
    }

    /// Height of the floor in the receiver-plane frame (negative).
    pub fn floor_z(&self) -> f64 {
        self.receiver_plane_separation_m - self.height_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub id: ApId,
    pub x: f64,
    pub y: f64,
    /// Average transmitted optical power P_t (W).
    pub tx_power_w: f64,
    /// On-axis luminous intensity I(0) (cd).
    pub luminous_intensity_cd: f64,
    /// Cell data rate D (bit/s).
    pub data_rate_bps: f64,
    /// Lighting-cell radius r (m).
    pub coverage_radius_m: f64,
}

impl AccessPoint {
    pub fn pos(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Lambertian emission order m_1.
    pub lambertian_order: f64,
    /// Optical filter gain T_s, constant inside the FOV.
    pub filter_gain: f64,
    /// Concentrator gain g, constant inside the FOV.
    pub concentrator_gain: f64,
    pub fov_semi_angle_rad: f64,
    pub responsivity_a_per_w: f64,
    /// Standard deviation of the additive photocurrent noise (A).
    pub noise_sigma_a: f64,
    pub reflectance: f64,
    /// Area of one discretised wall patch (m^2).
    pub wall_patch_area_m2: f64,
    pub reflections_enabled: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            lambertian_order: DEFAULT_LAMBERTIAN_ORDER,
            filter_gain: 1.0,
            concentrator_gain: 1.0,
            fov_semi_angle_rad: FRAC_PI_2,
            responsivity_a_per_w: 0.54,
            noise_sigma_a: 1e-5,
            reflectance: 0.8,
            wall_patch_area_m2: 0.04,
            reflections_enabled: false,
        }
    }
}

impl ChannelParams {
    /// Combined receiver-side gain T_s * g.
    pub fn optics_gain(&self) -> f64 {
        self.filter_gain * self.concentrator_gain
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_sigma_a = 0.0;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub room: Room,
    pub aps: Vec<AccessPoint>,
    pub channel: ChannelParams,
}

/// m_1 for a wide-beam luminaire (semi-angle about 75.5 deg).
pub const DEFAULT_LAMBERTIAN_ORDER: f64 = 0.5;
/// I(0) calibrated so every 0.25 m grid point of the default room is lit
/// within 300..=1500 lx.
pub const CALIBRATED_INTENSITY_CD: f64 = 4000.0;
pub const DEFAULT_TX_POWER_W: f64 = 1.0;
pub const DEFAULT_DATA_RATE_BPS: f64 = 10e6;
pub const DEFAULT_COVERAGE_RADIUS_M: f64 = 4.0;

/// The 12 m x 12 m x 3 m conference room with a 3x3 LED grid on a 5 m
/// pitch and the receiver plane 1.8 m below the LEDs.
pub fn default_scenario() -> Scenario {
    // Listing order fixes the ids 1..=9.
    const POSITIONS: [(f64, f64); 9] = [
        (-5.0, -5.0),
        (-5.0, 5.0),
        (5.0, -5.0),
        (5.0, 5.0),
        (-5.0, 0.0),
        (5.0, 0.0),
        (0.0, -5.0),
        (0.0, 5.0),
        (0.0, 0.0),
    ];
    let aps = POSITIONS
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| AccessPoint {
            id: ApId(i as u16 + 1),
            x,
            y,
            tx_power_w: DEFAULT_TX_POWER_W,
            luminous_intensity_cd: CALIBRATED_INTENSITY_CD,
            data_rate_bps: DEFAULT_DATA_RATE_BPS,
            coverage_radius_m: DEFAULT_COVERAGE_RADIUS_M,
        })
        .collect();
    Scenario {
        room: Room::default(),
        aps,
        channel: ChannelParams::default(),
    }
}

impl Scenario {
    pub fn separation(&self) -> f64 {
        self.room.receiver_plane_separation_m
    }

    pub fn ap(&self, id: ApId) -> Option<&AccessPoint> {
        self.aps.iter().find(|a| a.id == id)
    }

    /// Access points in ascending id order; every summation over APs uses
    /// this order.
    pub fn aps_by_id(&self) -> Vec<&AccessPoint> {
        sorted_by_id(&self.aps)
    }

    pub fn validate(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }

    /// Checks every invariant, reporting the first one violated.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scenario(msg));
        let r = &self.room;
        for (name, v) in [
            ("room width", r.width_m),
            ("room depth", r.depth_m),
            ("room height", r.height_m),
            ("receiver plane separation", r.receiver_plane_separation_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if r.receiver_plane_separation_m >= r.height_m {
            return bad("receiver plane separation must be below the room height".into());
        }

        let c = &self.channel;
        if !(c.lambertian_order > 0.0) {
            return bad("lambertian order must be positive".into());
        }
        if !(0.0..=1.0).contains(&c.reflectance) {
            return bad("reflectance outside [0, 1]".into());
        }
        if !(c.filter_gain > 0.0 && c.concentrator_gain > 0.0) {
            return bad("filter and concentrator gains must be positive".into());
        }
        if !(c.fov_semi_angle_rad > 0.0 && c.fov_semi_angle_rad <= FRAC_PI_2) {
            return bad("fov semi-angle outside (0, pi/2]".into());
        }
        if !(c.responsivity_a_per_w > 0.0) {
            return bad("responsivity must be positive".into());
        }
        if !(c.noise_sigma_a >= 0.0) {
            return bad("noise sigma must be non-negative".into());
        }
        if !(c.wall_patch_area_m2 > 0.0) {
            return bad("wall patch area must be positive".into());
        }

        if self.aps.len() < 3 {
            return bad("fewer than 3 access points".into());
        }
        let mut seen = HashSet::new();
        for ap in &self.aps {
            if !seen.insert(ap.id) {
                return bad(format!("duplicate AP id {}", ap.id));
            }
            if !self.room.contains(ap.pos()) {
                return bad(format!("AP {} outside room", ap.id));
            }
            if !(ap.tx_power_w > 0.0) {
                return bad(format!("AP {} tx power must be positive", ap.id));
            }
            if !(ap.coverage_radius_m > 0.0) {
                return bad(format!("AP {} coverage radius must be positive", ap.id));
            }
            if !(ap.luminous_intensity_cd >= 0.0 && ap.data_rate_bps >= 0.0) {
                return bad(format!("AP {} intensity and data rate must be non-negative", ap.id));
            }
        }
        if !has_non_collinear_triple(&self.aps) {
            return bad("all access points collinear".into());
        }
        Ok(())
    }
}

pub(crate) fn sorted_by_id(aps: &[AccessPoint]) -> Vec<&AccessPoint> {
    let mut v: Vec<&AccessPoint> = aps.iter().collect();
    v.sort_by_key(|a| a.id);
    v
}

fn has_non_collinear_triple(aps: &[AccessPoint]) -> bool {
    // With two distinct anchor points, any third point off their line works.
    let Some(a) = aps.first().map(AccessPoint::pos) else {
        return false;
    };
    let Some(b) = aps.iter().map(AccessPoint::pos).find(|p| *p != a) else {
        return false;
    };
    aps.iter()
        .any(|c| !collinear(a, b, c.pos(), COLLINEAR_TOL_M2))
}
