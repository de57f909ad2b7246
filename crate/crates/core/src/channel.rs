//! Optical channel between ceiling LEDs and an upward-facing photodetector on
//! the receiver plane.
//!
//! Both the LED and the detector are untilted, so for a receiver at
//! horizontal offset `rho` from an AP at height `h` above the receiver plane
//! the irradiance and incidence angles coincide: `cos phi = cos psi = h / d`
//! with `d = sqrt(rho^2 + h^2)`.
//!
//! Received power is LOS plus, optionally, a first-order bounce off the four
//! walls, discretised into square-ish patches.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::grid::GridMap;
use crate::scenario::{sorted_by_id, AccessPoint, ChannelParams, Room, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosGeometry {
    pub distance_m: f64,
    pub cos_phi: f64,
    pub cos_psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalSample {
    /// Noiseless received optical power (W).
    pub power_w: f64,
    /// `R * power_w + n`; may be negative under noise.
    pub photocurrent_a: f64,
    pub in_fov: bool,
}

impl OpticalSample {
    /// RSS as reported upstream: the photocurrent clamped at zero.
    pub fn rss_a(&self) -> f64 {
        self.photocurrent_a.max(0.0)
    }
}

pub fn los_geometry(ap: &AccessPoint, rx: Point2, room: &Room) -> LosGeometry {
    let h = room.receiver_plane_separation_m;
    let d = (ap.pos().distance_sq(rx) + h * h).sqrt();
    let c = h / d;
    LosGeometry {
        distance_m: d,
        cos_phi: c,
        cos_psi: c,
    }
}

/// True when incidence angle with cosine `cos_psi` lies within the FOV.
pub fn within_fov(cos_psi: f64, params: &ChannelParams) -> bool {
    cos_psi > 0.0 && cos_psi.acos() <= params.fov_semi_angle_rad
}

/// Horizontal illuminance (lx) from one AP at `rx`.
pub fn horizontal_illuminance(
    ap: &AccessPoint,
    rx: Point2,
    params: &ChannelParams,
    room: &Room,
) -> f64 {
    let g = los_geometry(ap, rx, room);
    if !within_fov(g.cos_psi, params) {
        return 0.0;
    }
    ap.luminous_intensity_cd * g.cos_phi.powf(params.lambertian_order) * g.cos_psi
        / (g.distance_m * g.distance_m)
}

/// Line-of-sight received optical power (W) from one AP.
pub fn los_power(ap: &AccessPoint, rx: Point2, params: &ChannelParams, room: &Room) -> f64 {
    let g = los_geometry(ap, rx, room);
    if !within_fov(g.cos_psi, params) {
        return 0.0;
    }
    let m = params.lambertian_order;
    ap.tx_power_w * (m + 1.0) / (2.0 * PI * g.distance_m * g.distance_m)
        * g.cos_phi.powf(m)
        * params.optics_gain()
        * g.cos_psi
}

/// Upper bound on [`los_power`]: the value directly beneath the AP.
pub fn peak_los_power(ap: &AccessPoint, params: &ChannelParams, room: &Room) -> f64 {
    let h = room.receiver_plane_separation_m;
    ap.tx_power_w * (params.lambertian_order + 1.0) / (2.0 * PI * h * h) * params.optics_gain()
}

/// One reflecting element of a wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPatch {
    pub center: [f64; 3],
    /// Unit normal pointing into the room.
    pub normal: [f64; 3],
    pub area_m2: f64,
}

/// Tiles the four walls, floor to LED plane, with patches of about
/// `patch_area_m2` each.
pub fn wall_patches(room: &Room, patch_area_m2: f64) -> Result<Vec<WallPatch>> {
    if !(patch_area_m2 > 0.0) {
        return Err(Error::PatchTooLarge {
            area_m2: patch_area_m2,
        });
    }
    let side = patch_area_m2.sqrt();
    let z0 = room.floor_z();
    let wall_h = room.height_m;
    let (lo, hi) = (room.min_corner(), room.max_corner());
    let n_v = (wall_h / side + 1e-9).floor() as usize;
    let n_x = (room.width_m / side + 1e-9).floor() as usize;
    let n_y = (room.depth_m / side + 1e-9).floor() as usize;
    if n_v == 0 || n_x == 0 || n_y == 0 {
        return Err(Error::PatchTooLarge {
            area_m2: patch_area_m2,
        });
    }
    let dv = wall_h / n_v as f64;
    let mut out = Vec::with_capacity(2 * n_v * (n_x + n_y));

    // (fixed coordinate, along-axis start, along-axis length, count, normal, along x?)
    let walls = [
        (lo.x, lo.y, room.depth_m, n_y, [1.0, 0.0, 0.0], false),
        (hi.x, lo.y, room.depth_m, n_y, [-1.0, 0.0, 0.0], false),
        (lo.y, lo.x, room.width_m, n_x, [0.0, 1.0, 0.0], true),
        (hi.y, lo.x, room.width_m, n_x, [0.0, -1.0, 0.0], true),
    ];
    for (fixed, start, len, n_u, normal, along_x) in walls {
        let du = len / n_u as f64;
        for iu in 0..n_u {
            let u = start + (iu as f64 + 0.5) * du;
            for iv in 0..n_v {
                let z = z0 + (iv as f64 + 0.5) * dv;
                let center = if along_x { [u, fixed, z] } else { [fixed, u, z] };
                out.push(WallPatch {
                    center,
                    normal,
                    area_m2: du * dv,
                });
            }
        }
    }
    Ok(out)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// First-bounce power via one patch.
pub fn patch_contribution(
    ap: &AccessPoint,
    rx: Point2,
    patch: &WallPatch,
    params: &ChannelParams,
    room: &Room,
) -> f64 {
    let led = [ap.x, ap.y, room.receiver_plane_separation_m];
    let det = [rx.x, rx.y, 0.0];
    let to_patch = sub(patch.center, led);
    let d1_sq = dot(to_patch, to_patch);
    let d1 = d1_sq.sqrt();
    // LED faces -z.
    let cos_phi = -to_patch[2] / d1;
    let cos_alpha = -dot(to_patch, patch.normal) / d1;
    let to_rx = sub(det, patch.center);
    let d2_sq = dot(to_rx, to_rx);
    let d2 = d2_sq.sqrt();
    let cos_beta = dot(to_rx, patch.normal) / d2;
    // Detector faces +z.
    let cos_psi = -to_rx[2] / d2;
    if cos_phi <= 0.0 || cos_alpha <= 0.0 || cos_beta <= 0.0 || !within_fov(cos_psi, params) {
        return 0.0;
    }
    let m = params.lambertian_order;
    ap.tx_power_w * (m + 1.0) / (2.0 * PI * PI * d1_sq * d2_sq)
        * params.reflectance
        * patch.area_m2
        * cos_phi.powf(m)
        * cos_alpha
        * cos_beta
        * params.optics_gain()
        * cos_psi
}

/// First-reflection power (W) from one AP, summed over wall patches of area
/// `params.wall_patch_area_m2`.
pub fn reflection_power(
    ap: &AccessPoint,
    rx: Point2,
    params: &ChannelParams,
    room: &Room,
) -> Result<f64> {
    let patches = wall_patches(room, params.wall_patch_area_m2)?;
    Ok(reflection_power_with(ap, rx, &patches, params, room))
}

pub fn reflection_power_with(
    ap: &AccessPoint,
    rx: Point2,
    patches: &[WallPatch],
    params: &ChannelParams,
    room: &Room,
) -> f64 {
    if params.reflectance == 0.0 {
        return 0.0;
    }
    patches
        .iter()
        .map(|p| patch_contribution(ap, rx, p, params, room))
        .sum()
}

/// Total received power (W) summed over `aps` in ascending id order.
pub fn total_power(
    aps: &[AccessPoint],
    rx: Point2,
    params: &ChannelParams,
    room: &Room,
) -> Result<f64> {
    let model = ChannelModel::build(room, params)?;
    Ok(sorted_by_id(aps)
        .into_iter()
        .map(|ap| model.ap_power(ap, rx))
        .sum())
}

/// Room and channel parameters with the wall discretisation precomputed.
#[derive(Debug, Clone)]
pub struct ChannelModel<'a> {
    pub room: &'a Room,
    pub params: &'a ChannelParams,
    patches: Option<Vec<WallPatch>>,
}

impl<'a> ChannelModel<'a> {
    pub fn build(room: &'a Room, params: &'a ChannelParams) -> Result<Self> {
        let patches = if params.reflections_enabled {
            Some(wall_patches(room, params.wall_patch_area_m2)?)
        } else {
            None
        };
        Ok(Self {
            room,
            params,
            patches,
        })
    }

    pub fn for_scenario(s: &'a Scenario) -> Result<Self> {
        Self::build(&s.room, &s.channel)
    }

    /// Noiseless power from one AP: LOS plus reflections when enabled.
    pub fn ap_power(&self, ap: &AccessPoint, rx: Point2) -> f64 {
        let los = los_power(ap, rx, self.params, self.room);
        match &self.patches {
            Some(p) => los + reflection_power_with(ap, rx, p, self.params, self.room),
            None => los,
        }
    }

    pub fn total_power(&self, aps: &[&AccessPoint], rx: Point2) -> f64 {
        aps.iter().map(|ap| self.ap_power(ap, rx)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, ap: &AccessPoint, rx: Point2, rng: &mut R) -> OpticalSample {
        let power_w = self.ap_power(ap, rx);
        let g = los_geometry(ap, rx, self.room);
        let mut photocurrent_a = self.params.responsivity_a_per_w * power_w;
        if self.params.noise_sigma_a > 0.0 {
            let n = Normal::new(0.0, self.params.noise_sigma_a)
                .expect("noise sigma validated non-negative");
            photocurrent_a += n.sample(rng);
        }
        OpticalSample {
            power_w,
            photocurrent_a,
            in_fov: within_fov(g.cos_psi, self.params),
        }
    }
}

/// One noisy RSS sample from `ap`.
pub fn sample_rss<R: Rng + ?Sized>(
    ap: &AccessPoint,
    rx: Point2,
    params: &ChannelParams,
    room: &Room,
    rng: &mut R,
) -> Result<OpticalSample> {
    Ok(ChannelModel::build(room, params)?.sample(ap, rx, rng))
}

/// Total received power sampled over the room footprint.
pub fn power_map(scenario: &Scenario, step_m: f64) -> Result<GridMap> {
    let model = ChannelModel::for_scenario(scenario)?;
    let aps = scenario.aps_by_id();
    GridMap::over_room(&scenario.room, step_m, |p| model.total_power(&aps, p))
}

/// Illuminance (lx) summed over APs, sampled over the room footprint.
pub fn illuminance_map(scenario: &Scenario, step_m: f64) -> Result<GridMap> {
    let aps = scenario.aps_by_id();
    GridMap::over_room(&scenario.room, step_m, |p| {
        aps.iter()
            .map(|ap| horizontal_illuminance(ap, p, &scenario.channel, &scenario.room))
            .sum()
    })
}

/// Summary of an illuminance map against a lux band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compliance {
    pub min_lx: f64,
    pub max_lx: f64,
    /// Fraction of grid points inside the band, endpoints included.
    pub fraction_inside: f64,
}

/// Lower and upper illuminance limits for office lighting (lx).
pub const ISO_BAND_LX: (f64, f64) = (300.0, 1500.0);

pub fn compliance(map: &GridMap, band: (f64, f64)) -> Compliance {
    let vals = map.values();
    let inside = vals.iter().filter(|v| **v >= band.0 && **v <= band.1).count();
    Compliance {
        min_lx: vals.iter().copied().fold(f64::INFINITY, f64::min),
        max_lx: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        fraction_inside: inside as f64 / vals.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::scenario::{default_scenario, ApId};

    fn unit_ap(x: f64, y: f64) -> AccessPoint {
        AccessPoint {
            id: ApId(1),
            x,
            y,
            tx_power_w: 1.0,
            luminous_intensity_cd: 1.0,
            data_rate_bps: 1e7,
            coverage_radius_m: 4.0,
        }
    }

    fn m1_params() -> ChannelParams {
        ChannelParams {
            lambertian_order: 1.0,
            noise_sigma_a: 0.0,
            ..ChannelParams::default()
        }
    }

    fn room() -> Room {
        default_scenario().room
    }

    #[test]
    fn geometry_examples() {
        let r = room();
        let g = los_geometry(&unit_ap(0.0, 0.0), Point2::new(0.0, 0.0), &r);
        assert_eq!(g.distance_m, 1.8);
        assert_eq!(g.cos_phi, 1.0);

        let g = los_geometry(&unit_ap(0.0, 0.0), Point2::new(1.8, 0.0), &r);
        assert_relative_eq!(g.distance_m, 1.8 * 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(g.cos_phi, 1.0 / 2f64.sqrt(), max_relative = 1e-15);
        assert_eq!(g.cos_phi, g.cos_psi);

        let g = los_geometry(&unit_ap(5.0, 5.0), Point2::new(-5.0, -5.0), &r);
        assert_relative_eq!(g.distance_m, (200.0f64 + 3.24).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn illuminance_examples() {
        let r = room();
        let p = m1_params();
        let mut ap = unit_ap(0.0, 0.0);
        ap.luminous_intensity_cd = 1000.0;
        assert_relative_eq!(
            horizontal_illuminance(&ap, Point2::ORIGIN, &p, &r),
            1000.0 / 3.24,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            horizontal_illuminance(&ap, Point2::new(1.8, 0.0), &p, &r),
            1000.0 / 12.96,
            max_relative = 1e-14
        );
        ap.luminous_intensity_cd = 0.0;
        assert_eq!(horizontal_illuminance(&ap, Point2::new(3.0, 1.0), &p, &r), 0.0);
    }

    #[test]
    fn los_power_examples() {
        let r = room();
        let p = m1_params();
        let ap = unit_ap(0.0, 0.0);
        let beneath = los_power(&ap, Point2::ORIGIN, &p, &r);
        assert_relative_eq!(beneath, 2.0 / (2.0 * PI * 3.24), max_relative = 1e-14);
        assert!((beneath - 0.0982438).abs() < 1e-7);

        let mut narrow = p.clone();
        narrow.fov_semi_angle_rad = 0.5;
        // psi = atan(3/1.8) ~ 1.03 rad
        assert_eq!(los_power(&ap, Point2::new(3.0, 0.0), &narrow, &r), 0.0);

        let mut strong = ap.clone();
        strong.tx_power_w = 2.0;
        for x in [0.0, 1.0, 2.5, 5.5] {
            let q = Point2::new(x, 0.3);
            assert_eq!(los_power(&strong, q, &p, &r), 2.0 * los_power(&ap, q, &p, &r));
        }
    }

    #[test]
    fn reflection_zero_reflectance() {
        let s = default_scenario();
        let mut p = s.channel.clone();
        p.reflections_enabled = true;
        p.reflectance = 0.0;
        assert_eq!(reflection_power(&s.aps[0], Point2::new(1.0, 2.0), &p, &s.room).unwrap(), 0.0);
    }

    #[test]
    fn reflection_patch_too_large() {
        let s = default_scenario();
        let mut p = s.channel.clone();
        p.wall_patch_area_m2 = 16.0; // 4 m side > 3 m wall height
        assert!(matches!(
            reflection_power(&s.aps[0], Point2::ORIGIN, &p, &s.room),
            Err(Error::PatchTooLarge { .. })
        ));
    }

    #[test]
    fn patches_tile_walls() {
        let r = room();
        let patches = wall_patches(&r, 0.04).unwrap();
        let area: f64 = patches.iter().map(|p| p.area_m2).sum();
        assert_relative_eq!(area, 2.0 * (12.0 + 12.0) * 3.0, max_relative = 1e-12);
    }

    #[test]
    fn total_power_single_ap_and_order() {
        let s = default_scenario();
        let p = s.channel.clone();
        let one = vec![s.aps[2].clone()];
        let q = Point2::new(0.7, -1.3);
        assert_eq!(
            total_power(&one, q, &p, &s.room).unwrap(),
            los_power(&s.aps[2], q, &p, &s.room)
        );

        let forward = total_power(&s.aps, q, &p, &s.room).unwrap();
        let mut rev = s.aps.clone();
        rev.reverse();
        rev.swap(1, 5);
        assert_eq!(forward.to_bits(), total_power(&rev, q, &p, &s.room).unwrap().to_bits());
    }

    #[test]
    fn total_power_at_center_matches_hand_sum() {
        // m = 0.5, h = 1.8: beneath term K/h^2, four at rho = 5, four at rho = 5*sqrt(2)
        let s = default_scenario();
        let m: f64 = 0.5;
        let h2: f64 = 3.24;
        let term = |rho2: f64| {
            let d2 = rho2 + h2;
            let c = (h2 / d2).sqrt();
            (m + 1.0) / (2.0 * PI * d2) * c.powf(m) * c
        };
        let hand = term(0.0) + 4.0 * term(25.0) + 4.0 * term(50.0);
        let got = total_power(&s.aps, Point2::ORIGIN, &s.channel, &s.room).unwrap();
        assert_relative_eq!(got, hand, max_relative = 1e-14);
    }

    #[test]
    fn noiseless_sample_is_exact() {
        let s = default_scenario();
        let p = s.channel.clone().noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = Point2::new(2.0, -1.0);
        let smp = sample_rss(&s.aps[4], q, &p, &s.room, &mut rng).unwrap();
        assert_eq!(smp.photocurrent_a, p.responsivity_a_per_w * los_power(&s.aps[4], q, &p, &s.room));
        assert!(smp.in_fov);
    }

    #[test]
    fn seeded_samples_repeat() {
        let s = default_scenario();
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let model = ChannelModel::for_scenario(&s).unwrap();
            (0..50)
                .map(|i| model.sample(&s.aps[i % 9], Point2::new(0.1 * i as f64 - 2.0, 1.0), &mut rng).photocurrent_a)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn sample_mean_converges() {
        let s = default_scenario();
        let mut p = s.channel.clone();
        p.noise_sigma_a = 1e-3;
        let model = ChannelModel::build(&s.room, &p).unwrap();
        let q = Point2::new(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| model.sample(&s.aps[8], q, &mut rng).photocurrent_a)
            .sum::<f64>()
            / n as f64;
        let expect = p.responsivity_a_per_w * los_power(&s.aps[8], q, &p, &s.room);
        assert!((mean - expect).abs() < 5.0 * 1e-3 / (n as f64).sqrt());
    }

    #[test]
    fn rss_is_clamped() {
        let smp = OpticalSample {
            power_w: 0.0,
            photocurrent_a: -1e-6,
            in_fov: true,
        };
        assert_eq!(smp.rss_a(), 0.0);
    }
}
