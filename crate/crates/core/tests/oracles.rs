//! Library results checked against brute-force and Monte Carlo references.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use vlcsim::channel::{los_power, reflection_power, ChannelModel};
use vlcsim::config::SimConfig;
use vlcsim::engine::run_scheme;
use vlcsim::localization::estimate_position;
use vlcsim::mobility::Trajectory;
use vlcsim::prediction::{build_database, predict_next, predict_next_k, PathReport};
use vlcsim::rng::{substream, Stream};
use vlcsim::{default_scenario, AccessPoint, ApId, Point2, RssReport, Scenario, Scheme};

/// First-bounce power by midpoint integration over the four walls with
/// square cells of side `step`, written straight from the model.
fn brute_force_reflection(ap: &AccessPoint, rx: Point2, s: &Scenario, step: f64) -> f64 {
    let h = s.room.receiver_plane_separation_m;
    let (w, d) = (s.room.width_m, s.room.depth_m);
    let z_lo = h - s.room.height_m;
    let m = s.channel.lambertian_order;
    let nz = (s.room.height_m / step).round() as usize;
    let dz = s.room.height_m / nz as f64;
    let mut total = 0.0;
    // (point on wall as function of u, inward normal, wall length)
    let walls: [(Box<dyn Fn(f64) -> (f64, f64)>, (f64, f64), f64); 4] = [
        (Box::new(move |u| (-w / 2.0, -d / 2.0 + u)), (1.0, 0.0), d),
        (Box::new(move |u| (w / 2.0, -d / 2.0 + u)), (-1.0, 0.0), d),
        (Box::new(move |u| (-w / 2.0 + u, -d / 2.0)), (0.0, 1.0), w),
        (Box::new(move |u| (-w / 2.0 + u, d / 2.0)), (0.0, -1.0), w),
    ];
    for (at, n, len) in &walls {
        let nu = (len / step).round() as usize;
        let du = len / nu as f64;
        for iu in 0..nu {
            let (px, py) = at((iu as f64 + 0.5) * du);
            for iz in 0..nz {
                let pz = z_lo + (iz as f64 + 0.5) * dz;
                let v1 = (px - ap.x, py - ap.y, pz - h);
                let d1 = (v1.0 * v1.0 + v1.1 * v1.1 + v1.2 * v1.2).sqrt();
                let v2 = (rx.x - px, rx.y - py, -pz);
                let d2 = (v2.0 * v2.0 + v2.1 * v2.1 + v2.2 * v2.2).sqrt();
                let cos_phi = -v1.2 / d1;
                let cos_a = -(v1.0 * n.0 + v1.1 * n.1) / d1;
                let cos_b = (v2.0 * n.0 + v2.1 * n.1) / d2;
                let cos_psi = -v2.2 / d2;
                if cos_phi <= 0.0 || cos_a <= 0.0 || cos_b <= 0.0 || cos_psi <= 0.0 {
                    continue;
                }
                total += ap.tx_power_w * (m + 1.0) / (2.0 * PI * PI * d1 * d1 * d2 * d2)
                    * s.channel.reflectance
                    * du
                    * dz
                    * cos_phi.powf(m)
                    * cos_a
                    * cos_b
                    * cos_psi;
            }
        }
    }
    total
}

#[test]
fn reflection_matches_fine_integration_and_stays_below_los() {
    let mut s = default_scenario();
    s.channel.reflections_enabled = true;
    let probe = Point2::new(1.3, -2.1);
    let mut lib = 0.0;
    let mut brute = 0.0;
    let mut los = 0.0;
    for ap in &s.aps {
        lib += reflection_power(ap, probe, &s.channel, &s.room).unwrap();
        brute += brute_force_reflection(ap, probe, &s, 0.05);
        los += los_power(ap, probe, &s.channel, &s.room);
    }
    assert!(lib > 0.0 && brute > 0.0);
    assert!(lib < los && brute < los, "reflection {lib} vs LOS {los}");
    assert!((lib - brute).abs() / brute < 0.02, "library {lib} vs brute force {brute}");
}

#[test]
fn reflection_converges_under_patch_refinement() {
    let mut s = default_scenario();
    s.channel.reflections_enabled = true;
    let at = |area: f64| {
        let mut p = s.channel.clone();
        p.wall_patch_area_m2 = area;
        s.aps
            .iter()
            .map(|ap| reflection_power(ap, Point2::ORIGIN, &p, &s.room).unwrap())
            .sum::<f64>()
    };
    let base = s.channel.wall_patch_area_m2;
    let (a, b) = (at(base), at(base / 2.0));
    assert!((a - b).abs() / b < 0.01, "{a} vs {b}");

    // Halving the patch side: successive differences shrink.
    let side = base.sqrt();
    let r: Vec<f64> = (0..4).map(|i| at((side / 2f64.powi(i)).powi(2))).collect();
    let d1 = (r[1] - r[0]).abs();
    let d2 = (r[2] - r[1]).abs();
    let d3 = (r[3] - r[2]).abs();
    assert!(d2 < d1 && d3 < d2, "differences {d1:e} {d2:e} {d3:e}");
}

fn noisy_report<R: Rng>(s: &Scenario, p: Point2, sigma: f64, rng: &mut R) -> RssReport {
    let noise = Normal::new(0.0, sigma).unwrap();
    RssReport {
        device_id: 1,
        superframe_index: 0,
        readings: s
            .aps
            .iter()
            .map(|ap| {
                let clean = s.channel.responsivity_a_per_w * los_power(ap, p, &s.channel, &s.room);
                (ap.id, (clean + noise.sample(rng)).max(0.0))
            })
            .collect(),
    }
}

#[test]
fn localization_error_grows_with_noise() {
    let s = default_scenario();
    let mut pts_rng = substream(11, 0, Stream::Mobility);
    let pts: Vec<Point2> = (0..400)
        .map(|_| Point2::new(pts_rng.gen_range(-5.0..5.0), pts_rng.gen_range(-5.0..5.0)))
        .collect();
    let rms = |sigma: f64| {
        let mut rng = substream(12, 0, Stream::Noise);
        let mut acc = 0.0;
        let mut n = 0;
        for p in &pts {
            if let Ok(e) = estimate_position(&noisy_report(&s, *p, sigma, &mut rng), &s) {
                acc += e.xy.distance_sq(*p);
                n += 1;
            }
        }
        (acc / n as f64).sqrt()
    };
    let errs: Vec<f64> = [1e-7, 1e-6, 1e-5, 1e-4].iter().map(|&s| rms(s)).collect();
    for w in errs.windows(2) {
        assert!(w[0] < w[1], "{errs:?}");
    }
    assert!(errs[0] < 0.01, "{errs:?}");
}

#[test]
fn longer_fit_beats_two_point_extrapolation_under_noise() {
    let mut rng = substream(3, 0, Stream::Noise);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let v = Point2::new(0.1, 0.03);
    let (mut e2, mut e4) = (0.0, 0.0);
    let trials = 2000;
    for t in 0..trials {
        let start = Point2::new(-4.0, -1.0 + (t % 7) as f64 * 0.3);
        let mut path = PathReport::new(1, 8);
        for k in 0..4u64 {
            let truth = start + v * k as f64;
            let obs = truth + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            path.push(k, obs).unwrap();
        }
        let next = start + v * 4.0;
        e2 += predict_next(&path, 1.0).unwrap().distance_sq(next);
        e4 += predict_next_k(&path, 4).unwrap().distance_sq(next);
    }
    assert!(e4 < e2, "k=4 {e4} vs k=2 {e2}");
}

fn oracle_power(ap: &AccessPoint, p: Point2, s: &Scenario) -> f64 {
    let h = s.room.receiver_plane_separation_m;
    let d2 = p.distance_sq(ap.pos()) + h * h;
    let c = h / d2.sqrt();
    let m = s.channel.lambertian_order;
    ap.tx_power_w * (m + 1.0) / (2.0 * PI * d2) * c.powf(m) * c
}

#[test]
fn database_respects_layout_symmetry() {
    let s = default_scenario();
    let db = build_database(&s, 0.5).unwrap();
    let (nx, ny) = db.dims();
    let mirror_ap = |id: ApId, f: &dyn Fn(Point2) -> Point2| {
        let p = f(s.ap(id).unwrap().pos());
        s.aps.iter().find(|a| a.pos().distance(p) < 1e-12).unwrap()
    };
    let maps: [&dyn Fn(Point2) -> Point2; 3] = [
        &|p| Point2::new(-p.x, p.y),
        &|p| Point2::new(p.x, -p.y),
        &|p| Point2::new(p.y, p.x),
    ];
    for j in 0..ny {
        for i in 0..nx {
            let c = db.cell_center(i, j);
            for f in maps {
                let fc = f(c);
                let image = mirror_ap(db.entry(i, j), f);
                let best = s.aps.iter().map(|a| oracle_power(a, fc, &s)).fold(0.0, f64::max);
                let got = oracle_power(image, fc, &s);
                assert!((got - best).abs() <= 1e-12 * best, "cell ({i},{j})");
            }
        }
    }
}

fn argmax(s: &Scenario, p: Point2) -> ApId {
    let mut aps: Vec<&AccessPoint> = s.aps.iter().collect();
    aps.sort_by_key(|a| a.id);
    let mut best = (aps[0].id, oracle_power(aps[0], p, s));
    for a in &aps[1..] {
        let v = oracle_power(a, p, s);
        if v > best.1 {
            best = (a.id, v);
        }
    }
    best.0
}

#[test]
fn predictive_serving_tracks_argmax_within_one_superframe() {
    let walks = [
        ((-5.5, -3.0), (5.5, -3.0)),
        ((-2.0, -5.5), (-2.0, 5.5)),
        ((-5.0, -4.0), (5.0, 4.0)),
        ((5.5, 1.0), (-5.5, 1.0)),
    ];
    for (a, b) in walks {
        let mut cfg = SimConfig::default();
        cfg.channel.noise_sigma_a = 0.0;
        cfg.prediction.alpha = 1.0;
        cfg.devices[0].trajectory = Trajectory::ConstantVelocityLine {
            from: a.into(),
            to: b.into(),
            speed_mps: 1.0,
        };
        let s = cfg.scenario();
        let run = run_scheme(&cfg, Scheme::Predictive).unwrap();
        let oracle: Vec<ApId> = run.trace.iter().map(|r| argmax(&s, r.truth)).collect();
        for (k, row) in run.trace.iter().enumerate() {
            let serving = row.serving_ap.unwrap();
            let near = k.saturating_sub(1)..=(k + 1).min(oracle.len() - 1);
            assert!(
                oracle[near].contains(&serving),
                "walk {a:?}->{b:?} k={k}: serving {serving}, oracle {:?}",
                &oracle[k.saturating_sub(1)..=(k + 1).min(oracle.len() - 1)]
            );
        }
        assert!(run.events.iter().all(|e| e.disruption_s == 0.0));
    }
}

#[test]
fn cell_gain_accounts_for_all_connected_time() {
    for scheme in [Scheme::Traditional, Scheme::Predictive] {
        let mut cfg = SimConfig::default();
        cfg.channel.noise_sigma_a = 0.0;
        let run = run_scheme(&cfg, scheme).unwrap();
        let dev = &run.metrics.devices[0];
        let rate = cfg.aps[0].data_rate_bps;
        let expected = rate * dev.time.connected_ns as f64 / 1e9;
        assert!((dev.total_bits() - expected).abs() <= 1e-6 * expected, "{scheme}");
    }
}

#[test]
fn channel_model_matches_free_function() {
    let s = default_scenario();
    let model = ChannelModel::for_scenario(&s).unwrap();
    for ap in &s.aps {
        let p = Point2::new(0.7, 2.2);
        assert_eq!(model.ap_power(ap, p), los_power(ap, p, &s.channel, &s.room));
        assert!((oracle_power(ap, p, &s) - model.ap_power(ap, p)).abs() <= 1e-15);
    }
}
