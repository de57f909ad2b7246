//! Superframe-synchronous simulation loop and its metrics.
//!
//! Each superframe `k` starts at `k * dt1`. For every device, in id order,
//! the engine moves the ground truth, samples one noisy RSS value per AP,
//! and runs the device state machine. Under the predictive scheme the
//! coordinator then processes all reports of `k`; its commands reach the
//! devices at `k + 1`.
//!
//! Link state is logged in continuous time (integer nanoseconds):
//!
//! - scan-based switch started at `t_k`: old link until
//!   `t_k + t_scan + t_decision`, disrupted until `t_k + traditional_delay`;
//! - commanded switch issued at `t_k`: old link until `t_k + dt1`, disrupted
//!   until `t_k + predictive_delay` when that is later, new link after.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::channel::ChannelModel;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::mobility::{cell_gain, Path};
use crate::prediction::build_database;
use crate::protocol::{
    classify_outcome, predictive_delay, to_nanos, traditional_delay, ArrivalTruth, Coordinator,
    CoordinatorConfig, HandoverEvent, Outcome, Phase, Scheme, SwitchCommand, UdContext, UdState,
    NANOS_PER_SEC,
};
use crate::rng::{substream, SimRng, Stream};
use crate::scenario::{AccessPoint, ApId, Scenario};
use crate::timeline::{ConnectivityLog, LinkState, LogBuilder, TimeSplit};

pub const TRACE_HEADER: &str = "k,device,truth_x,truth_y,est_x,est_y,serving_ap,phase";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub device_id: u32,
    pub truth: Point2,
    pub estimate: Option<Point2>,
    pub serving_ap: Option<ApId>,
    pub phase: Phase,
}

impl TraceRow {
    pub fn csv_row(&self) -> String {
        let (ex, ey) = match self.estimate {
            Some(p) => (p.x.to_string(), p.y.to_string()),
            None => (String::new(), String::new()),
        };
        let ap = self.serving_ap.map(|a| a.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.k, self.device_id, self.truth.x, self.truth.y, ex, ey, ap, self.phase
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSummary {
    pub device_id: u32,
    /// Cell gain (bits) per AP, in id order.
    pub cell_gain_bits: Vec<(ApId, f64)>,
    pub time: TimeSplit,
}

impl DeviceSummary {
    pub fn total_bits(&self) -> f64 {
        self.cell_gain_bits.iter().map(|(_, b)| b).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeMetrics {
    pub scheme: Scheme,
    pub handovers: usize,
    pub unnecessary: usize,
    pub failures: usize,
    /// Zero when there were no handovers.
    pub mean_delay_s: f64,
    pub max_delay_s: f64,
    pub total_disruption_s: f64,
    pub devices: Vec<DeviceSummary>,
    /// Coordinator-side errors; `None` for the scan-based scheme, which does
    /// not localize.
    pub localization_rms_m: Option<f64>,
    pub prediction_rms_m: Option<f64>,
    /// Superframes in which a device report could not be localized.
    pub estimate_failures: usize,
}

impl SchemeMetrics {
    pub fn total_cell_gain_bits(&self) -> f64 {
        self.devices.iter().map(DeviceSummary::total_bits).sum()
    }

    fn rows(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let secs = |ns: u64| (ns as f64 / NANOS_PER_SEC).to_string();
        let sum = |f: fn(&TimeSplit) -> u64| self.devices.iter().map(|d| f(&d.time)).sum::<u64>();
        let mut rows = vec![
            ("handovers".to_string(), self.handovers.to_string()),
            ("unnecessary".to_string(), self.unnecessary.to_string()),
            ("failures".to_string(), self.failures.to_string()),
            ("mean_delay_s".to_string(), self.mean_delay_s.to_string()),
            ("max_delay_s".to_string(), self.max_delay_s.to_string()),
            ("total_disruption_s".to_string(), self.total_disruption_s.to_string()),
            ("cell_gain_bits".to_string(), self.total_cell_gain_bits().to_string()),
            ("localization_rms_m".to_string(), opt(self.localization_rms_m)),
            ("prediction_rms_m".to_string(), opt(self.prediction_rms_m)),
            ("estimate_failures".to_string(), self.estimate_failures.to_string()),
            ("connected_s".to_string(), secs(sum(|t| t.connected_ns))),
            ("disrupted_s".to_string(), secs(sum(|t| t.disrupted_ns))),
            ("disconnected_s".to_string(), secs(sum(|t| t.disconnected_ns))),
        ];
        for d in &self.devices {
            rows.push((format!("cell_gain_bits.device{}", d.device_id), d.total_bits().to_string()));
        }
        rows
    }
}

fn metrics_csv(cols: &[&SchemeMetrics], extra: &[(String, Vec<String>)]) -> String {
    let mut out = String::from("metric");
    for m in cols {
        write!(out, ",{}", m.scheme).unwrap();
    }
    out.push('\n');
    let tables: Vec<Vec<(String, String)>> = cols.iter().map(|m| m.rows()).collect();
    for (i, (name, _)) in tables[0].iter().enumerate() {
        out.push_str(name);
        for t in &tables {
            write!(out, ",{}", t[i].1).unwrap();
        }
        out.push('\n');
    }
    for (name, vals) in extra {
        out.push_str(name);
        for v in vals {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn metrics_text(cols: &[&SchemeMetrics]) -> String {
    let mut out = String::new();
    for m in cols {
        writeln!(out, "[{}]", m.scheme).unwrap();
        for (name, v) in m.rows() {
            writeln!(out, "  {name:<28} {v}").unwrap();
        }
    }
    out
}

/// Metrics of every scheme that was run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub schemes: Vec<SchemeMetrics>,
}

impl SimMetrics {
    pub fn get(&self, scheme: Scheme) -> Option<&SchemeMetrics> {
        self.schemes.iter().find(|m| m.scheme == scheme)
    }

    /// `metric,<scheme>...` table.
    pub fn to_csv(&self) -> String {
        metrics_csv(&self.schemes.iter().collect::<Vec<_>>(), &[])
    }

    pub fn to_text(&self) -> String {
        metrics_text(&self.schemes.iter().collect::<Vec<_>>())
    }
}

/// Everything one scheme produced.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub scheme: Scheme,
    pub events: Vec<HandoverEvent>,
    pub trace: Vec<TraceRow>,
    pub logs: BTreeMap<u32, ConnectivityLog>,
    pub paths: BTreeMap<u32, Path>,
    pub metrics: SchemeMetrics,
}

impl SchemeRun {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.trace {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: SimMetrics,
    pub runs: Vec<SchemeRun>,
}

impl SimOutput {
    pub fn run_for(&self, scheme: Scheme) -> Option<&SchemeRun> {
        self.runs.iter().find(|r| r.scheme == scheme)
    }

    /// All handover events, schemes in run order.
    pub fn events(&self) -> impl Iterator<Item = &HandoverEvent> {
        self.runs.iter().flat_map(|r| r.events.iter())
    }

    pub fn events_csv(&self) -> String {
        let mut out = String::from(HandoverEvent::CSV_HEADER);
        out.push('\n');
        for e in self.events() {
            out.push_str(&e.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Side-by-side metrics of both schemes on identical inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub traditional: SchemeMetrics,
    pub predictive: SchemeMetrics,
    /// `predictive_delay / traditional_delay` of the configured delays.
    pub delay_ratio: f64,
}

impl Comparison {
    /// `metric,traditional,predictive` table; the last row holds the delay
    /// ratio relative to the scan-based scheme.
    pub fn to_csv(&self) -> String {
        metrics_csv(
            &[&self.traditional, &self.predictive],
            &[("delay_ratio".to_string(), vec!["1".to_string(), self.delay_ratio.to_string()])],
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = metrics_text(&[&self.traditional, &self.predictive]);
        writeln!(out, "delay ratio (predictive / traditional): {}", self.delay_ratio).unwrap();
        out
    }
}

/// True best AP at `p`; a target tied with the maximum counts as best.
fn best_preferring(model: &ChannelModel<'_>, aps: &[&AccessPoint], p: Point2, prefer: ApId) -> ApId {
    let mut best: Option<(ApId, f64)> = None;
    for ap in aps {
        let pw = model.ap_power(ap, p);
        let better = match best {
            None => true,
            Some((id, b)) => pw > b || (pw == b && ap.id == prefer && id != prefer),
        };
        if better {
            best = Some((ap.id, pw));
        }
    }
    best.expect("scenario has access points").0
}

struct Device {
    id: u32,
    path: Path,
    rng: SimRng,
    state: UdState,
    log: LogBuilder,
    inbox: Vec<SwitchCommand>,
    /// Predicted position of each issued command, by issue superframe.
    command_xy: BTreeMap<u64, Point2>,
}

fn secs(ns: u64) -> f64 {
    ns as f64 / NANOS_PER_SEC
}

/// Runs one scheme over the whole configured duration.
pub fn run_scheme(cfg: &SimConfig, scheme: Scheme) -> Result<SchemeRun> {
    cfg.validate()?;
    let scenario: Scenario = cfg.scenario();
    let model = ChannelModel::for_scenario(&scenario)?;
    let aps = scenario.aps_by_id();
    let dt_ns = cfg.superframe.duration_ns();
    let end_ns = to_nanos(cfg.simulation.duration_s);
    let n_superframes = end_ns.div_ceil(dt_ns);
    let ctx = UdContext {
        scheme,
        delays: cfg.delays,
        superframe: cfg.superframe,
    };
    let threshold = cfg.rss_threshold_a();
    let seed = cfg.simulation.seed;

    let mut coordinator = match scheme {
        Scheme::Predictive => Some(Coordinator::new(
            build_database(&scenario, cfg.prediction.cell_size_m)?,
            CoordinatorConfig {
                predictor: cfg.prediction.predictor(),
                localization: cfg.localization,
                path_capacity: cfg.prediction.path_capacity,
                delays: cfg.delays,
                superframe: cfg.superframe,
            },
        )),
        Scheme::Traditional => None,
    };

    let mut specs: Vec<_> = cfg.devices.iter().collect();
    specs.sort_by_key(|d| d.id);
    let mut devices: Vec<Device> = specs
        .iter()
        .map(|d| Device {
            id: d.id,
            path: d.trajectory.materialize(
                &scenario.room,
                cfg.simulation.duration_s,
                &mut substream(seed, d.id, Stream::Mobility),
            ),
            rng: substream(seed, d.id, Stream::Noise),
            state: UdState::new(d.id, threshold),
            log: LogBuilder::new(LinkState::Disconnected),
            inbox: Vec::new(),
            command_xy: BTreeMap::new(),
        })
        .collect();
    let index: BTreeMap<u32, usize> = devices.iter().enumerate().map(|(i, d)| (d.id, i)).collect();

    let mut events = Vec::new();
    let mut trace = Vec::new();
    // (due superframe, cell position, outcome) waiting to reach the table.
    let mut feedback: Vec<(u64, Point2, Outcome)> = Vec::new();
    let mut loc_sq = (0.0, 0usize);
    let mut pred_sq = (0.0, 0usize);
    let mut estimate_failures = 0usize;

    for k in 0..n_superframes {
        let t_k = k * dt_ns;
        let mut reports = Vec::new();
        let trace_start = trace.len();
        for dev in devices.iter_mut() {
            let truth = dev.path.position_at(secs(t_k));
            let readings: Vec<(ApId, f64)> = aps
                .iter()
                .map(|ap| (ap.id, model.sample(ap, truth, &mut dev.rng).rss_a()))
                .collect();
            let commands = std::mem::take(&mut dev.inbox);
            let (state, out) = crate::protocol::ud_step(&dev.state, k, &readings, &commands, &ctx);

            if let Some(ap) = out.associated {
                dev.log.transition(t_k, LinkState::Connected(ap));
            }
            if out.lost_link {
                dev.log.transition(t_k, LinkState::Disconnected);
            }
            if let Some((started, offset)) = out.disconnected_for_switch {
                dev.log.transition(started * dt_ns + to_nanos(offset), LinkState::Disrupted);
            }
            if let Some(c) = out.completed {
                let t_s = c.started_superframe * dt_ns;
                let serve_at = match c.scheme {
                    Scheme::Traditional => t_s + to_nanos(c.delay_s),
                    Scheme::Predictive => {
                        let drop_at = t_s + to_nanos(c.handover_offset_s);
                        let serve_at = drop_at.max(t_s + to_nanos(c.delay_s));
                        if serve_at > drop_at {
                            dev.log.transition(drop_at, LinkState::Disrupted);
                        }
                        serve_at
                    }
                };
                dev.log.transition(serve_at, LinkState::Connected(c.to_ap));

                let arrival_xy = dev.path.position_at(secs(serve_at));
                let later_xy = dev.path.position_at(secs(serve_at + dt_ns));
                let truth_at = ArrivalTruth {
                    arrival_xy,
                    best_at_arrival: best_preferring(&model, &aps, arrival_xy, c.to_ap),
                    best_one_later: best_preferring(&model, &aps, later_xy, c.to_ap),
                };
                let target = scenario.ap(c.to_ap).ok_or(Error::UnknownAp(c.to_ap))?;
                let outcome = classify_outcome(c.from_ap, target, &truth_at);
                events.push(HandoverEvent {
                    device_id: dev.id,
                    superframe_index: c.started_superframe,
                    scheme: c.scheme,
                    from_ap: c.from_ap,
                    to_ap: c.to_ap,
                    delay_s: c.delay_s,
                    disruption_s: c.disruption_s,
                    outcome,
                });
                if let Some(xy) = dev.command_xy.remove(&c.started_superframe) {
                    // Observable once the superframe after arrival has run.
                    let due = (serve_at + dt_ns).div_ceil(dt_ns).max(k + 1);
                    feedback.push((due, xy, outcome));
                }
            }
            dev.state = state;
            if let Some(c) = coordinator.as_mut() {
                if !dev.state.is_switching() {
                    c.notify_association(dev.id, dev.state.serving_ap);
                }
            }
            if let Some(r) = out.report {
                reports.push(r);
            }
            trace.push(TraceRow {
                k,
                device_id: dev.id,
                truth,
                estimate: None,
                serving_ap: dev.state.serving_ap,
                phase: dev.state.phase,
            });
        }

        let Some(coord) = coordinator.as_mut() else { continue };
        let (due, later): (Vec<_>, Vec<_>) = feedback.drain(..).partition(|(d, _, _)| *d <= k);
        feedback = later;
        for (_, xy, outcome) in due {
            coord.record_outcome(xy, outcome, &scenario)?;
        }
        let out = coord.step(k, &reports, &scenario);
        for d in out.decisions {
            let i = index[&d.device_id];
            let row = &mut trace[trace_start + i];
            if let Some(est) = d.estimate {
                row.estimate = Some(est);
                loc_sq.0 += est.distance_sq(row.truth);
                loc_sq.1 += 1;
            }
            if let Some(pred) = d.predicted {
                let next = devices[i].path.position_at(secs(t_k + dt_ns));
                pred_sq.0 += pred.distance_sq(next);
                pred_sq.1 += 1;
            }
            if d.error.is_some() {
                estimate_failures += 1;
            }
        }
        for cmd in out.commands {
            let dev = &mut devices[index[&cmd.device_id]];
            dev.command_xy.insert(cmd.issued_superframe, cmd.predicted_xy);
            dev.inbox.push(cmd);
        }
    }

    let mut logs = BTreeMap::new();
    let mut paths = BTreeMap::new();
    let mut summaries = Vec::new();
    for dev in devices {
        let log = dev.log.finish(end_ns);
        summaries.push(DeviceSummary {
            device_id: dev.id,
            cell_gain_bits: aps.iter().map(|ap| (ap.id, cell_gain(&dev.path, ap, &log))).collect(),
            time: log.split(),
        });
        logs.insert(dev.id, log);
        paths.insert(dev.id, dev.path);
    }

    let rms = |(s, n): (f64, usize)| (n > 0).then(|| (s / n as f64).sqrt());
    let delays: Vec<f64> = events.iter().map(|e| e.delay_s).collect();
    let metrics = SchemeMetrics {
        scheme,
        handovers: events.len(),
        unnecessary: events.iter().filter(|e| e.outcome == Outcome::Unnecessary).count(),
        failures: events.iter().filter(|e| e.outcome == Outcome::Failure).count(),
        mean_delay_s: if delays.is_empty() { 0.0 } else { delays.iter().sum::<f64>() / delays.len() as f64 },
        max_delay_s: delays.iter().copied().fold(0.0, f64::max),
        total_disruption_s: events.iter().map(|e| e.disruption_s).sum(),
        devices: summaries,
        localization_rms_m: if scheme == Scheme::Predictive { rms(loc_sq) } else { None },
        prediction_rms_m: if scheme == Scheme::Predictive { rms(pred_sq) } else { None },
        estimate_failures,
    };
    Ok(SchemeRun {
        scheme,
        events,
        trace,
        logs,
        paths,
        metrics,
    })
}

/// Runs the scheme(s) selected in the config.
pub fn run(cfg: &SimConfig) -> Result<SimOutput> {
    let runs = cfg
        .simulation
        .scheme
        .schemes()
        .iter()
        .map(|&s| run_scheme(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimOutput {
        metrics: SimMetrics {
            schemes: runs.iter().map(|r| r.metrics.clone()).collect(),
        },
        runs,
    })
}

/// Runs both schemes on the same trajectories and seed.
pub fn compare(cfg: &SimConfig) -> Result<(Comparison, SimOutput)> {
    let mut both = cfg.clone();
    both.simulation.scheme = crate::config::SchemeSelection::Both;
    let out = run(&both)?;
    let get = |s| out.metrics.get(s).cloned().expect("both schemes ran");
    let trad = traditional_delay(&cfg.delays);
    let cmp = Comparison {
        traditional: get(Scheme::Traditional),
        predictive: get(Scheme::Predictive),
        delay_ratio: if trad > 0.0 { predictive_delay(&cfg.delays) / trad } else { 1.0 },
    };
    Ok((cmp, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SchemeSelection;
    use crate::mobility::Trajectory;

    fn walk_config() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.channel.noise_sigma_a = 0.0;
        cfg.prediction.alpha = 1.0;
        cfg
    }

    #[test]
    fn stationary_device_never_switches() {
        let mut cfg = SimConfig::default();
        cfg.devices[0].trajectory = Trajectory::FixedWaypoints {
            waypoints: vec![Point2::new(0.3, -0.2)],
            speed_mps: 0.0,
        };
        let out = run(&cfg).unwrap();
        for m in &out.metrics.schemes {
            assert_eq!(m.handovers, 0, "{}", m.scheme);
        }
    }

    #[test]
    fn walk_predictive_two_clean_switches() {
        let out = run_scheme(&walk_config(), Scheme::Predictive).unwrap();
        let pairs: Vec<_> = out.events.iter().map(|e| (e.from_ap, e.to_ap)).collect();
        assert_eq!(pairs, vec![(ApId(5), ApId(9)), (ApId(9), ApId(6))]);
        assert!(out.events.iter().all(|e| e.disruption_s == 0.0 && e.outcome == Outcome::Success));
        assert_eq!(out.metrics.total_disruption_s, 0.0);
        assert_eq!(out.metrics.localization_rms_m.map(|r| r < 1e-6), Some(true));
    }

    #[test]
    fn walk_traditional() {
        let out = run_scheme(&walk_config(), Scheme::Traditional).unwrap();
        assert_eq!(out.events.len(), 2);
        for e in &out.events {
            assert_eq!(e.delay_s, traditional_delay(&DelayParams::default()));
        }
        assert!(out.metrics.total_disruption_s > 0.0);
        assert_eq!(out.metrics.localization_rms_m, None);
    }

    use crate::protocol::DelayParams;

    #[test]
    fn time_is_conserved() {
        let mut cfg = SimConfig::default();
        cfg.simulation.duration_s = 30.05;
        cfg.devices.push(crate::config::DeviceConfig {
            id: 7,
            trajectory: Trajectory::RandomWaypoint {
                start: Point2::new(-5.5, 5.5),
                speed_mps: 1.5,
            },
        });
        cfg.delays = DelayParams::uniform(0.07);
        let out = run(&cfg).unwrap();
        for r in &out.runs {
            for log in r.logs.values() {
                assert_eq!(log.split().total_ns(), 30_050_000_000);
            }
        }
    }

    #[test]
    fn slow_predictive_switch_disrupts() {
        let mut cfg = walk_config();
        cfg.delays = DelayParams::uniform(0.05);
        let out = run_scheme(&cfg, Scheme::Predictive).unwrap();
        assert_eq!(out.events.len(), 2);
        for e in &out.events {
            assert!((e.disruption_s - 0.05).abs() < 1e-12);
        }
        let split = out.logs[&1].split();
        assert_eq!(split.disrupted_ns, 100_000_000);
    }

    #[test]
    fn compare_is_repeatable() {
        let cfg = SimConfig::default();
        let (a, oa) = compare(&cfg).unwrap();
        let (b, ob) = compare(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(oa.events_csv(), ob.events_csv());
        assert!(a.to_csv().starts_with("metric,traditional,predictive\n"));
        assert!((a.delay_ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adding_a_device_keeps_others_noise() {
        let mut one = SimConfig::default();
        one.simulation.scheme = SchemeSelection::Predictive;
        let mut two = one.clone();
        two.devices.push(crate::config::DeviceConfig {
            id: 2,
            trajectory: Trajectory::ConstantVelocityLine {
                from: Point2::new(0.0, -5.0),
                to: Point2::new(0.0, 5.0),
                speed_mps: 1.0,
            },
        });
        let a = run(&one).unwrap();
        let b = run(&two).unwrap();
        let rows = |o: &SimOutput| -> Vec<TraceRow> {
            o.runs[0].trace.iter().filter(|r| r.device_id == 1).cloned().collect()
        };
        assert_eq!(rows(&a), rows(&b));
    }
}
