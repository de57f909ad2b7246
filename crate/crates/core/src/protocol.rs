//! Superframe timing, link-switching delay models and the two state machines:
//! the user device (UD) and the coordinator.
//!
//! Time inside the state machines advances in whole superframes. A pipeline
//! that started at superframe `k0` has elapsed `(k - k0) * dt1` at superframe
//! `k`, and a stage of length `t` is done once elapsed >= t. This is the
//! ceiling conversion of real durations to superframe counts; delay and
//! disruption figures carried in events keep their exact real values.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::localization::{estimate_position_with, LocalizationConfig, RssReport};
use crate::prediction::{BestApDatabase, PathReport, Predictor};
use crate::scenario::{AccessPoint, ApId, Scenario};

pub const NANOS_PER_SEC: f64 = 1e9;

/// Rounds seconds to integer nanoseconds.
pub fn to_nanos(s: f64) -> u64 {
    (s * NANOS_PER_SEC).round().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuperframeConfig {
    /// Superframe length dt1 (s): the spacing of measurement reports.
    pub duration_s: f64,
    /// Share of the superframe taken by the beacon and active portion.
    pub active_fraction: f64,
}

impl Default for SuperframeConfig {
    fn default() -> Self {
        Self {
            duration_s: 0.1,
            active_fraction: 0.9,
        }
    }
}

impl SuperframeConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config("superframe duration must be positive".into()));
        }
        if !(self.active_fraction > 0.0 && self.active_fraction < 1.0) {
            return Err(Error::Config("active fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn inactive_s(&self) -> f64 {
        self.duration_s * (1.0 - self.active_fraction)
    }

    pub fn duration_ns(&self) -> u64 {
        to_nanos(self.duration_s)
    }
}

/// Durations (s) of the link-switching stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayParams {
    pub t_scan: f64,
    pub t_decision: f64,
    pub t_discon: f64,
    pub t_linksw: f64,
    pub t_linkasso: f64,
    pub t_sync: f64,
    /// When set, the predictive scheme's combined disconnect/link-switch
    /// stage takes this one shared duration instead of
    /// `max(t_discon, t_linksw)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_discon_linksw_s: Option<f64>,
}

/// Placeholder stage duration used for every component by default.
pub const DEFAULT_STAGE_S: f64 = 0.010;

impl Default for DelayParams {
    fn default() -> Self {
        Self::uniform(DEFAULT_STAGE_S)
    }
}

impl DelayParams {
    pub fn uniform(t: f64) -> Self {
        Self {
            t_scan: t,
            t_decision: t,
            t_discon: t,
            t_linksw: t,
            t_linkasso: t,
            t_sync: t,
            shared_discon_linksw_s: None,
        }
    }

    pub fn zero() -> Self {
        Self::uniform(0.0)
    }

    pub fn check(&self) -> Result<()> {
        let all = [
            self.t_scan,
            self.t_decision,
            self.t_discon,
            self.t_linksw,
            self.t_linkasso,
            self.t_sync,
            self.shared_discon_linksw_s.unwrap_or(0.0),
        ];
        if all.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::Config("delay components must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Scan-based hard handover: every stage runs back to back.
pub fn traditional_delay(p: &DelayParams) -> f64 {
    p.t_scan + p.t_decision + p.t_discon + p.t_linksw + p.t_linkasso + p.t_sync
}

/// Service gap of the scan-based scheme: from the disconnect until sync.
pub fn traditional_disruption(p: &DelayParams) -> f64 {
    p.t_discon + p.t_linksw + p.t_linkasso + p.t_sync
}

/// Coordinator-driven switch: no scan or decision at the device, and the
/// disconnect and new-link setup run concurrently.
pub fn predictive_delay(p: &DelayParams) -> f64 {
    let first = p
        .shared_discon_linksw_s
        .unwrap_or_else(|| p.t_discon.max(p.t_linksw));
    first + p.t_linkasso + p.t_sync
}

/// Gap left when the switch (dt2) outlasts the time to reach the predicted
/// position (dt1).
pub fn predictive_disruption(p: &DelayParams, dt1: f64) -> f64 {
    (predictive_delay(p) - dt1).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Traditional,
    Predictive,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Traditional => "traditional",
            Scheme::Predictive => "predictive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Associated,
    Scanning,
    Switching,
    Disconnected,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure,
    Unnecessary,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandoverEvent {
    pub device_id: u32,
    pub superframe_index: u64,
    pub scheme: Scheme,
    pub from_ap: ApId,
    pub to_ap: ApId,
    pub delay_s: f64,
    pub disruption_s: f64,
    pub outcome: Outcome,
}

impl HandoverEvent {
    pub const CSV_HEADER: &'static str =
        "device_id,superframe_index,scheme,from_ap,to_ap,delay_s,disruption_s,outcome";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.device_id,
            self.superframe_index,
            self.scheme,
            self.from_ap,
            self.to_ap,
            self.delay_s,
            self.disruption_s,
            self.outcome
        )
    }
}

/// Ground truth around the moment a switch takes effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalTruth {
    /// True position when the new link takes over.
    pub arrival_xy: Point2,
    /// Best AP at that position.
    pub best_at_arrival: ApId,
    /// Best AP one superframe later.
    pub best_one_later: ApId,
}

/// Failure when the target is not the true best on arrival or the device
/// lands outside its cell; Unnecessary when the true best reverts to the
/// previous AP one superframe later; Success otherwise.
pub fn classify_outcome(from_ap: ApId, target: &AccessPoint, truth: &ArrivalTruth) -> Outcome {
    let outside = truth.arrival_xy.distance(target.pos()) > target.coverage_radius_m;
    if truth.best_at_arrival != target.id || outside {
        Outcome::Failure
    } else if truth.best_one_later == from_ap {
        Outcome::Unnecessary
    } else {
        Outcome::Success
    }
}

/// Coordinator instruction to drop `from_ap` and associate with `to_ap`,
/// both started at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchCommand {
    pub device_id: u32,
    pub issued_superframe: u64,
    pub from_ap: ApId,
    pub to_ap: ApId,
    /// Predicted position whose table entry produced the command.
    pub predicted_xy: Point2,
}

/// Static inputs of one UD step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UdContext {
    pub scheme: Scheme,
    pub delays: DelayParams,
    pub superframe: SuperframeConfig,
}

impl UdContext {
    fn dt_ns(&self) -> u64 {
        self.superframe.duration_ns()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    /// Scan-based pipeline started at `started`; `target` is set once the
    /// scan and decision stages finish.
    Traditional {
        started: u64,
        from: ApId,
        target: Option<ApId>,
    },
    Predictive {
        started: u64,
        from: ApId,
        target: ApId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UdState {
    pub device_id: u32,
    pub serving_ap: Option<ApId>,
    pub phase: Phase,
    pub rss_threshold_a: f64,
    pending: Option<Pending>,
}

/// A completed switch as seen by the device. Offsets are relative to the
/// superframe the switch started in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchCompletion {
    pub scheme: Scheme,
    pub from_ap: ApId,
    pub to_ap: ApId,
    pub started_superframe: u64,
    pub completed_superframe: u64,
    pub delay_s: f64,
    /// When the old link stops serving.
    pub handover_offset_s: f64,
    /// Gap between the old link stopping and the new one serving.
    pub disruption_s: f64,
}

/// Everything a UD step produced besides the new state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UdOutput {
    /// Measurement report for the coordinator (predictive scheme only).
    pub report: Option<RssReport>,
    /// Association after being disconnected (network entry, not a handover).
    pub associated: Option<ApId>,
    /// Lost every usable signal this superframe.
    pub lost_link: bool,
    /// Old link torn down this step (scan-based scheme), at the given offset
    /// from the pipeline start.
    pub disconnected_for_switch: Option<(u64, f64)>,
    pub completed: Option<SwitchCompletion>,
}

impl UdState {
    pub fn new(device_id: u32, rss_threshold_a: f64) -> Self {
        Self {
            device_id,
            serving_ap: None,
            phase: Phase::Disconnected,
            rss_threshold_a,
            pending: None,
        }
    }

    pub fn associated(device_id: u32, ap: ApId, rss_threshold_a: f64) -> Self {
        Self {
            device_id,
            serving_ap: Some(ap),
            phase: Phase::Associated,
            rss_threshold_a,
            pending: None,
        }
    }

    pub fn is_switching(&self) -> bool {
        self.pending.is_some()
    }

    /// Remaining time (s) of an in-flight switch at superframe `k`.
    pub fn switch_remaining_s(&self, k: u64, ctx: &UdContext) -> Option<f64> {
        let (started, total) = match self.pending? {
            Pending::Traditional { started, .. } => (started, traditional_delay(&ctx.delays)),
            Pending::Predictive { started, .. } => (started, predictive_delay(&ctx.delays)),
        };
        let elapsed = (k - started) as f64 * ctx.superframe.duration_s;
        Some((total - elapsed).max(0.0))
    }
}

fn strongest(readings: &[(ApId, f64)]) -> Option<ApId> {
    let mut best: Option<(ApId, f64)> = None;
    for &(id, rss) in readings {
        if rss <= 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bid, brss)) => rss > brss || (rss == brss && id < bid),
        };
        if better {
            best = Some((id, rss));
        }
    }
    best.map(|(id, _)| id)
}

fn rss_of(readings: &[(ApId, f64)], id: ApId) -> f64 {
    readings
        .iter()
        .find(|(i, _)| *i == id)
        .map_or(0.0, |(_, r)| *r)
}

/// One superframe of the user device, run during the inactive portion.
///
/// `readings` are this superframe's clamped RSS values; `commands` are the
/// coordinator's instructions delivered since the previous step.
pub fn ud_step(
    state: &UdState,
    k: u64,
    readings: &[(ApId, f64)],
    commands: &[SwitchCommand],
    ctx: &UdContext,
) -> (UdState, UdOutput) {
    let mut s = state.clone();
    let mut out = UdOutput::default();

    if ctx.scheme == Scheme::Predictive {
        if let Some(cmd) = commands.iter().find(|c| c.device_id == s.device_id) {
            if s.pending.is_none() && s.serving_ap == Some(cmd.from_ap) && cmd.to_ap != cmd.from_ap {
                s.pending = Some(Pending::Predictive {
                    started: cmd.issued_superframe.min(k),
                    from: cmd.from_ap,
                    target: cmd.to_ap,
                });
            }
        }
    }

    advance_pending(&mut s, k, readings, ctx, &mut out);

    if s.pending.is_none() {
        match s.serving_ap {
            None => {
                if let Some(ap) = strongest(readings) {
                    s.serving_ap = Some(ap);
                    s.phase = Phase::Associated;
                    out.associated = Some(ap);
                } else {
                    s.phase = Phase::Disconnected;
                }
            }
            Some(ap) => {
                let rss = rss_of(readings, ap);
                if rss <= 0.0 {
                    s.serving_ap = None;
                    s.phase = Phase::Disconnected;
                    out.lost_link = true;
                } else if ctx.scheme == Scheme::Traditional
                    && out.completed.is_none()
                    && rss < s.rss_threshold_a
                {
                    s.pending = Some(Pending::Traditional {
                        started: k,
                        from: ap,
                        target: None,
                    });
                    s.phase = Phase::Scanning;
                    advance_pending(&mut s, k, readings, ctx, &mut out);
                }
            }
        }
    }

    if ctx.scheme == Scheme::Predictive {
        out.report = Some(RssReport {
            device_id: s.device_id,
            superframe_index: k,
            readings: readings.to_vec(),
        });
    }
    (s, out)
}

fn advance_pending(s: &mut UdState, k: u64, readings: &[(ApId, f64)], ctx: &UdContext, out: &mut UdOutput) {
    let Some(p) = s.pending else { return };
    let d = &ctx.delays;
    match p {
        Pending::Traditional { started, from, target } => {
            let elapsed = (k - started) * ctx.dt_ns();
            let decide_at = to_nanos(d.t_scan + d.t_decision);
            let mut target = target;
            if target.is_none() {
                if elapsed < decide_at {
                    s.phase = Phase::Scanning;
                    return;
                }
                match strongest(readings) {
                    Some(best) if best != from => {
                        target = Some(best);
                        s.serving_ap = None;
                        s.phase = Phase::Switching;
                        out.disconnected_for_switch = Some((started, d.t_scan + d.t_decision));
                        s.pending = Some(Pending::Traditional {
                            started,
                            from,
                            target,
                        });
                    }
                    _ => {
                        // The scan found nothing better; keep the link.
                        s.pending = None;
                        s.phase = Phase::Associated;
                        return;
                    }
                }
            }
            let to = target.expect("decided above");
            if elapsed >= to_nanos(traditional_delay(d)) {
                s.pending = None;
                s.serving_ap = Some(to);
                s.phase = Phase::Associated;
                out.completed = Some(SwitchCompletion {
                    scheme: Scheme::Traditional,
                    from_ap: from,
                    to_ap: to,
                    started_superframe: started,
                    completed_superframe: k,
                    delay_s: traditional_delay(d),
                    handover_offset_s: d.t_scan + d.t_decision,
                    disruption_s: traditional_disruption(d),
                });
            }
        }
        Pending::Predictive { started, from, target } => {
            let elapsed = (k - started) * ctx.dt_ns();
            let dt1 = ctx.superframe.duration_s;
            if k > started && elapsed >= to_nanos(predictive_delay(d)) {
                s.pending = None;
                s.serving_ap = Some(target);
                s.phase = Phase::Associated;
                out.completed = Some(SwitchCompletion {
                    scheme: Scheme::Predictive,
                    from_ap: from,
                    to_ap: target,
                    started_superframe: started,
                    completed_superframe: k,
                    delay_s: predictive_delay(d),
                    handover_offset_s: dt1,
                    disruption_s: predictive_disruption(d, dt1),
                });
            } else {
                s.phase = Phase::Switching;
                // The old link keeps serving until the device reaches the
                // predicted position one superframe after the command.
                s.serving_ap = if elapsed < ctx.dt_ns() { Some(from) } else { None };
            }
        }
    }
}

/// Per-device view held by the coordinator.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRecord {
    pub path: PathReport,
    pub serving_ap: Option<ApId>,
    /// Superframe before which no new command is issued (switch in flight).
    pub busy_until: u64,
}

/// Per-device result of a coordinator step.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDecision {
    pub device_id: u32,
    pub estimate: Option<Point2>,
    pub predicted: Option<Point2>,
    pub error: Option<Error>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoordinatorOutput {
    pub commands: Vec<SwitchCommand>,
    pub decisions: Vec<DeviceDecision>,
}

/// Coordinator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinatorConfig {
    pub predictor: Predictor,
    pub localization: LocalizationConfig,
    pub path_capacity: usize,
    pub delays: DelayParams,
    pub superframe: SuperframeConfig,
}

/// Central controller: localizes devices from their reports, extrapolates
/// their next position and commands switches from the best-AP table.
#[derive(Debug, Clone)]
pub struct Coordinator {
    pub db: BestApDatabase,
    pub devices: BTreeMap<u32, DeviceRecord>,
    pub config: CoordinatorConfig,
}

impl Coordinator {
    pub fn new(db: BestApDatabase, config: CoordinatorConfig) -> Self {
        Self {
            db,
            devices: BTreeMap::new(),
            config,
        }
    }

    fn record(&mut self, device_id: u32) -> &mut DeviceRecord {
        let cap = self.config.path_capacity;
        self.devices.entry(device_id).or_insert_with(|| DeviceRecord {
            path: PathReport::new(device_id, cap),
            serving_ap: None,
            busy_until: 0,
        })
    }

    /// The device (re)associated on its own, outside a commanded switch.
    pub fn notify_association(&mut self, device_id: u32, ap: Option<ApId>) {
        self.record(device_id).serving_ap = ap;
    }

    /// Superframes a commanded switch keeps the device busy.
    fn switch_superframes(&self) -> u64 {
        let dt = self.config.superframe.duration_ns();
        let d = to_nanos(predictive_delay(&self.config.delays));
        d.div_ceil(dt).max(1)
    }

    /// Processes every report of superframe `k`. Reports are handled in
    /// device-id order; devices do not interact.
    pub fn step(&mut self, k: u64, reports: &[RssReport], scenario: &Scenario) -> CoordinatorOutput {
        let mut sorted: Vec<&RssReport> = reports.iter().collect();
        sorted.sort_by_key(|r| r.device_id);
        let busy = self.switch_superframes();
        let mut out = CoordinatorOutput::default();
        for report in sorted {
            let id = report.device_id;
            let loc = self.config.localization;
            let predictor = self.config.predictor;
            let room = scenario.room.clone();
            let est = estimate_position_with(report, scenario, loc);
            let rec = self.record(id);
            let mut decision = DeviceDecision {
                device_id: id,
                estimate: None,
                predicted: None,
                error: None,
            };
            let xy = match est {
                Ok(e) => e.xy,
                Err(e) => {
                    decision.error = Some(e);
                    out.decisions.push(decision);
                    continue;
                }
            };
            decision.estimate = Some(xy);
            if let Err(e) = rec.path.push(report.superframe_index, xy) {
                decision.error = Some(e);
                out.decisions.push(decision);
                continue;
            }
            let target_xy = match predictor.predict(&rec.path) {
                Ok(p) => {
                    decision.predicted = Some(p);
                    room.clamp(p)
                }
                Err(Error::InsufficientHistory { .. }) => xy,
                Err(e) => {
                    decision.error = Some(e);
                    out.decisions.push(decision);
                    continue;
                }
            };
            let serving = rec.serving_ap;
            let in_flight = k < rec.busy_until;
            let best = self.db.lookup(target_xy);
            if let (Some(from), false) = (serving, in_flight) {
                if best != from {
                    let rec = self.record(id);
                    rec.serving_ap = Some(best);
                    rec.busy_until = k + busy;
                    out.commands.push(SwitchCommand {
                        device_id: id,
                        issued_superframe: k,
                        from_ap: from,
                        to_ap: best,
                        predicted_xy: target_xy,
                    });
                }
            }
            out.decisions.push(decision);
        }
        out
    }

    /// Feeds a classified switch back into the best-AP table.
    pub fn record_outcome(&mut self, xy: Point2, outcome: Outcome, scenario: &Scenario) -> Result<bool> {
        self.db.record_outcome(xy, outcome != Outcome::Failure, scenario)
    }
}
