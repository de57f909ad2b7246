//! Simulation configuration: TOML schema, `--set` overrides, validation and
//! the content hash stamped on output files.
//!
//! ```toml
//! [room]        # width_m, depth_m, height_m, receiver_plane_separation_m
//! [channel]     # lambertian_order, fov_semi_angle_rad, noise_sigma_a, ...
//! [[ap]]        # id, x, y, tx_power_w, luminous_intensity_cd, data_rate_bps, coverage_radius_m
//! [superframe]  # duration_s, active_fraction
//! [delays]      # t_scan .. t_sync, optional shared_discon_linksw_s
//! [protocol]    # optional rss_threshold_a, threshold_distance_m
//! [prediction]  # method = "alpha" | "least_squares", alpha, history, cell_size_m, path_capacity
//! [localization]
//! [simulation]  # duration_s, seed, scheme = "traditional" | "predictive" | "both"
//! [[device]]    # id, model = "fixed_waypoints" | "constant_velocity_line" | "random_waypoint", ...
//! ```
//!
//! Every section may be omitted; missing keys take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::los_power;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::localization::LocalizationConfig;
use crate::mobility::Trajectory;
use crate::prediction::{Predictor, DEFAULT_ALPHA, DEFAULT_CELL_SIZE_M, DEFAULT_PATH_CAPACITY};
use crate::protocol::{DelayParams, Scheme, SuperframeConfig};
use crate::scenario::{default_scenario, AccessPoint, ChannelParams, Room, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSelection {
    Traditional,
    Predictive,
    Both,
}

impl SchemeSelection {
    pub fn schemes(self) -> &'static [Scheme] {
        match self {
            SchemeSelection::Traditional => &[Scheme::Traditional],
            SchemeSelection::Predictive => &[Scheme::Predictive],
            SchemeSelection::Both => &[Scheme::Traditional, Scheme::Predictive],
        }
    }
}

pub const DEFAULT_THRESHOLD_DISTANCE_M: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Serving-link photocurrent (A) below which the scan-based scheme starts
    /// scanning. Derived from `threshold_distance_m` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rss_threshold_a: Option<f64>,
    /// Horizontal distance from an AP at which the derived threshold sits.
    pub threshold_distance_m: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            rss_threshold_a: None,
            threshold_distance_m: DEFAULT_THRESHOLD_DISTANCE_M,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Alpha,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionConfig {
    pub method: PredictorKind,
    pub alpha: f64,
    /// Points in the least-squares fit.
    pub history: usize,
    pub cell_size_m: f64,
    pub path_capacity: usize,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            method: PredictorKind::Alpha,
            alpha: DEFAULT_ALPHA,
            history: 3,
            cell_size_m: DEFAULT_CELL_SIZE_M,
            path_capacity: DEFAULT_PATH_CAPACITY,
        }
    }
}

impl PredictionConfig {
    pub fn predictor(&self) -> Predictor {
        match self.method {
            PredictorKind::Alpha => Predictor::Alpha { alpha: self.alpha },
            PredictorKind::LeastSquares => Predictor::LeastSquares {
                history: self.history,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub duration_s: f64,
    pub seed: u64,
    pub scheme: SchemeSelection,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration_s: 12.0,
            seed: 1,
            scheme: SchemeSelection::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub id: u32,
    #[serde(flatten)]
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub room: Room,
    pub channel: ChannelParams,
    #[serde(rename = "ap")]
    pub aps: Vec<AccessPoint>,
    pub superframe: SuperframeConfig,
    pub delays: DelayParams,
    pub protocol: ProtocolConfig,
    pub prediction: PredictionConfig,
    pub localization: LocalizationConfig,
    pub simulation: SimulationConfig,
    #[serde(rename = "device")]
    pub devices: Vec<DeviceConfig>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::with_scenario(default_scenario())
    }
}

/// Scenario-only view used for hashing map and table outputs.
#[derive(Serialize)]
struct ScenarioDoc<'a> {
    room: &'a Room,
    channel: &'a ChannelParams,
    ap: &'a [AccessPoint],
}

fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

impl SimConfig {
    /// Default settings around `scenario`: one device walking from (-5, 0)
    /// to (5, 0) at 1 m/s for 12 s.
    pub fn with_scenario(scenario: Scenario) -> Self {
        Self {
            room: scenario.room,
            channel: scenario.channel,
            aps: scenario.aps,
            superframe: SuperframeConfig::default(),
            delays: DelayParams::default(),
            protocol: ProtocolConfig::default(),
            prediction: PredictionConfig::default(),
            localization: LocalizationConfig::default(),
            simulation: SimulationConfig::default(),
            devices: vec![DeviceConfig {
                id: 1,
                trajectory: Trajectory::ConstantVelocityLine {
                    from: Point2::new(-5.0, 0.0),
                    to: Point2::new(5.0, 0.0),
                    speed_mps: 1.0,
                },
            }],
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            room: self.room.clone(),
            aps: self.aps.clone(),
            channel: self.channel.clone(),
        }
    }

    pub fn set_scenario(&mut self, s: Scenario) {
        self.room = s.room;
        self.channel = s.channel;
        self.aps = s.aps;
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides::<&str>(text, &[])
    }

    /// Parses a TOML document, applies `key=value` overrides in order, then
    /// validates.
    pub fn from_toml_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o.as_ref())?;
        }
        let cfg: SimConfig = toml::Value::Table(doc.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let canonical = toml::Value::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(key) = unknown_keys(&toml::Value::Table(doc), &canonical, "").into_iter().next() {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// Defaults with overrides applied.
    pub fn default_with_overrides<S: AsRef<str>>(overrides: &[S]) -> Result<Self> {
        Self::from_toml_with_overrides(&Self::default().to_toml(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let scenario = self.scenario();
        scenario.check()?;
        self.superframe.check()?;
        self.delays.check()?;
        let p = &self.prediction;
        if !(p.alpha >= 0.0 && p.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and non-negative, got {}", p.alpha)));
        }
        if p.history < 2 {
            return Err(Error::Config("least-squares history needs at least 2 points".into()));
        }
        if !(p.cell_size_m > 0.0 && p.cell_size_m.is_finite()) {
            return Err(Error::Config("cell size must be positive".into()));
        }
        let need = if p.method == PredictorKind::LeastSquares { p.history } else { 2 };
        if p.path_capacity < need {
            return Err(Error::Config(format!("path capacity must be at least {need}")));
        }
        let s = &self.simulation;
        if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if self.devices.is_empty() {
            return Err(Error::Config("at least one device is required".into()));
        }
        let mut ids: Vec<u32> = self.devices.iter().map(|d| d.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate device id".into()));
        }
        for d in &self.devices {
            d.trajectory
                .check(&self.room)
                .map_err(|e| Error::Config(format!("device {}: {}", d.id, strip(e))))?;
        }
        let pr = &self.protocol;
        if let Some(t) = pr.rss_threshold_a {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config("rss threshold must be positive".into()));
            }
        }
        if !(pr.threshold_distance_m >= 0.0 && pr.threshold_distance_m.is_finite()) {
            return Err(Error::Config("threshold distance must be non-negative".into()));
        }
        Ok(())
    }

    /// Threshold for the scan-based scheme: configured, or the noiseless
    /// photocurrent at `threshold_distance_m` from the lowest-id AP.
    pub fn rss_threshold_a(&self) -> f64 {
        if let Some(t) = self.protocol.rss_threshold_a {
            return t;
        }
        let scenario = self.scenario();
        let ap = scenario.aps_by_id()[0];
        let rx = Point2::new(ap.x + self.protocol.threshold_distance_m, ap.y);
        self.channel.responsivity_a_per_w * los_power(ap, rx, &self.channel, &self.room)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        short_hash(&self.to_toml())
    }

    /// Hash of the scenario sections only; map and table outputs depend on
    /// nothing else.
    pub fn scenario_hash(&self) -> String {
        let doc = ScenarioDoc {
            room: &self.room,
            channel: &self.channel,
            ap: &self.aps,
        };
        short_hash(&toml::to_string(&doc).expect("scenario is representable in TOML"))
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Applies one `a.b.c=value` override. Numeric segments index arrays
/// (`ap.0.x=1`). Values are parsed as TOML, falling back to a bare string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let segs: Vec<&str> = key.split('.').collect();
    let mut cur = doc;
    for (i, seg) in segs.iter().enumerate() {
        let last = i + 1 == segs.len();
        if last {
            cur.insert((*seg).to_string(), value);
            return Ok(());
        }
        let next = cur
            .entry((*seg).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match next {
            toml::Value::Table(t) => t,
            toml::Value::Array(arr) => {
                let idx: usize = segs[i + 1]
                    .parse()
                    .map_err(|_| Error::Config(format!("`{seg}` is a list; index it like `{seg}.0`")))?;
                let rest = &segs[i + 2..];
                let item = arr
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("`{seg}` has no entry {idx}")))?;
                let toml::Value::Table(t) = item else {
                    return Err(Error::Config(format!("`{seg}.{idx}` is not a table")));
                };
                if rest.is_empty() {
                    return Err(Error::Config(format!("override `{key}` names a whole table")));
                }
                let sub = format!("{}={raw}", rest.join("."));
                return apply_override(t, &sub);
            }
            _ => return Err(Error::Config(format!("`{seg}` is not a table"))),
        };
    }
    Ok(())
}

/// Keys present in `input` but absent from `canonical`, as dotted paths.
fn unknown_keys(input: &toml::Value, canonical: &toml::Value, prefix: &str) -> Vec<String> {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match (input, canonical) {
        (toml::Value::Table(a), toml::Value::Table(b)) => a
            .iter()
            .flat_map(|(k, v)| match b.get(k) {
                Some(cv) => unknown_keys(v, cv, &join(k)),
                None => vec![join(k)],
            })
            .collect(),
        (toml::Value::Array(a), toml::Value::Array(b)) => a
            .iter()
            .zip(b)
            .enumerate()
            .flat_map(|(i, (v, cv))| unknown_keys(v, cv, &join(&i.to_string())))
            .collect(),
        _ => Vec::new(),
    }
}
