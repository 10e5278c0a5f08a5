//! Experiment descriptions.
//!
//! A scenario names the clients (each with a phase schedule and a dirty-cache
//! budget), one shared server model, the simulation clock, the tuner
//! configuration, and the starting parameter values. The on-disk form is TOML
//! with keys mirroring the structs here; committed templates double as the
//! schema reference.

use serde::Deserialize;
use thiserror::Error;

use crate::tuner::{Bounds, Direction, TunableParams, TunedParam, TunerConfig};
use crate::workload::{self, Op, Pattern, PhaseSchedule, WorkloadSpec};

/// Default per-client dirty cache budget (256 MiB).
pub const DEFAULT_MAX_DIRTY: u64 = 256 << 20;

/// Client-side age after which a short dirty run is flushed as a partial RPC.
pub const FLUSH_AGE_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub clients: Vec<ClientSpec>,
    pub server: ServerSpec,
    pub sim: SimParams,
    pub tuner: TunerSettings,
    pub defaults: TunableParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientSpec {
    pub id: String,
    pub max_dirty_bytes: u64,
    pub schedule: PhaseSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerSpec {
    /// Sustained service rate in bytes/second.
    pub capacity: u64,
    /// Fixed service cost per RPC in seconds.
    pub rpc_overhead_s: f64,
    /// Network round trip in seconds.
    pub rtt_s: f64,
}

impl ServerSpec {
    pub fn rpc_overhead_ns(&self) -> u64 {
        (self.rpc_overhead_s * 1e9).round() as u64
    }

    pub fn rtt_ns(&self) -> u64 {
        (self.rtt_s * 1e9).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimParams {
    pub duration_s: u64,
    pub tick_ms: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunerSettings {
    pub enabled: bool,
    pub config: TunerConfig,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid {key}: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { key: key.into(), reason: reason.into() }
}

// ---------------------------------------------------------------------------
// Raw TOML shape
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    sim: RawSim,
    server: RawServer,
    defaults: RawDefaults,
    #[serde(default)]
    tuner: RawTuner,
    #[serde(default)]
    clients: Vec<RawClient>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    duration_s: u64,
    #[serde(default = "default_tick_ms")]
    tick_ms: u64,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_tick_ms() -> u64 {
    10
}

fn default_seed() -> u64 {
    42
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawServer {
    capacity: u64,
    rpc_overhead_s: f64,
    rtt_s: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    max_pages_per_rpc: u32,
    max_rpcs_in_flight: u32,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTuner {
    enabled: Option<bool>,
    period_s: Option<u64>,
    improve_eps: Option<f64>,
    contention_drop: Option<f64>,
    supply_hold: Option<f64>,
    idle_threshold: Option<u64>,
    mppr_min: Option<u32>,
    mppr_max: Option<u32>,
    mrif_min: Option<u32>,
    mrif_max: Option<u32>,
    initial_direction: Option<String>,
    initial_param: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClient {
    id: String,
    max_dirty_bytes: Option<u64>,
    phases: Vec<RawPhase>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhase {
    start_s: u64,
    pattern: Pattern,
    op: Op,
    request_size: u64,
    #[serde(default = "default_streams")]
    streams: u32,
    rate_limit: Option<u64>,
    whole_file: Option<u64>,
    extent: Option<u64>,
}

fn default_streams() -> u32 {
    1
}

// ---------------------------------------------------------------------------
// Parsing and validation
// ---------------------------------------------------------------------------

/// Parse and validate a scenario from TOML text.
pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text)?;
    build(raw)
}

fn build(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    if raw.sim.duration_s == 0 {
        return Err(invalid("sim.duration_s", "must be > 0"));
    }
    if raw.sim.tick_ms == 0 {
        return Err(invalid("sim.tick_ms", "must be > 0"));
    }
    if raw.server.capacity == 0 {
        return Err(invalid("server.capacity", "must be > 0"));
    }
    if raw.server.rpc_overhead_s < 0.0 {
        return Err(invalid("server.rpc_overhead_s", "must be >= 0"));
    }
    if raw.server.rtt_s < 0.0 {
        return Err(invalid("server.rtt_s", "must be >= 0"));
    }

    let defaults = TunerConfig::default();
    let t = &raw.tuner;
    let initial_direction = match &t.initial_direction {
        None => defaults.initial_direction,
        Some(s) => Direction::parse(s)
            .ok_or_else(|| invalid("tuner.initial_direction", format!("unknown value `{s}`")))?,
    };
    let initial_param = match &t.initial_param {
        None => defaults.initial_param,
        Some(s) => TunedParam::parse(s)
            .ok_or_else(|| invalid("tuner.initial_param", format!("unknown value `{s}`")))?,
    };
    let config = TunerConfig {
        period_s: t.period_s.unwrap_or(defaults.period_s),
        improve_eps: t.improve_eps.unwrap_or(defaults.improve_eps),
        contention_drop: t.contention_drop.unwrap_or(defaults.contention_drop),
        supply_hold: t.supply_hold.unwrap_or(defaults.supply_hold),
        idle_threshold: t.idle_threshold.unwrap_or(defaults.idle_threshold),
        mppr_bounds: Bounds::new(
            t.mppr_min.unwrap_or(defaults.mppr_bounds.min),
            t.mppr_max.unwrap_or(defaults.mppr_bounds.max),
        ),
        mrif_bounds: Bounds::new(
            t.mrif_min.unwrap_or(defaults.mrif_bounds.min),
            t.mrif_max.unwrap_or(defaults.mrif_bounds.max),
        ),
        initial_direction,
        initial_param,
        page_size: crate::PAGE_SIZE,
    };
    config
        .validate()
        .map_err(|e| invalid("tuner", e.to_string()))?;

    let period_ms = config.period_s * 1000;
    if !period_ms.is_multiple_of(raw.sim.tick_ms) {
        return Err(invalid(
            "sim.tick_ms",
            format!("{} must divide the tuner period ({period_ms} ms)", raw.sim.tick_ms),
        ));
    }

    let params = TunableParams::new(raw.defaults.max_pages_per_rpc, raw.defaults.max_rpcs_in_flight);
    params
        .validate(&config)
        .map_err(|e| invalid("defaults", e.to_string()))?;

    if raw.clients.is_empty() {
        return Err(invalid("clients", "at least one client is required"));
    }

    let mut clients = Vec::with_capacity(raw.clients.len());
    for (ci, rc) in raw.clients.into_iter().enumerate() {
        let key = |field: &str| format!("clients[{ci}].{field}");
        if rc.id.is_empty() || rc.id.contains(['\n', ',']) {
            return Err(invalid(key("id"), "must be a non-empty id without commas"));
        }
        if clients.iter().any(|c: &ClientSpec| c.id == rc.id) {
            return Err(invalid(key("id"), format!("duplicate client id `{}`", rc.id)));
        }
        let mut phases = Vec::with_capacity(rc.phases.len());
        for (pi, rp) in rc.phases.into_iter().enumerate() {
            let pkey = |field: &str| format!("clients[{ci}].phases[{pi}].{field}");
            let spec = WorkloadSpec {
                pattern: rp.pattern,
                op: rp.op,
                request_size: rp.request_size,
                streams: rp.streams,
                rate_limit: rp.rate_limit,
                whole_file: rp.whole_file,
                extent: rp.extent.unwrap_or(workload::DEFAULT_EXTENT),
            };
            spec.validate().map_err(|e| invalid(pkey("request_size"), e.to_string()))?;
            phases.push((rp.start_s, spec));
        }
        let schedule =
            PhaseSchedule::new(phases).map_err(|e| invalid(key("phases"), e.to_string()))?;
        clients.push(ClientSpec {
            id: rc.id,
            max_dirty_bytes: rc.max_dirty_bytes.unwrap_or(DEFAULT_MAX_DIRTY),
            schedule,
        });
    }

    Ok(Scenario {
        clients,
        server: ServerSpec {
            capacity: raw.server.capacity,
            rpc_overhead_s: raw.server.rpc_overhead_s,
            rtt_s: raw.server.rtt_s,
        },
        sim: SimParams {
            duration_s: raw.sim.duration_s,
            tick_ms: raw.sim.tick_ms,
            seed: raw.sim.seed,
        },
        tuner: TunerSettings { enabled: t.enabled.unwrap_or(true), config },
        defaults: params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[sim]
duration_s = 60

[server]
capacity = 1250000000
rpc_overhead_s = 0.0004
rtt_s = 0.0005

[defaults]
max_pages_per_rpc = 256
max_rpcs_in_flight = 8

[[clients]]
id = "node1"

[[clients.phases]]
start_s = 0
pattern = "sequential"
op = "write"
request_size = 1048576
"#;

    #[test]
    fn parses_minimal_scenario() {
        let s = from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.clients.len(), 1);
        assert_eq!(s.clients[0].max_dirty_bytes, DEFAULT_MAX_DIRTY);
        assert!(s.tuner.enabled);
        assert_eq!(s.tuner.config.period_s, 10);
        assert_eq!(s.sim.tick_ms, 10);
        assert_eq!(s.defaults, TunableParams::new(256, 8));
    }

    #[test]
    fn unknown_key_names_the_key() {
        let text = MINIMAL.replace("[server]", "[server]\nbogus_key = 1");
        let err = from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "error should name the key: {err}");
    }

    #[test]
    fn tick_must_divide_period() {
        let text = MINIMAL.replace("duration_s = 60", "duration_s = 60\ntick_ms = 7");
        let err = from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("tick_ms"), "{err}");
    }

    #[test]
    fn defaults_must_satisfy_bounds() {
        let text = MINIMAL.replace("max_pages_per_rpc = 256", "max_pages_per_rpc = 255");
        assert!(from_toml_str(&text).is_err());
    }

    #[test]
    fn requires_a_client() {
        let end = MINIMAL.find("[[clients]]").unwrap();
        let err = from_toml_str(&MINIMAL[..end]).unwrap_err().to_string();
        assert!(err.contains("clients"), "{err}");
    }

    #[test]
    fn duplicate_client_ids_rejected() {
        let dup = format!(
            "{MINIMAL}\n[[clients]]\nid = \"node1\"\n[[clients.phases]]\nstart_s = 0\npattern = \"random\"\nop = \"write\"\nrequest_size = 8192\n"
        );
        let err = from_toml_str(&dup).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }
}
