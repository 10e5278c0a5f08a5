//! The tuning decision engine.
//!
//! Every `period` seconds the tuner looks at the metrics of the observation
//! window that just ended and produces exactly one decision: hold, apply a
//! ×2/÷2 step to one of the two parameters, or revert the previous step. The
//! two parameters are tuned alternately; a step direction is repeated while it
//! keeps paying off and inverted when it stops. A sudden delivery collapse
//! while the client keeps producing data is treated as contention and blamed
//! on the tuner's own last action, which is undone exactly.
//!
//! The engine is a pure function over `(config, state, window)`: no clock, no
//! I/O, no randomness.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which of the two I/O-path parameters a step targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TunedParam {
    /// `max_pages_per_rpc`: pages packed into one bulk RPC.
    PagesPerRpc,
    /// `max_rpcs_in_flight`: outstanding RPCs allowed per client.
    RpcsInFlight,
}

impl TunedParam {
    pub fn other(self) -> Self {
        match self {
            TunedParam::PagesPerRpc => TunedParam::RpcsInFlight,
            TunedParam::RpcsInFlight => TunedParam::PagesPerRpc,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TunedParam::PagesPerRpc => "max_pages_per_rpc",
            TunedParam::RpcsInFlight => "max_rpcs_in_flight",
        }
    }

    /// Slot in the per-parameter direction memory.
    pub fn index(self) -> usize {
        match self {
            TunedParam::PagesPerRpc => 0,
            TunedParam::RpcsInFlight => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max_pages_per_rpc" => Some(TunedParam::PagesPerRpc),
            "max_rpcs_in_flight" => Some(TunedParam::RpcsInFlight),
            _ => None,
        }
    }
}

impl fmt::Display for TunedParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A multiplicative step: double or halve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Multiply,
    Divide,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Multiply => Direction::Divide,
            Direction::Divide => Direction::Multiply,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Multiply => "multiply",
            Direction::Divide => "divide",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "multiply" => Some(Direction::Multiply),
            "divide" => Some(Direction::Divide),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive power-of-two bounds for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: u32,
    pub max: u32,
}

impl Bounds {
    pub const fn new(min: u32, max: u32) -> Self {
        Bounds { min, max }
    }

    pub fn contains(&self, v: u32) -> bool {
        v >= self.min && v <= self.max
    }

    fn validate(&self, key: &str) -> Result<(), ConfigError> {
        if !self.min.is_power_of_two() || !self.max.is_power_of_two() {
            return Err(ConfigError::Invalid {
                key: key.to_string(),
                reason: format!("bounds [{}, {}] must both be powers of two", self.min, self.max),
            });
        }
        if self.min > self.max {
            return Err(ConfigError::Invalid {
                key: key.to_string(),
                reason: format!("min {} exceeds max {}", self.min, self.max),
            });
        }
        Ok(())
    }

    /// Power-of-two values covered by the bounds, ascending.
    pub fn grid(&self) -> Vec<u32> {
        let mut v = Vec::new();
        let mut x = self.min;
        while x <= self.max {
            v.push(x);
            if x > u32::MAX / 2 {
                break;
            }
            x *= 2;
        }
        v
    }
}

/// The two tuned values. Both are powers of two within their bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TunableParams {
    pub pages_per_rpc: u32,
    pub rpcs_in_flight: u32,
}

impl TunableParams {
    pub const fn new(pages_per_rpc: u32, rpcs_in_flight: u32) -> Self {
        TunableParams { pages_per_rpc, rpcs_in_flight }
    }

    pub fn get(&self, p: TunedParam) -> u32 {
        match p {
            TunedParam::PagesPerRpc => self.pages_per_rpc,
            TunedParam::RpcsInFlight => self.rpcs_in_flight,
        }
    }

    pub fn set(&mut self, p: TunedParam, v: u32) {
        match p {
            TunedParam::PagesPerRpc => self.pages_per_rpc = v,
            TunedParam::RpcsInFlight => self.rpcs_in_flight = v,
        }
    }

    pub fn validate(&self, cfg: &TunerConfig) -> Result<(), ConfigError> {
        for (p, bounds) in [
            (TunedParam::PagesPerRpc, cfg.mppr_bounds),
            (TunedParam::RpcsInFlight, cfg.mrif_bounds),
        ] {
            let v = self.get(p);
            if !v.is_power_of_two() {
                return Err(ConfigError::Invalid {
                    key: p.name().to_string(),
                    reason: format!("{v} is not a power of two"),
                });
            }
            if !bounds.contains(v) {
                return Err(ConfigError::Invalid {
                    key: p.name().to_string(),
                    reason: format!("{v} outside bounds [{}, {}]", bounds.min, bounds.max),
                });
            }
        }
        Ok(())
    }
}

impl Default for TunableParams {
    fn default() -> Self {
        TunableParams::new(256, 8)
    }
}

/// Metrics of one observation window, derived from two snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    /// Backlog at the end of the window (bytes).
    pub dirty_bytes: u64,
    /// Pages entering the dirty cache per second.
    pub page_cache_rate: f64,
    /// RPCs generated per second.
    pub rpc_gen_rate: f64,
    /// Bytes acknowledged per second.
    pub transfer_bw: f64,
    /// Window length in seconds.
    pub window_len: f64,
}

/// One applied (or clamped) step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningAction {
    pub param: TunedParam,
    pub direction: Direction,
    pub pre_value: u32,
    pub post_value: u32,
}

/// What a tuning turn decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// No I/O is flowing; leave everything alone.
    Hold,
    /// A ×2/÷2 step (possibly clamped at a bound).
    Apply(TuningAction),
    /// The previous action was blamed for a collapse and undone.
    Revert { param: TunedParam, restored_value: u32 },
}

/// Outcome of comparing two windows' bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Improvement {
    Improved,
    NotImproved,
}

/// Tuner configuration. Defaults: 10 s turns, 2% improvement margin, a
/// contention test of "bandwidth down 30% while generation holds at 90% and
/// backlog grows", 1 MB/s idle floor, pages 16..4096, RPCs in flight 1..256.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    /// Tuning period in seconds.
    pub period_s: u64,
    /// Relative bandwidth gain required to count a step as an improvement.
    pub improve_eps: f64,
    /// Relative bandwidth drop that qualifies as a collapse.
    pub contention_drop: f64,
    /// Fraction of the previous RPC generation rate that must persist for a
    /// collapse to be read as contention rather than a workload change.
    pub supply_hold: f64,
    /// Below this many bytes/second (for both delivery and page caching) the
    /// window counts as idle.
    pub idle_threshold: u64,
    pub mppr_bounds: Bounds,
    pub mrif_bounds: Bounds,
    pub initial_direction: Direction,
    pub initial_param: TunedParam,
    /// Page size used to convert the page-cache rate to bytes/second.
    pub page_size: u64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            period_s: 10,
            improve_eps: 0.02,
            contention_drop: 0.30,
            supply_hold: 0.90,
            idle_threshold: 1_000_000,
            mppr_bounds: Bounds::new(16, 4096),
            mrif_bounds: Bounds::new(1, 256),
            initial_direction: Direction::Multiply,
            initial_param: TunedParam::PagesPerRpc,
            page_size: crate::PAGE_SIZE,
        }
    }
}

impl TunerConfig {
    pub fn bounds(&self, p: TunedParam) -> Bounds {
        match p {
            TunedParam::PagesPerRpc => self.mppr_bounds,
            TunedParam::RpcsInFlight => self.mrif_bounds,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.period_s == 0 {
            return Err(ConfigError::Invalid {
                key: "period_s".into(),
                reason: "must be positive".into(),
            });
        }
        if !(self.improve_eps > 0.0 && self.improve_eps < 1.0) {
            return Err(ConfigError::Invalid {
                key: "improve_eps".into(),
                reason: "must be in (0, 1)".into(),
            });
        }
        if !(self.contention_drop > 0.0 && self.contention_drop < 1.0) {
            return Err(ConfigError::Invalid {
                key: "contention_drop".into(),
                reason: "must be in (0, 1)".into(),
            });
        }
        if !(self.supply_hold > 0.0 && self.supply_hold <= 1.0) {
            return Err(ConfigError::Invalid {
                key: "supply_hold".into(),
                reason: "must be in (0, 1]".into(),
            });
        }
        if self.page_size == 0 {
            return Err(ConfigError::Invalid {
                key: "page_size".into(),
                reason: "must be positive".into(),
            });
        }
        self.mppr_bounds.validate("mppr bounds")?;
        self.mrif_bounds.validate("mrif bounds")?;
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid {key}: {reason}")]
    Invalid { key: String, reason: String },
}

/// Full tuner state carried from turn to turn.
///
/// `directions` keeps one remembered direction per parameter: when a turn
/// observes the window that followed a parameter's step it records whether
/// repeating or inverting that step is the right move *for that parameter*.
/// The alternation cursor (`next_param`) then picks which memory the next
/// step consults.
#[derive(Debug, Clone, PartialEq)]
pub struct TunerState {
    pub turn: u64,
    pub next_param: TunedParam,
    pub last_action: Option<TuningAction>,
    pub prev_window: Option<WindowMetrics>,
    pub params: TunableParams,
    pub directions: [Direction; 2],
}

/// Build the state for turn zero.
pub fn init_state(cfg: &TunerConfig, initial: TunableParams) -> Result<TunerState, ConfigError> {
    cfg.validate()?;
    initial.validate(cfg)?;
    Ok(TunerState {
        turn: 0,
        next_param: cfg.initial_param,
        last_action: None,
        prev_window: None,
        params: initial,
        directions: [cfg.initial_direction; 2],
    })
}

/// One ×2/÷2 step, clamped to bounds. Stepping past a bound returns the value
/// unchanged, so the result is always a power of two inside the bounds.
pub fn apply_step(value: u32, direction: Direction, bounds: Bounds) -> u32 {
    match direction {
        Direction::Multiply => {
            let doubled = value.saturating_mul(2);
            if doubled > bounds.max { value.min(bounds.max).max(bounds.min) } else { doubled }
        }
        Direction::Divide => {
            let halved = value / 2;
            if halved < bounds.min { value.min(bounds.max).max(bounds.min) } else { halved }
        }
    }
}

/// Did bandwidth rise by at least `eps` relative to the previous window?
/// Exact ties and sub-eps gains do not count.
pub fn evaluate_improvement(prev_bw: f64, cur_bw: f64, eps: f64) -> Improvement {
    if cur_bw > prev_bw && cur_bw >= prev_bw * (1.0 + eps) {
        Improvement::Improved
    } else {
        Improvement::NotImproved
    }
}

/// Contention signature: delivery collapsed while supply held and the backlog
/// kept growing. A collapse that takes the generation rate down with it is a
/// workload change, not contention.
pub fn detect_contention(prev: &WindowMetrics, cur: &WindowMetrics, cfg: &TunerConfig) -> bool {
    cur.transfer_bw < (1.0 - cfg.contention_drop) * prev.transfer_bw
        && cur.rpc_gen_rate >= cfg.supply_hold * prev.rpc_gen_rate
        && cur.dirty_bytes >= prev.dirty_bytes
}

fn is_idle(window: &WindowMetrics, cfg: &TunerConfig) -> bool {
    let idle = cfg.idle_threshold as f64;
    window.transfer_bw < idle && window.page_cache_rate * (cfg.page_size as f64) < idle
}

/// Run one tuning turn. Decision rules, evaluated top-down:
///
/// 1. idle window → hold;
/// 2. no action yet → bootstrap a step in the configured direction;
/// 3. contention → revert the last action exactly;
/// 4. otherwise → step the scheduled parameter in its remembered direction
///    and advance the alternation cursor.
///
/// Before rules 2–4, the window pair around the last action settles that
/// parameter's direction memory: repeat on improvement, invert otherwise.
pub fn plan_action(
    cfg: &TunerConfig,
    state: &TunerState,
    window: &WindowMetrics,
) -> (TunerState, Decision) {
    let mut next = state.clone();
    next.turn = state.turn + 1;

    // Rule 1: nothing is flowing, so there is nothing to learn from.
    if is_idle(window, cfg) {
        next.prev_window = Some(*window);
        return (next, Decision::Hold);
    }

    // Settle the direction memory of the parameter that acted last: the
    // current window is the one that followed its step.
    if let (Some(last), Some(prev)) = (&state.last_action, &state.prev_window) {
        let settled = match evaluate_improvement(prev.transfer_bw, window.transfer_bw, cfg.improve_eps)
        {
            Improvement::Improved => last.direction,
            Improvement::NotImproved => last.direction.opposite(),
        };
        next.directions[last.param.index()] = settled;
    }

    let decision = match &state.last_action {
        // Rule 2: first step.
        None => {
            let param = state.next_param;
            let pre = state.params.get(param);
            let post = apply_step(pre, cfg.initial_direction, cfg.bounds(param));
            let action = TuningAction {
                param,
                direction: cfg.initial_direction,
                pre_value: pre,
                post_value: post,
            };
            next.params.set(param, post);
            next.last_action = Some(action);
            next.next_param = param.other();
            Decision::Apply(action)
        }
        Some(last) => {
            let contended = state
                .prev_window
                .map(|prev| detect_contention(&prev, window, cfg))
                .unwrap_or(false);
            if contended {
                // Rule 3: blame the last action and undo it. The revert is
                // recorded as the new last action with the inverted
                // direction; the alternation cursor does not move.
                let replaced = state.params.get(last.param);
                let action = TuningAction {
                    param: last.param,
                    direction: last.direction.opposite(),
                    pre_value: replaced,
                    post_value: last.pre_value,
                };
                next.params.set(last.param, last.pre_value);
                next.last_action = Some(action);
                Decision::Revert { param: last.param, restored_value: last.pre_value }
            } else {
                // Rule 4: step the scheduled parameter.
                let param = state.next_param;
                let direction = next.directions[param.index()];
                let pre = state.params.get(param);
                let post = apply_step(pre, direction, cfg.bounds(param));
                let action = TuningAction { param, direction, pre_value: pre, post_value: post };
                next.params.set(param, post);
                next.last_action = Some(action);
                next.next_param = param.other();
                Decision::Apply(action)
            }
        }
    };

    next.prev_window = Some(*window);
    debug_assert!(next.params.validate(cfg).is_ok());
    (next, decision)
}
