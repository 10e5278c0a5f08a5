//! Deterministic fixed-timestep simulation of N clients sharing one storage
//! server.
//!
//! Each 10 ms tick runs, in order: workload admission into the dirty cache
//! (writes block when the client's pool budget is exhausted; reads become
//! RPCs directly), RPC formation (full RPCs as soon as enough contiguous
//! pages exist, aged runs flushed as partials), dispatch into the bounded
//! in-flight window, and the server. The server and network are simulated
//! event-accurately *within* the tick: RPCs arrive half an RTT after
//! dispatch, are served FIFO at `rpc_overhead + size/capacity` seconds each,
//! and acknowledgements landing inside the tick immediately refill the
//! window. Tuning turns run at period boundaries on snapshots of the
//! cumulative counters, exactly the data an external replay would see.
//!
//! Identical `(scenario, seed)` produce bit-identical results.

mod client;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

pub use client::Rpc;
use client::ClientState;

use crate::metrics::{self, Snapshot};
use crate::scenario::{Scenario, FLUSH_AGE_MS};
use crate::tuner::{self, Decision, TunableParams, WindowMetrics};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {location}: {reason}")]
    InvalidScenario { location: String, reason: String },
    #[error("unknown client `{0}`")]
    UnknownClient(String),
}

/// One observation window of one client, with the decision taken at its end.
#[derive(Debug, Clone)]
pub struct WindowRow {
    pub client_idx: usize,
    /// Window end, in seconds.
    pub time_s: u64,
    /// Parameter values in effect during the window.
    pub params: TunableParams,
    pub metrics: WindowMetrics,
    pub decision: Decision,
    /// Tuning turn number (1-based).
    pub turn: u64,
}

/// Mean bandwidth of one schedule phase for one client.
#[derive(Debug, Clone, Copy)]
pub struct PhaseBw {
    pub phase: usize,
    pub start_s: u64,
    pub end_s: u64,
    pub bytes: u64,
}

impl PhaseBw {
    pub fn mean_bw(&self) -> f64 {
        self.bytes as f64 / (self.end_s - self.start_s) as f64
    }
}

/// Everything a run produces.
pub struct SimResult {
    pub client_ids: Vec<String>,
    /// Per client, one snapshot at t=0 and one per tuning period.
    pub snapshots: Vec<Vec<Snapshot>>,
    /// All windows in emission order (time, then client index).
    pub windows: Vec<WindowRow>,
    pub phase_bw: Vec<Vec<PhaseBw>>,
    /// Total acked bytes per client.
    pub total_bytes: Vec<u64>,
    /// Acked bytes per client over the final half of the run.
    pub steady_bytes: Vec<u64>,
    pub duration_s: u64,
}

impl SimResult {
    pub fn steady_len_s(&self) -> f64 {
        self.duration_s as f64 / 2.0
    }

    /// Mean steady-state bandwidth summed over all clients (bytes/second).
    pub fn steady_total_bw(&self) -> f64 {
        self.steady_bytes.iter().sum::<u64>() as f64 / self.steady_len_s()
    }

    pub fn client_index(&self, id: &str) -> Option<usize> {
        self.client_ids.iter().position(|c| c == id)
    }

    /// Final parameter values of a client (from its last snapshot).
    pub fn final_params(&self, client_idx: usize) -> TunableParams {
        let s = self.snapshots[client_idx].last().expect("at least the t=0 snapshot");
        TunableParams::new(s.max_pages_per_rpc, s.max_rpcs_in_flight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Arrival(Rpc),
    ServerFree,
    Ack(Rpc),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    at_ns: u64,
    seq: u64,
    ev: Ev,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at_ns, self.seq).cmp(&(other.at_ns, other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct ServerState {
    queue: VecDeque<Rpc>,
    busy: bool,
    overhead_ns: u64,
    rtt_half_ns: u64,
    capacity: u64,
    /// Service time consumed in the current tick; reset each tick.
    consumed_ns: u64,
}

impl ServerState {
    fn cost_ns(&self, bytes: u64) -> u64 {
        self.overhead_ns + ((bytes as u128 * 1_000_000_000) / self.capacity as u128) as u64
    }
}

/// A running simulation instance. Stepwise control is exposed so tests can
/// change parameters mid-run and read snapshots at arbitrary ticks.
pub struct Simulation {
    clients: Vec<ClientState>,
    server: ServerState,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    tick: u64,
    tick_ms: u64,
    total_ticks: u64,
    period_ticks: u64,
    flush_age_ticks: u64,
    tuner_enabled: bool,
    tuner_cfg: tuner::TunerConfig,
    // accumulating outputs
    snapshots: Vec<Vec<Snapshot>>,
    windows: Vec<WindowRow>,
    phase_marks: Vec<Vec<(usize, u64, u64)>>, // (phase, start_s, bytes_at_start)
    steady_bytes_start: Vec<u64>,
    duration_s: u64,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        let invalid = |location: &str, reason: String| SimError::InvalidScenario {
            location: location.to_string(),
            reason,
        };
        if scenario.clients.is_empty() {
            return Err(invalid("clients", "at least one client required".into()));
        }
        if scenario.sim.duration_s == 0 || scenario.sim.tick_ms == 0 {
            return Err(invalid("sim", "duration and tick must be positive".into()));
        }
        let period_ms = scenario.tuner.config.period_s * 1000;
        if !period_ms.is_multiple_of(scenario.sim.tick_ms) {
            return Err(invalid("sim.tick_ms", "must divide the tuner period".into()));
        }
        scenario
            .defaults
            .validate(&scenario.tuner.config)
            .map_err(|e| invalid("defaults", e.to_string()))?;
        for (i, c) in scenario.clients.iter().enumerate() {
            for (pi, (_, spec)) in c.schedule.phases().iter().enumerate() {
                if spec.request_size % crate::PAGE_SIZE != 0 {
                    return Err(invalid(
                        &format!("clients[{i}].phases[{pi}].request_size"),
                        format!("must be a multiple of the page size ({})", crate::PAGE_SIZE),
                    ));
                }
            }
        }

        let tick_ms = scenario.sim.tick_ms;
        let clients: Vec<ClientState> = scenario
            .clients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut st =
                    ClientState::new(c, i, scenario.defaults, scenario.sim.seed, tick_ms);
                if scenario.tuner.enabled {
                    st.tuner_state = Some(
                        tuner::init_state(&scenario.tuner.config, scenario.defaults)
                            .map_err(|e| invalid("tuner", e.to_string()))?,
                    );
                }
                Ok(st)
            })
            .collect::<Result<_, SimError>>()?;

        let n = clients.len();
        let mut sim = Simulation {
            clients,
            server: ServerState {
                queue: VecDeque::new(),
                busy: false,
                overhead_ns: scenario.server.rpc_overhead_ns(),
                rtt_half_ns: scenario.server.rtt_ns() / 2,
                capacity: scenario.server.capacity,
                consumed_ns: 0,
            },
            events: BinaryHeap::new(),
            seq: 0,
            tick: 0,
            tick_ms,
            total_ticks: scenario.sim.duration_s * 1000 / tick_ms,
            period_ticks: period_ms / tick_ms,
            flush_age_ticks: FLUSH_AGE_MS / tick_ms,
            tuner_enabled: scenario.tuner.enabled,
            tuner_cfg: scenario.tuner.config,
            snapshots: vec![Vec::new(); n],
            windows: Vec::new(),
            phase_marks: vec![Vec::new(); n],
            steady_bytes_start: vec![0; n],
            duration_s: scenario.sim.duration_s,
        };
        for ci in 0..n {
            let snap = sim.clients[ci].make_snapshot(0);
            sim.clients[ci].prev_snapshot = snap.clone();
            sim.snapshots[ci].push(snap);
            sim.phase_marks[ci].push((0, 0, 0));
        }
        Ok(sim)
    }

    /// Change a client's parameters immediately. Formed and in-flight RPCs
    /// are unaffected; formation and dispatch use the new values from the
    /// next tick.
    pub fn set_params(&mut self, client_id: &str, params: TunableParams) -> Result<(), SimError> {
        params
            .validate(&self.tuner_cfg)
            .map_err(|e| SimError::InvalidScenario { location: "params".into(), reason: e.to_string() })?;
        let c = self
            .clients
            .iter_mut()
            .find(|c| c.id == client_id)
            .ok_or_else(|| SimError::UnknownClient(client_id.to_string()))?;
        c.params = params;
        Ok(())
    }

    /// Counters of a client at the current instant.
    pub fn snapshot(&self, client_id: &str) -> Result<Snapshot, SimError> {
        let c = self
            .clients
            .iter()
            .find(|c| c.id == client_id)
            .ok_or_else(|| SimError::UnknownClient(client_id.to_string()))?;
        Ok(c.make_snapshot(self.tick * self.tick_ms))
    }

    pub fn time_s(&self) -> f64 {
        (self.tick * self.tick_ms) as f64 / 1000.0
    }

    fn push_event(&mut self, at_ns: u64, ev: Ev) {
        self.seq += 1;
        self.events.push(Reverse(Event { at_ns, seq: self.seq, ev }));
    }

    fn try_start_service(&mut self, now_ns: u64) {
        if self.server.busy {
            return;
        }
        if let Some(rpc) = self.server.queue.pop_front() {
            let cost = self.server.cost_ns(rpc.bytes);
            self.server.busy = true;
            let finish = now_ns + cost;
            self.push_event(finish, Ev::ServerFree);
            self.push_event(finish + self.server.rtt_half_ns, Ev::Ack(rpc));
        }
    }

    fn dispatch_ready(&mut self, ci: usize, now_ns: u64) {
        while let Some(rpc) = self.clients[ci].take_for_dispatch() {
            self.push_event(now_ns + self.server.rtt_half_ns, Ev::Arrival(rpc));
        }
    }

    /// Advance the simulation by `n` ticks (clamped to the configured
    /// duration).
    pub fn step_ticks(&mut self, n: u64) {
        let target = (self.tick + n).min(self.total_ticks);
        while self.tick < target {
            self.run_tick();
        }
    }

    fn run_tick(&mut self) {
        let tick = self.tick;
        let tick_ns = self.tick_ms * 1_000_000;
        let t0_ns = tick * tick_ns;
        let end_ns = t0_ns + tick_ns;
        let t_s = tick * self.tick_ms / 1000;

        // 1. workload arrivals (+ phase switches), 2. age-based flushing,
        // 3. window fill at the tick start.
        for ci in 0..self.clients.len() {
            self.clients[ci].maybe_switch_phase(t_s);
            if self.clients[ci].phase_idx + 1 > self.phase_marks[ci].len() {
                let bytes = self.clients[ci].bytes_transferred_total;
                let phase = self.clients[ci].phase_idx;
                self.phase_marks[ci].push((phase, t_s, bytes));
            }
            self.clients[ci].workload_step(tick);
            self.clients[ci].flush_step(tick, self.flush_age_ticks);
            self.dispatch_ready(ci, t0_ns);
        }

        // 4. network + server, event-accurate inside the tick.
        self.server.consumed_ns = 0;
        while let Some(Reverse(ev)) = self.events.peek().copied() {
            if ev.at_ns >= end_ns {
                break;
            }
            self.events.pop();
            match ev.ev {
                Ev::Arrival(rpc) => {
                    self.server.queue.push_back(rpc);
                    self.try_start_service(ev.at_ns);
                }
                Ev::ServerFree => {
                    self.server.busy = false;
                    self.try_start_service(ev.at_ns);
                }
                Ev::Ack(rpc) => {
                    let ci = rpc.client as usize;
                    self.clients[ci].acked(&rpc);
                    self.dispatch_ready(ci, ev.at_ns);
                }
            }
        }

        if cfg!(debug_assertions) {
            for c in &self.clients {
                c.assert_conservation();
            }
        }

        self.tick += 1;

        if self.tick == self.total_ticks / 2 {
            for ci in 0..self.clients.len() {
                self.steady_bytes_start[ci] = self.clients[ci].bytes_transferred_total;
            }
        }

        // 5. tuning turn at period boundaries.
        if self.tick.is_multiple_of(self.period_ticks) {
            self.period_boundary();
        }
    }

    fn period_boundary(&mut self) {
        let t_ms = self.tick * self.tick_ms;
        for ci in 0..self.clients.len() {
            let snap = self.clients[ci].make_snapshot(t_ms);
            let window = metrics::derive_window(&self.clients[ci].prev_snapshot, &snap)
                .expect("internal snapshots are well-formed");
            let params_during = TunableParams::new(
                self.clients[ci].prev_snapshot.max_pages_per_rpc,
                self.clients[ci].prev_snapshot.max_rpcs_in_flight,
            );
            let (decision, turn) = if self.tuner_enabled {
                let state = self.clients[ci].tuner_state.take().expect("tuner state");
                let (next, decision) = tuner::plan_action(&self.tuner_cfg, &state, &window);
                self.clients[ci].params = next.params;
                let turn = next.turn;
                self.clients[ci].tuner_state = Some(next);
                (decision, turn)
            } else {
                (Decision::Hold, self.tick / self.period_ticks)
            };
            self.windows.push(WindowRow {
                client_idx: ci,
                time_s: t_ms / 1000,
                params: params_during,
                metrics: window,
                decision,
                turn,
            });
            // The snapshot records the counters at the boundary together
            // with the parameters in effect *after* the turn, which is what
            // a stats reader polling right after the boundary would see.
            let snap = self.clients[ci].make_snapshot(t_ms);
            self.clients[ci].prev_snapshot = snap.clone();
            self.snapshots[ci].push(snap);
        }
    }

    /// Run to the configured duration and collect results.
    pub fn run_to_end(mut self) -> SimResult {
        self.step_ticks(self.total_ticks - self.tick);
        let n = self.clients.len();
        let mut phase_bw = Vec::with_capacity(n);
        for ci in 0..n {
            let marks = &self.phase_marks[ci];
            let mut rows = Vec::with_capacity(marks.len());
            for (i, &(phase, start_s, bytes_at_start)) in marks.iter().enumerate() {
                let (end_s, bytes_at_end) = if i + 1 < marks.len() {
                    (marks[i + 1].1, marks[i + 1].2)
                } else {
                    (self.duration_s, self.clients[ci].bytes_transferred_total)
                };
                rows.push(PhaseBw {
                    phase,
                    start_s,
                    end_s,
                    bytes: bytes_at_end - bytes_at_start,
                });
            }
            phase_bw.push(rows);
        }
        SimResult {
            client_ids: self.clients.iter().map(|c| c.id.clone()).collect(),
            snapshots: self.snapshots,
            windows: self.windows,
            phase_bw,
            total_bytes: self.clients.iter().map(|c| c.bytes_transferred_total).collect(),
            steady_bytes: self
                .clients
                .iter()
                .zip(&self.steady_bytes_start)
                .map(|(c, s)| c.bytes_transferred_total - s)
                .collect(),
            duration_s: self.duration_s,
        }
    }
}

/// Run a scenario start to finish.
pub fn run(scenario: &Scenario) -> Result<SimResult, SimError> {
    Ok(Simulation::new(scenario)?.run_to_end())
}
