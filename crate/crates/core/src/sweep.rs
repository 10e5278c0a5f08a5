//! Exhaustive static evaluation of the power-of-two parameter grid.
//!
//! Every grid point runs the scenario once with the tuner off and those
//! fixed parameters, and reports the mean bandwidth over the final half of
//! the run. Grid points are independent; with the `parallel` feature they
//! fan out over a rayon pool. Results are merged in grid order afterwards,
//! so the output is byte-identical regardless of thread count.

use crate::scenario::Scenario;
use crate::sim::{self, SimError};
use crate::tuner::TunableParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub params: TunableParams,
    /// Acked bytes over the final half of the run, summed over clients.
    pub steady_bytes: u64,
    /// Mean steady-state bandwidth in bytes/second.
    pub mean_bw: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// One point per grid pair, ascending by (pages_per_rpc, rpcs_in_flight).
    pub points: Vec<SweepPoint>,
    pub argmax: SweepPoint,
}

impl SweepResult {
    pub fn point(&self, params: TunableParams) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.params == params)
    }
}

/// The grid: all in-bounds power-of-two pairs.
pub fn grid(scenario: &Scenario) -> Vec<TunableParams> {
    let cfg = &scenario.tuner.config;
    let mut out = Vec::new();
    for mppr in cfg.mppr_bounds.grid() {
        for mrif in cfg.mrif_bounds.grid() {
            out.push(TunableParams::new(mppr, mrif));
        }
    }
    out
}

fn run_point(scenario: &Scenario, params: TunableParams) -> Result<SweepPoint, SimError> {
    let mut s = scenario.clone();
    s.tuner.enabled = false;
    s.defaults = params;
    let result = sim::run(&s)?;
    let steady_bytes: u64 = result.steady_bytes.iter().sum();
    Ok(SweepPoint { params, steady_bytes, mean_bw: steady_bytes as f64 / result.steady_len_s() })
}

/// Among equal-bandwidth points prefer the one needing the least change from
/// the scenario defaults, then the smaller values. Plateaus are common (the
/// server-limited region is exactly flat), and "closest to where you started"
/// is the most useful representative of an optimal plateau.
fn better(a: &SweepPoint, b: &SweepPoint, defaults: TunableParams) -> bool {
    if a.steady_bytes != b.steady_bytes {
        return a.steady_bytes > b.steady_bytes;
    }
    let dist = |p: &SweepPoint| {
        let d = |x: u32, y: u32| (x.max(y) / x.min(y)).trailing_zeros();
        d(p.params.pages_per_rpc, defaults.pages_per_rpc)
            + d(p.params.rpcs_in_flight, defaults.rpcs_in_flight)
    };
    let (da, db) = (dist(a), dist(b));
    if da != db {
        return da < db;
    }
    (a.params.pages_per_rpc, a.params.rpcs_in_flight)
        < (b.params.pages_per_rpc, b.params.rpcs_in_flight)
}

fn finish(points: Vec<SweepPoint>, defaults: TunableParams) -> SweepResult {
    let argmax = points
        .iter()
        .copied()
        .reduce(|best, p| if better(&p, &best, defaults) { p } else { best })
        .expect("non-empty grid");
    SweepResult { points, argmax }
}

/// Run the whole grid. `jobs` bounds the worker threads; `None` uses the
/// default pool. Without the `parallel` feature the grid runs sequentially
/// whatever `jobs` says.
pub fn sweep(scenario: &Scenario, jobs: Option<usize>) -> Result<SweepResult, SimError> {
    let pairs = grid(scenario);
    let points = run_grid(scenario, &pairs, jobs)?;
    Ok(finish(points, scenario.defaults))
}

#[cfg(feature = "parallel")]
fn run_grid(
    scenario: &Scenario,
    pairs: &[TunableParams],
    jobs: Option<usize>,
) -> Result<Vec<SweepPoint>, SimError> {
    use rayon::prelude::*;
    if jobs == Some(1) {
        return pairs.iter().map(|p| run_point(scenario, *p)).collect();
    }
    let run_all = || pairs.par_iter().map(|p| run_point(scenario, *p)).collect();
    match jobs {
        None => run_all(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(run_all),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_grid(
    scenario: &Scenario,
    pairs: &[TunableParams],
    _jobs: Option<usize>,
) -> Result<Vec<SweepPoint>, SimError> {
    pairs.iter().map(|p| run_point(scenario, *p)).collect()
}
