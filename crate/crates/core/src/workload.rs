//! Request stream generators and phase schedules.
//!
//! A workload is reduced to the axes that matter for the I/O path: access
//! pattern (random/sequential), operation mix (write/read/readwrite), request
//! size, stream count, an optional rate limit, and an optional whole-file
//! extent that turns the stream into rewrite/reread passes. Generators are
//! pure pull-based iterators; the simulation decides how fast to pull.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default extent random offsets are drawn from when no whole-file size is
/// given (64 GiB).
pub const DEFAULT_EXTENT: u64 = 64 << 30;

/// Sequential streams are spaced this far apart so they never collide (1 TiB).
const SEQ_STREAM_SPACING: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Random,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Write,
    Read,
    ReadWrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReqOp {
    Read,
    Write,
}

/// One application request: a contiguous byte range and a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub offset: u64,
    pub len: u64,
    pub op: ReqOp,
}

/// One workload family instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub pattern: Pattern,
    pub op: Op,
    /// Request size in bytes.
    pub request_size: u64,
    pub streams: u32,
    /// Per-stream cap in bytes/second; `None` means as fast as backpressure
    /// allows.
    pub rate_limit: Option<u64>,
    /// File size for rewrite/reread cycles.
    pub whole_file: Option<u64>,
    /// Extent random offsets are drawn from.
    pub extent: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.request_size == 0 {
            return Err(WorkloadError::Invalid("request_size must be > 0"));
        }
        if self.streams == 0 {
            return Err(WorkloadError::Invalid("streams must be >= 1"));
        }
        if let Some(wf) = self.whole_file {
            if wf < self.request_size {
                return Err(WorkloadError::Invalid(
                    "whole_file must be at least one request",
                ));
            }
        }
        if self.extent < self.request_size {
            return Err(WorkloadError::Invalid("extent must be at least one request"));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("{0}")]
    Invalid(&'static str),
    #[error("phase start times must be strictly increasing")]
    PhaseOrder,
    #[error("first phase must start at 0")]
    PhaseStart,
    #[error("schedule needs at least one phase")]
    EmptySchedule,
}

/// Ordered workload phases; the active one is the latest whose start time has
/// been reached.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    phases: Vec<(u64, WorkloadSpec)>,
}

impl PhaseSchedule {
    pub fn new(phases: Vec<(u64, WorkloadSpec)>) -> Result<Self, WorkloadError> {
        if phases.is_empty() {
            return Err(WorkloadError::EmptySchedule);
        }
        if phases[0].0 != 0 {
            return Err(WorkloadError::PhaseStart);
        }
        for w in phases.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(WorkloadError::PhaseOrder);
            }
        }
        for (_, spec) in &phases {
            spec.validate()?;
        }
        Ok(PhaseSchedule { phases })
    }

    pub fn phases(&self) -> &[(u64, WorkloadSpec)] {
        &self.phases
    }

    /// Index of the phase active at `t` seconds (switches are inclusive).
    pub fn active_index(&self, t_s: u64) -> usize {
        match self.phases.binary_search_by_key(&t_s, |(s, _)| *s) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn active_spec(&self, t_s: u64) -> &WorkloadSpec {
        &self.phases[self.active_index(t_s)].1
    }
}

/// Direction of a whole-file pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pass {
    Write,
    Read,
}

/// Deterministic generator for one stream.
#[derive(Debug, Clone)]
pub struct StreamGen {
    pattern: Pattern,
    op: Op,
    request_size: u64,
    /// Next sequential offset.
    cursor: u64,
    /// Base offset of this stream's private region.
    base: u64,
    whole_file: Option<u64>,
    pass: Pass,
    /// Bytes remaining in the current whole-file pass.
    pass_remaining: u64,
    /// Next op for per-request read/write alternation.
    next_rw: ReqOp,
    slots: u64,
    rng: ChaCha8Rng,
}

impl StreamGen {
    fn new(spec: &WorkloadSpec, stream_idx: u32, seed: u64) -> Self {
        let base = if spec.whole_file.is_some() {
            0
        } else {
            match spec.pattern {
                Pattern::Sequential => stream_idx as u64 * SEQ_STREAM_SPACING,
                Pattern::Random => 0,
            }
        };
        let extent = spec.whole_file.unwrap_or(spec.extent);
        StreamGen {
            pattern: spec.pattern,
            op: spec.op,
            request_size: spec.request_size,
            cursor: base,
            base,
            whole_file: spec.whole_file,
            pass: if spec.op == Op::Read { Pass::Read } else { Pass::Write },
            pass_remaining: spec.whole_file.unwrap_or(0),
            next_rw: ReqOp::Write,
            slots: (extent / spec.request_size).max(1),
            rng: ChaCha8Rng::seed_from_u64(mix(seed, stream_idx as u64)),
        }
    }

    /// The next request this stream would issue.
    pub fn next_request(&mut self) -> Request {
        let len = self.request_size;
        if let Some(file) = self.whole_file {
            // Full write pass over the extent, then (for readwrite) a full
            // read pass, then repeat.
            if self.pass_remaining == 0 {
                self.pass = match (self.pass, self.op) {
                    (Pass::Write, Op::ReadWrite) => Pass::Read,
                    (Pass::Read, _) => Pass::Write,
                    (Pass::Write, _) => Pass::Write,
                };
                if self.op == Op::Read {
                    self.pass = Pass::Read;
                }
                self.pass_remaining = file;
                self.cursor = 0;
            }
            let take = len.min(self.pass_remaining);
            let offset = self.cursor;
            self.cursor += take;
            self.pass_remaining -= take;
            let op = match self.pass {
                Pass::Write => ReqOp::Write,
                Pass::Read => ReqOp::Read,
            };
            return Request { offset, len: take, op };
        }

        let op = match self.op {
            Op::Write => ReqOp::Write,
            Op::Read => ReqOp::Read,
            Op::ReadWrite => {
                let op = self.next_rw;
                self.next_rw = match op {
                    ReqOp::Write => ReqOp::Read,
                    ReqOp::Read => ReqOp::Write,
                };
                op
            }
        };
        let offset = match self.pattern {
            Pattern::Sequential => {
                let o = self.cursor;
                self.cursor += len;
                o
            }
            Pattern::Random => self.base + self.rng.gen_range(0..self.slots) * len,
        };
        Request { offset, len, op }
    }
}

/// All streams of one workload phase.
#[derive(Debug, Clone)]
pub struct StreamSet {
    streams: Vec<StreamGen>,
}

/// Build the stream set for a spec. The same `(spec, seed)` always produces
/// the same request sequences.
pub fn build_workload(spec: &WorkloadSpec, seed: u64) -> StreamSet {
    let streams = (0..spec.streams).map(|i| StreamGen::new(spec, i, seed)).collect();
    StreamSet { streams }
}

impl StreamSet {
    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn stream_mut(&mut self, idx: usize) -> &mut StreamGen {
        &mut self.streams[idx]
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 over the pair; good enough to decorrelate streams.
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the per-(client, phase) workload seed from the scenario seed.
pub fn phase_seed(scenario_seed: u64, client_idx: usize, phase_idx: usize) -> u64 {
    mix(mix(scenario_seed, client_idx as u64 + 1), phase_idx as u64 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pattern: Pattern, op: Op, request: u64, streams: u32) -> WorkloadSpec {
        WorkloadSpec {
            pattern,
            op,
            request_size: request,
            streams,
            rate_limit: None,
            whole_file: None,
            extent: DEFAULT_EXTENT,
        }
    }

    #[test]
    fn fivestream_random_write_shape() {
        let s = spec(Pattern::Random, Op::Write, 1 << 20, 5);
        let mut set = build_workload(&s, 7);
        assert_eq!(set.len(), 5);
        for i in 0..5 {
            let r = set.stream_mut(i).next_request();
            assert_eq!(r.op, ReqOp::Write);
            assert_eq!(r.len, 1 << 20);
            assert_eq!(r.offset % (1 << 20), 0);
            assert!(r.offset < DEFAULT_EXTENT);
        }
    }

    #[test]
    fn whole_file_readwrite_cycles_full_passes() {
        let mut s = spec(Pattern::Sequential, Op::ReadWrite, 1 << 20, 1);
        s.whole_file = Some(4 << 20);
        let mut set = build_workload(&s, 1);
        let g = set.stream_mut(0);
        let mut ops = Vec::new();
        for _ in 0..12 {
            let r = g.next_request();
            ops.push((r.op, r.offset));
        }
        // Write the 4 MiB extent, read it back, write again.
        let expected: Vec<(ReqOp, u64)> = (0..4)
            .map(|i| (ReqOp::Write, i << 20))
            .chain((0..4).map(|i| (ReqOp::Read, i << 20)))
            .chain((0..4).map(|i| (ReqOp::Write, i << 20)))
            .collect();
        assert_eq!(ops, expected);
    }

    #[test]
    fn same_seed_same_sequence() {
        let s = spec(Pattern::Random, Op::ReadWrite, 8192, 3);
        let mut a = build_workload(&s, 99);
        let mut b = build_workload(&s, 99);
        for i in 0..3 {
            for _ in 0..64 {
                assert_eq!(a.stream_mut(i).next_request(), b.stream_mut(i).next_request());
            }
        }
        let mut c = build_workload(&s, 100);
        let differs = (0..64).any(|_| {
            a.stream_mut(0).next_request().offset != c.stream_mut(0).next_request().offset
        });
        assert!(differs);
    }

    #[test]
    fn sequential_streams_never_overlap() {
        let s = spec(Pattern::Sequential, Op::Write, 1 << 20, 4);
        let mut set = build_workload(&s, 5);
        let mut ranges: Vec<(u64, u64)> = Vec::new();
        for i in 0..4 {
            for _ in 0..256 {
                let r = set.stream_mut(i).next_request();
                ranges.push((r.offset, r.offset + r.len));
            }
        }
        ranges.sort_unstable();
        for w in ranges.windows(2) {
            assert!(w[0].1 <= w[1].0, "overlap between {:?} and {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn random_offsets_are_roughly_uniform() {
        let s = spec(Pattern::Random, Op::Write, 1 << 20, 1);
        let mut set = build_workload(&s, 11);
        let bins = 16usize;
        let n = 4096usize;
        let mut counts = vec![0f64; bins];
        for _ in 0..n {
            let r = set.stream_mut(0).next_request();
            let bin = (r.offset as u128 * bins as u128 / DEFAULT_EXTENT as u128) as usize;
            counts[bin] += 1.0;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 15 degrees of freedom, p = 0.001 critical value.
        assert!(chi2 < 37.7, "chi-square {chi2} too large");
    }

    #[test]
    fn readwrite_alternates_per_request() {
        let s = spec(Pattern::Sequential, Op::ReadWrite, 4096, 1);
        let mut set = build_workload(&s, 3);
        let ops: Vec<ReqOp> = (0..6).map(|_| set.stream_mut(0).next_request().op).collect();
        assert_eq!(
            ops,
            [ReqOp::Write, ReqOp::Read, ReqOp::Write, ReqOp::Read, ReqOp::Write, ReqOp::Read]
        );
    }

    #[test]
    fn phase_boundaries_are_inclusive() {
        let a = spec(Pattern::Sequential, Op::Write, 4096, 1);
        let b = spec(Pattern::Random, Op::Write, 4096, 1);
        let sched = PhaseSchedule::new(vec![(0, a), (300, b)]).unwrap();
        assert_eq!(sched.active_index(0), 0);
        assert_eq!(sched.active_index(299), 0);
        assert_eq!(sched.active_index(300), 1);
        assert_eq!(sched.active_index(10_000), 1);
    }

    #[test]
    fn six_switches_make_seven_phases() {
        let base = spec(Pattern::Sequential, Op::Write, 4096, 1);
        let phases: Vec<(u64, WorkloadSpec)> = (0..7).map(|i| (i * 300, base)).collect();
        let sched = PhaseSchedule::new(phases).unwrap();
        assert_eq!(sched.phases().len(), 7);
        assert_eq!(sched.active_index(2099), 6);
    }

    #[test]
    fn schedule_validation() {
        let a = spec(Pattern::Sequential, Op::Write, 4096, 1);
        assert_eq!(PhaseSchedule::new(vec![]), Err(WorkloadError::EmptySchedule));
        assert_eq!(PhaseSchedule::new(vec![(5, a)]), Err(WorkloadError::PhaseStart));
        assert_eq!(
            PhaseSchedule::new(vec![(0, a), (300, a), (300, a)]),
            Err(WorkloadError::PhaseOrder)
        );
    }
}
