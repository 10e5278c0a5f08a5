//! Per-client simulation state: workload streams, the dirty page cache with
//! its runs, the staging queue of formed-but-unsent RPCs, and the cumulative
//! counters snapshots are built from.

use std::collections::VecDeque;

use crate::metrics::Snapshot;
use crate::scenario::ClientSpec;
use crate::tuner::{TunableParams, TunerState};
use crate::workload::{self, PhaseSchedule, ReqOp, StreamSet};
use crate::PAGE_SIZE;

/// A data transfer request in some stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rpc {
    pub client: u32,
    pub bytes: u64,
    pub read: bool,
}

/// A contiguous range of dirty pages, tracked as the write batches that
/// produced it so the oldest page's age is known.
#[derive(Debug, Default)]
struct Run {
    bytes: u64,
    batches: VecDeque<Batch>,
}

#[derive(Debug, Clone, Copy)]
struct Batch {
    bytes: u64,
    born_tick: u64,
}

impl Run {
    fn push(&mut self, bytes: u64, tick: u64) {
        self.bytes += bytes;
        if let Some(last) = self.batches.back_mut() {
            if last.born_tick == tick {
                last.bytes += bytes;
                return;
            }
        }
        self.batches.push_back(Batch { bytes, born_tick: tick });
    }

    fn consume(&mut self, mut bytes: u64) {
        self.bytes -= bytes;
        while bytes > 0 {
            let front = self.batches.front_mut().expect("run accounting");
            if front.bytes > bytes {
                front.bytes -= bytes;
                bytes = 0;
            } else {
                bytes -= front.bytes;
                self.batches.pop_front();
            }
        }
    }

    fn oldest_tick(&self) -> Option<u64> {
        self.batches.front().map(|b| b.born_tick)
    }
}

/// Token bucket for rate-limited streams. Integer arithmetic: the millisecond
/// remainder is carried so no precision is lost across ticks.
#[derive(Debug)]
struct RateBucket {
    rate: u64,
    tokens: u64,
    carry_ms_bytes: u64,
    cap: u64,
}

impl RateBucket {
    fn new(rate: u64, request_size: u64, tick_ms: u64) -> Self {
        let per_tick = rate * tick_ms / 1000;
        RateBucket { rate, tokens: 0, carry_ms_bytes: 0, cap: request_size.max(per_tick) }
    }

    fn refill(&mut self, tick_ms: u64) {
        self.carry_ms_bytes += self.rate * tick_ms;
        self.tokens = (self.tokens + self.carry_ms_bytes / 1000).min(self.cap);
        self.carry_ms_bytes %= 1000;
    }
}

/// A request that could not be admitted in one piece.
#[derive(Debug)]
struct Pending {
    op: ReqOp,
    remaining: u64,
    /// Offset the next admitted chunk continues at.
    next_offset: u64,
}

#[derive(Debug)]
struct StreamState {
    rate: Option<RateBucket>,
    pending: Option<Pending>,
    /// Open dirty run, if the last admitted write can still be extended.
    run: Run,
    /// Offset that would extend the open run.
    run_next_offset: u64,
}

/// Everything the simulation tracks for one client.
pub struct ClientState {
    pub id: String,
    pub params: TunableParams,
    pub max_dirty: u64,
    pub schedule: PhaseSchedule,
    pub phase_idx: usize,
    seed: u64,
    client_idx: usize,
    tick_ms: u64,

    gens: StreamSet,
    streams: Vec<StreamState>,

    /// Closed runs in birth order, waiting out the flush age.
    aged_runs: VecDeque<Run>,

    pub cache_bytes: u64,
    pub queue: VecDeque<Rpc>,
    pub queued_bytes: u64,
    pub queued_write_bytes: u64,
    pub in_flight: u32,

    // Cumulative counters exposed through snapshots.
    pub pages_cached_total: u64,
    pub rpcs_formed_total: u64,
    pub bytes_transferred_total: u64,

    // Conservation ledgers (bytes).
    pub write_issued: u64,
    pub write_acked: u64,
    pub inflight_write: u64,
    pub read_issued: u64,
    pub read_acked: u64,
    pub inflight_read: u64,

    pub tuner_state: Option<TunerState>,
    pub prev_snapshot: Snapshot,
}

impl ClientState {
    pub fn new(
        spec: &ClientSpec,
        client_idx: usize,
        params: TunableParams,
        seed: u64,
        tick_ms: u64,
    ) -> Self {
        let mut c = ClientState {
            id: spec.id.clone(),
            params,
            max_dirty: spec.max_dirty_bytes,
            schedule: spec.schedule.clone(),
            phase_idx: 0,
            seed,
            client_idx,
            tick_ms,
            gens: workload::build_workload(
                spec.schedule.active_spec(0),
                workload::phase_seed(seed, client_idx, 0),
            ),
            streams: Vec::new(),
            aged_runs: VecDeque::new(),
            cache_bytes: 0,
            queue: VecDeque::new(),
            queued_bytes: 0,
            queued_write_bytes: 0,
            in_flight: 0,
            pages_cached_total: 0,
            rpcs_formed_total: 0,
            bytes_transferred_total: 0,
            write_issued: 0,
            write_acked: 0,
            inflight_write: 0,
            read_issued: 0,
            read_acked: 0,
            inflight_read: 0,
            tuner_state: None,
            prev_snapshot: Snapshot {
                timestamp_ms: 0,
                client_id: spec.id.clone(),
                cur_dirty_bytes: 0,
                pages_cached_total: 0,
                rpcs_formed_total: 0,
                bytes_transferred_total: 0,
                max_pages_per_rpc: params.pages_per_rpc,
                max_rpcs_in_flight: params.rpcs_in_flight,
            },
        };
        c.init_streams(0);
        c
    }

    fn init_streams(&mut self, phase_idx: usize) {
        let spec = self.schedule.phases()[phase_idx].1;
        self.gens = workload::build_workload(
            &spec,
            workload::phase_seed(self.seed, self.client_idx, phase_idx),
        );
        self.streams = (0..spec.streams as usize)
            .map(|_| StreamState {
                rate: spec.rate_limit.map(|r| RateBucket::new(r, spec.request_size, self.tick_ms)),
                pending: None,
                run: Run::default(),
                run_next_offset: u64::MAX,
            })
            .collect();
    }

    /// Switch to the schedule phase active at `t_s`, discarding stream state.
    /// Dirty runs stay behind: they still have to be flushed.
    pub fn maybe_switch_phase(&mut self, t_s: u64) {
        let idx = self.schedule.active_index(t_s);
        if idx != self.phase_idx {
            for si in 0..self.streams.len() {
                if self.streams[si].run.bytes > 0 {
                    let run = std::mem::take(&mut self.streams[si].run);
                    self.aged_runs.push_back(run);
                }
            }
            self.phase_idx = idx;
            self.init_streams(idx);
        }
    }

    /// Dirty backlog as reported to the tuner: cached pages plus staged
    /// write RPCs that have not been dispatched yet.
    pub fn dirty_backlog(&self) -> u64 {
        self.cache_bytes + self.queued_write_bytes
    }

    fn pool_bytes(&self) -> u64 {
        self.cache_bytes + self.queued_bytes
    }

    fn mppr_bytes(&self) -> u64 {
        self.params.pages_per_rpc as u64 * PAGE_SIZE
    }

    fn form_rpc(&mut self, bytes: u64, read: bool) {
        debug_assert!(
            bytes > 0 && bytes <= self.mppr_bytes(),
            "RPC of {bytes} bytes exceeds the {} page limit",
            self.params.pages_per_rpc
        );
        self.queue.push_back(Rpc { client: self.client_idx as u32, bytes, read });
        self.queued_bytes += bytes;
        if read {
            self.read_issued += bytes;
        } else {
            self.queued_write_bytes += bytes;
        }
        self.rpcs_formed_total += 1;
    }

    /// Admit workload for one tick: writes into the dirty cache (blocking on
    /// the pool budget), reads straight into the staging queue. Streams are
    /// served round-robin one request at a time.
    pub fn workload_step(&mut self, tick: u64) {
        let tick_ms = self.tick_ms;
        for s in &mut self.streams {
            if let Some(rb) = &mut s.rate {
                rb.refill(tick_ms);
            }
        }
        loop {
            let mut progressed = false;
            for si in 0..self.streams.len() {
                if self.advance_stream(si, tick) {
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
    }

    /// One unit of progress on a stream: admit (part of) its pending request
    /// or pull the next one. Returns false when the stream is blocked.
    fn advance_stream(&mut self, si: usize, tick: u64) -> bool {
        let mppr_bytes = self.mppr_bytes();
        let space = self.max_dirty.saturating_sub(self.pool_bytes());
        if self.streams[si].pending.is_none() {
            let req = self.gens.stream_mut(si).next_request();
            self.streams[si].pending =
                Some(Pending { op: req.op, remaining: req.len, next_offset: req.offset });
        }
        let (op, remaining, next_offset) = {
            let p = self.streams[si].pending.as_ref().expect("just filled");
            (p.op, p.remaining, p.next_offset)
        };
        let budget = self.streams[si].rate.as_ref().map(|r| r.tokens).unwrap_or(u64::MAX);

        match op {
            ReqOp::Write => {
                let chunk = remaining.min(space).min(budget) / PAGE_SIZE * PAGE_SIZE;
                if chunk == 0 {
                    return false;
                }
                if next_offset != self.streams[si].run_next_offset
                    && self.streams[si].run.bytes > 0
                {
                    let run = std::mem::take(&mut self.streams[si].run);
                    self.aged_runs.push_back(run);
                }
                {
                    let stream = &mut self.streams[si];
                    stream.run.push(chunk, tick);
                    stream.run_next_offset = next_offset + chunk;
                    if let Some(rb) = &mut stream.rate {
                        rb.tokens -= chunk;
                    }
                    let p = stream.pending.as_mut().expect("pending write");
                    p.next_offset += chunk;
                    p.remaining -= chunk;
                    if p.remaining == 0 {
                        stream.pending = None;
                    }
                }
                self.cache_bytes += chunk;
                self.pages_cached_total += chunk / PAGE_SIZE;
                self.write_issued += chunk;
                // Full RPCs form as soon as enough contiguous pages exist.
                while self.streams[si].run.bytes >= mppr_bytes {
                    self.streams[si].run.consume(mppr_bytes);
                    self.cache_bytes -= mppr_bytes;
                    self.form_rpc(mppr_bytes, false);
                }
                true
            }
            ReqOp::Read => {
                let rpc = remaining.min(mppr_bytes);
                if rpc == 0 || rpc > space || rpc > budget {
                    return false;
                }
                {
                    let stream = &mut self.streams[si];
                    if let Some(rb) = &mut stream.rate {
                        rb.tokens -= rpc;
                    }
                    let p = stream.pending.as_mut().expect("pending read");
                    p.remaining -= rpc;
                    p.next_offset += rpc;
                    if p.remaining == 0 {
                        stream.pending = None;
                    }
                }
                self.form_rpc(rpc, true);
                true
            }
        }
    }

    /// Flush entire runs whose oldest page has exceeded the flush age, as
    /// partial RPCs no larger than the current RPC size limit.
    pub fn flush_step(&mut self, tick: u64, flush_age_ticks: u64) {
        let mppr_bytes = self.mppr_bytes();
        for si in 0..self.streams.len() {
            let expired = self.streams[si]
                .run
                .oldest_tick()
                .is_some_and(|born| born + flush_age_ticks <= tick);
            if expired {
                while self.streams[si].run.bytes > 0 {
                    let take = self.streams[si].run.bytes.min(mppr_bytes);
                    self.streams[si].run.consume(take);
                    self.cache_bytes -= take;
                    self.form_rpc(take, false);
                }
            }
        }
        while let Some(front) = self.aged_runs.front() {
            if front.bytes == 0 {
                self.aged_runs.pop_front();
                continue;
            }
            let born = front.oldest_tick().expect("nonempty run");
            if born + flush_age_ticks > tick {
                break;
            }
            let run = self.aged_runs.front_mut().expect("checked");
            let take = run.bytes.min(mppr_bytes);
            run.consume(take);
            self.cache_bytes -= take;
            self.form_rpc(take, false);
        }
    }

    /// Pop the next staged RPC for dispatch, updating the staging ledgers.
    pub fn take_for_dispatch(&mut self) -> Option<Rpc> {
        if self.in_flight >= self.params.rpcs_in_flight {
            return None;
        }
        let rpc = self.queue.pop_front()?;
        self.queued_bytes -= rpc.bytes;
        if rpc.read {
            self.inflight_read += rpc.bytes;
        } else {
            self.queued_write_bytes -= rpc.bytes;
            self.inflight_write += rpc.bytes;
        }
        self.in_flight += 1;
        // A dispatch never pushes past the current window; only a window
        // shrink can leave in_flight above it, and then nothing dispatches
        // until the excess drains.
        debug_assert!(self.in_flight <= self.params.rpcs_in_flight);
        Some(rpc)
    }

    pub fn acked(&mut self, rpc: &Rpc) {
        self.in_flight -= 1;
        self.bytes_transferred_total += rpc.bytes;
        if rpc.read {
            self.inflight_read -= rpc.bytes;
            self.read_acked += rpc.bytes;
        } else {
            self.inflight_write -= rpc.bytes;
            self.write_acked += rpc.bytes;
        }
    }

    pub fn make_snapshot(&self, t_ms: u64) -> Snapshot {
        Snapshot {
            timestamp_ms: t_ms,
            client_id: self.id.clone(),
            cur_dirty_bytes: self.dirty_backlog(),
            pages_cached_total: self.pages_cached_total,
            rpcs_formed_total: self.rpcs_formed_total,
            bytes_transferred_total: self.bytes_transferred_total,
            max_pages_per_rpc: self.params.pages_per_rpc,
            max_rpcs_in_flight: self.params.rpcs_in_flight,
        }
    }

    /// Byte conservation across the pipeline stages.
    pub fn assert_conservation(&self) {
        debug_assert_eq!(
            self.write_issued,
            self.cache_bytes + self.queued_write_bytes + self.inflight_write + self.write_acked,
            "write bytes leaked in client {}",
            self.id
        );
        debug_assert_eq!(
            self.read_issued,
            (self.queued_bytes - self.queued_write_bytes) + self.inflight_read + self.read_acked,
            "read bytes leaked in client {}",
            self.id
        );
    }
}
