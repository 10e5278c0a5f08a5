//! Canonical text forms of run outputs. Everything is formatted into one
//! string and written in a single call, so identical results are identical
//! files.

use std::fmt::Write as _;

use iopathtune_core::metrics;
use iopathtune_core::sim::SimResult;
use iopathtune_core::sweep::SweepResult;
use iopathtune_core::tuner::{Decision, TunableParams};

/// Decision label for the timeseries `decision` column.
fn decision_label(d: &Decision) -> String {
    match d {
        Decision::Hold => "hold".into(),
        Decision::Apply(a) => format!("{}:{}", a.direction.name(), a.param.name()),
        Decision::Revert { param, .. } => format!("revert:{}", param.name()),
    }
}

pub fn timeseries_csv(result: &SimResult) -> String {
    let mut out = String::new();
    out.push_str(
        "time_s,client_id,mppr,mrif,dirty_bytes,page_cache_rate,rpc_gen_rate,transfer_bw_mbps,decision\n",
    );
    for w in &result.windows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3},{:.3},{:.3},{}",
            w.time_s,
            result.client_ids[w.client_idx],
            w.params.pages_per_rpc,
            w.params.rpcs_in_flight,
            w.metrics.dirty_bytes,
            w.metrics.page_cache_rate,
            w.metrics.rpc_gen_rate,
            w.metrics.transfer_bw / 1e6,
            decision_label(&w.decision)
        );
    }
    out
}

/// All snapshots, chronological, clients interleaved in index order.
pub fn snapshot_trace(result: &SimResult) -> String {
    let mut out = String::new();
    let rounds = result.snapshots.iter().map(Vec::len).max().unwrap_or(0);
    for round in 0..rounds {
        for per_client in &result.snapshots {
            if let Some(snap) = per_client.get(round) {
                out.push_str(&metrics::serialize_snapshot(snap));
            }
        }
    }
    out
}

pub fn summary_csv(result: &SimResult) -> String {
    let mut out = String::new();
    out.push_str("client_id,phase,start_s,end_s,mean_bw_mbps\n");
    for (ci, phases) in result.phase_bw.iter().enumerate() {
        for p in phases {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3}",
                result.client_ids[ci],
                p.phase,
                p.start_s,
                p.end_s,
                p.mean_bw() / 1e6
            );
        }
        let total: u64 = result.total_bytes[ci];
        let _ = writeln!(
            out,
            "{},all,0,{},{:.3}",
            result.client_ids[ci],
            result.duration_s,
            total as f64 / result.duration_s as f64 / 1e6
        );
    }
    let grand: u64 = result.total_bytes.iter().sum();
    let _ = writeln!(
        out,
        "TOTAL,all,0,{},{:.3}",
        result.duration_s,
        grand as f64 / result.duration_s as f64 / 1e6
    );
    out
}

pub const DECISIONS_HEADER: &str = "client_id,turn,decision,param,old,new\n";

pub fn decisions_csv(result: &SimResult) -> String {
    let mut out = String::new();
    out.push_str(DECISIONS_HEADER);
    for w in &result.windows {
        out.push_str(&decision_row(
            &result.client_ids[w.client_idx],
            w.turn,
            &w.decision,
            w.params,
        ));
    }
    out
}

/// One decisions.csv line. `params_before` are the values in effect when the
/// decision was taken; it supplies the `old` column for reverts. Shared with
/// replay so the two paths cannot diverge in formatting.
pub fn decision_row(
    client_id: &str,
    turn: u64,
    decision: &Decision,
    params_before: TunableParams,
) -> String {
    match decision {
        Decision::Hold => format!("{client_id},{turn},hold,,,\n"),
        Decision::Apply(a) => format!(
            "{client_id},{turn},{},{},{},{}\n",
            a.direction.name(),
            a.param.name(),
            a.pre_value,
            a.post_value
        ),
        Decision::Revert { param, restored_value } => format!(
            "{client_id},{turn},revert,{},{},{}\n",
            param.name(),
            params_before.get(*param),
            restored_value
        ),
    }
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str("mppr,mrif,mean_bw_mbps\n");
    for p in &result.points {
        let _ = writeln!(
            out,
            "{},{},{:.3}",
            p.params.pages_per_rpc,
            p.params.rpcs_in_flight,
            p.mean_bw / 1e6
        );
    }
    let _ = writeln!(
        out,
        "# argmax: mppr={} mrif={} mean_bw_mbps={:.3}",
        result.argmax.params.pages_per_rpc,
        result.argmax.params.rpcs_in_flight,
        result.argmax.mean_bw / 1e6
    );
    out
}
