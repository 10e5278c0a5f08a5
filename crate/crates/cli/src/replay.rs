//! Re-run the tuning decisions from a recorded snapshot trace alone: no
//! simulator, no clock, just the statistics a client library would expose.
//! Replaying a trace exported by `simulate` reproduces that run's decision
//! log exactly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use iopathtune_core::metrics::{self, MetricsError, Snapshot, TraceReader};
use iopathtune_core::tuner::{self, TunableParams, TunerConfig, TunerState};

use crate::{output, CliError};

struct ClientReplay {
    state: TunerState,
    prev: Snapshot,
}

/// Derive windows per client from the trace and run the decision engine over
/// them; write the resulting decision log to `out_path`.
pub fn cmd_replay(
    trace_path: &Path,
    out_path: &Path,
    config: Option<&str>,
) -> Result<(), CliError> {
    let cfg = match config {
        Some(c) => crate::load_scenario(c)?.tuner.config,
        None => TunerConfig::default(),
    };
    let text = fs::read_to_string(trace_path)
        .map_err(|e| CliError::io(&trace_path.display().to_string(), e))?;

    let mut clients: HashMap<String, ClientReplay> = HashMap::new();
    let mut rows = String::from(output::DECISIONS_HEADER);
    let mut reader = TraceReader::new(&text);
    while let Some(record) = reader.next() {
        let (snap, line) = record.map_err(|(e, line)| trace_err(e, line))?;
        match clients.get_mut(&snap.client_id) {
            None => {
                let params =
                    TunableParams::new(snap.max_pages_per_rpc, snap.max_rpcs_in_flight);
                let state = tuner::init_state(&cfg, params).map_err(|e| CliError::Trace {
                    line,
                    message: format!("initial parameters in trace are unusable: {e}"),
                })?;
                clients.insert(
                    snap.client_id.clone(),
                    ClientReplay { state, prev: snap },
                );
            }
            Some(client) => {
                let window = metrics::derive_window(&client.prev, &snap)
                    .map_err(|e| trace_err(e, line))?;
                let params_before = client.state.params;
                let (next, decision) = tuner::plan_action(&cfg, &client.state, &window);
                rows.push_str(&output::decision_row(
                    &snap.client_id,
                    next.turn,
                    &decision,
                    params_before,
                ));
                client.state = next;
                client.prev = snap;
            }
        }
    }

    fs::write(out_path, rows).map_err(|e| CliError::io(&out_path.display().to_string(), e))
}

fn trace_err(e: MetricsError, line: usize) -> CliError {
    CliError::Trace { line, message: e.to_string() }
}
