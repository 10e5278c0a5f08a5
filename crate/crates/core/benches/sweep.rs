//! Compares the sequential and data-parallel sweep paths on a reduced grid.
//!
//! Run with `cargo bench -p iopathtune-core`.

use criterion::{criterion_group, criterion_main, Criterion};

use iopathtune_core::scenario;
use iopathtune_core::sweep;

const SCENARIO: &str = r#"
[sim]
duration_s = 20
seed = 7

[server]
capacity = 1250000000
rpc_overhead_s = 0.0004
rtt_s = 0.0005

[defaults]
max_pages_per_rpc = 256
max_rpcs_in_flight = 8

[tuner]
enabled = false
mppr_min = 64
mppr_max = 1024
mrif_min = 2
mrif_max = 32

[[clients]]
id = "node1"

[[clients.phases]]
start_s = 0
pattern = "sequential"
op = "write"
request_size = 1048576
"#;

fn bench_sweep(c: &mut Criterion) {
    let scenario = scenario::from_toml_str(SCENARIO).expect("bench scenario");
    let mut group = c.benchmark_group("sweep_5x5_grid");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| sweep::sweep(&scenario, Some(1)).expect("sweep"))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| sweep::sweep(&scenario, None).expect("sweep"))
    });
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
