use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use jackflow_bench::network;
use jackflow_core::simulate::{simulate_ctmc, SimConfig};

fn ctmc(c: &mut Criterion) {
    let net = network(4, 5);
    let t = net.solve_traffic().unwrap();
    let rate: f64 = net.lambda.iter().sum::<f64>() + t.nu.iter().sum::<f64>();
    let events = 100_000u64;
    let cfg = SimConfig::new(7, events as f64 / rate, vec![0; 4]);
    let mut g = c.benchmark_group("ctmc");
    g.throughput(Throughput::Elements(events));
    g.sample_size(20);
    g.bench_function("k4_100k_events", |b| b.iter(|| simulate_ctmc(&net, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, ctmc);
criterion_main!(benches);
