use std::hint::black_box;

use agentdial_bench::{call_texts, calls, traces};
use agentdial_core::react::parse_trace;
use agentdial_core::{parse_call, parse_toolcall_json, render_toolcall_json};
use criterion::{criterion_group, criterion_main, Criterion, Throughput};

fn parsers(c: &mut Criterion) {
    let texts = call_texts(256, 1);
    let mut g = c.benchmark_group("parse");
    g.throughput(Throughput::Elements(texts.len() as u64));
    g.bench_function("parse_call", |b| {
        b.iter(|| texts.iter().map(|t| parse_call(black_box(t)).is_ok() as usize).sum::<usize>())
    });

    let json: Vec<String> = calls(256, 2).chunks(2).map(render_toolcall_json).collect();
    g.bench_function("parse_toolcall_json", |b| {
        b.iter(|| json.iter().map(|t| parse_toolcall_json(black_box(t)).is_ok() as usize).sum::<usize>())
    });

    let tr = traces(64, 3);
    g.throughput(Throughput::Elements(tr.len() as u64));
    g.bench_function("parse_trace", |b| {
        b.iter(|| tr.iter().map(|t| parse_trace(black_box(t)).is_ok() as usize).sum::<usize>())
    });
    g.finish();
}

criterion_group!(benches, parsers);
criterion_main!(benches);
