use cenn_forge::cost::CostParams;
use cenn_forge::{compile, trace_cost, Activity, ExecMode, ExecOptions, Executor, HardwareConfig};
use cenn_forge_bench::{random_image, random_network};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn compile_networks(c: &mut Criterion) {
    let mut g = c.benchmark_group("compile");
    for name in ["mnist_design1", "mnist_design2"] {
        let net = random_network(name, 1);
        let hw = HardwareConfig::for_network(&net);
        g.bench_function(name, |b| b.iter(|| compile(black_box(&net), &hw).unwrap()));
    }
    g.finish();
}

fn cost(c: &mut Criterion) {
    let params = CostParams::preset("paper-4bit-32nm").unwrap();
    let net = random_network("mnist_design1", 1);
    let prog = compile(&net, &HardwareConfig::mnist()).unwrap();
    let activity = Activity::from_program(&prog);
    c.bench_function("trace_cost/mnist_design1", |b| {
        b.iter(|| trace_cost(black_box(&prog), &params, &activity).unwrap())
    });
}

fn inference(c: &mut Criterion) {
    let mut g = c.benchmark_group("inference");
    g.sample_size(20);
    for name in ["mnist_design1", "mnist_design2"] {
        let net = random_network(name, 1);
        let hw = HardwareConfig::for_network(&net);
        let image = random_image(&net, 7);
        for mode in [ExecMode::Ideal, ExecMode::Quantized, ExecMode::Nonideal] {
            let exec = Executor::new(&net, &hw, ExecOptions::with_mode(mode)).unwrap();
            g.bench_with_input(BenchmarkId::new(name, mode.as_str()), &image, |b, img| {
                b.iter(|| exec.run(black_box(img)).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, compile_networks, cost, inference);
criterion_main!(benches);
