use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use seqtransport::basis::{tensor_rule, FeatureBasis, ReferenceMeasure};
use seqtransport::fit::{fit_sos, FitProblem, SolverConfig};
use seqtransport::sos::SosDensity;
use seqtransport::transport::{ComposedMap, Layer, TriangularMap};

fn density(reference: ReferenceMeasure, p: u32) -> SosDensity {
    let basis = FeatureBasis::total_degree(reference, p).unwrap();
    let m = basis.len();
    let b = DMatrix::from_fn(m, m, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
    SosDensity::normalized(basis, &b * b.transpose() + DMatrix::identity(m, m) * 0.1).unwrap()
}

fn map(d: usize, p: u32, layers: usize) -> ComposedMap {
    let layer = TriangularMap::from_sos(&density(ReferenceMeasure::gaussian(d), p)).unwrap();
    ComposedMap::new(ReferenceMeasure::gaussian(d), vec![Layer::Full(layer); layers]).unwrap()
}

fn points(d: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..d).map(|k| ((i * 13 + k * 5) % 17) as f64 / 8.5 - 1.0).collect())
        .collect()
}

fn pushforward(c: &mut Criterion) {
    let mut g = c.benchmark_group("pushforward_logpdf");
    for (d, p) in [(2, 4), (5, 2), (10, 2)] {
        let m = map(d, p, 4);
        let xs = points(d, 200);
        g.bench_with_input(BenchmarkId::new("d_p", format!("{d}_{p}")), &xs, |b, xs| {
            b.iter(|| m.pushforward_logpdf_batch(xs).unwrap())
        });
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward");
    for (d, p) in [(2, 4), (5, 2)] {
        let m = map(d, p, 4);
        let xs = points(d, 200);
        g.bench_with_input(BenchmarkId::new("d_p", format!("{d}_{p}")), &xs, |b, xs| {
            b.iter(|| m.forward_batch(xs).unwrap())
        });
    }
    g.finish();
}

fn fit(c: &mut Criterion) {
    let target = density(ReferenceMeasure::uniform_cube(2), 3);
    let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(2), 3).unwrap();
    let (pts, w) = tensor_rule(2, 8);
    let mut feat = DMatrix::zeros(pts.len(), basis.len());
    for (i, x) in pts.iter().enumerate() {
        feat.row_mut(i).copy_from(&basis.eval_canonical(x).transpose());
    }
    let ratios: Vec<f64> = pts.iter().map(|x| target.evaluate(x).unwrap()).collect();
    let w: Vec<f64> = w.iter().map(|v| v * 0.25).collect();
    let mut g = c.benchmark_group("fit_sos");
    g.sample_size(20);
    for alpha in [0.5, 1.0, 2.0] {
        let problem = FitProblem::divergence(basis.clone(), feat.clone(), ratios.clone(), alpha)
            .unwrap()
            .with_weights(w.clone())
            .unwrap();
        g.bench_with_input(BenchmarkId::new("alpha", alpha), &problem, |b, pr| {
            b.iter(|| fit_sos(pr, &SolverConfig::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, pushforward, forward, fit);
criterion_main!(benches);
