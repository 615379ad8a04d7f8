mod common;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use seqtransport::basis::{tensor_rule, FeatureBasis, IndexSet, ReferenceMeasure};
use seqtransport::bridging::{diffusion_time_schedule, BridgingSchedule, ScheduleKind};
use seqtransport::divergence::divergence_integrand;
use seqtransport::pipeline::*;
use seqtransport::sos::SosDensity;
use seqtransport::targets::DiagonalMixture;
use seqtransport::transport::{ComposedMap, Layer, TriangularMap};
use seqtransport::Error;

fn normals(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = common::rng(seed);
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn data_config(d: usize, degree: u32, seed: u64) -> SequentialConfig {
    let mut c = SequentialConfig::new(ReferenceMeasure::gaussian(d));
    c.degree = degree;
    c.seed = seed;
    c
}

fn fixed(l: usize) -> DataSchedule {
    DataSchedule::Fixed(diffusion_time_schedule(0.8, 1.0, l).unwrap().capped(5.0))
}

#[test]
fn ess_examples() {
    assert_eq!(ess(&[0.3; 7], &[0.1; 7]).unwrap(), 7.0);
    let lt = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
    assert_eq!(ess(&lt, &[0.0; 3]).unwrap(), 1.0);
    let lt = [0.0, 0.0, 2f64.ln()];
    assert!((ess(&lt, &[0.0; 3]).unwrap() - 16.0 / 6.0).abs() < 1e-14);
    let zero = [f64::NEG_INFINITY; 4];
    assert!(matches!(ess(&zero, &[0.0; 4]), Err(Error::DegenerateWeights)));
}

#[test]
fn identity_map_nll_on_uniform_cube() {
    let map = ComposedMap::identity(ReferenceMeasure::uniform_cube(2));
    let mut rng = common::rng(1);
    let xs: Vec<Vec<f64>> = (0..50).map(|_| common::random_interior(2, &mut rng, 1.0)).collect();
    let nll = negative_log_likelihood(&map, &xs).unwrap();
    assert!((nll.mean - 2.0 * 2f64.ln()).abs() < 1e-14);
    let direct: f64 = xs.iter().map(|x| map.pushforward_logpdf(x).unwrap()).sum();
    assert!((nll.total + direct).abs() < 1e-12);
    assert_eq!(nll.count, 50);
}

#[test]
fn composed_nll_matches_layerwise_pullback() {
    let data = DiagonalMixture::bimodal().sample(600, 2);
    let (val, train) = data.split_at(100);
    let run = fit_from_data(train, val, &fixed(3), &data_config(2, 3, 3)).unwrap();
    assert_eq!(run.map.len(), 3);
    let test = DiagonalMixture::bimodal().sample(200, 4);
    let nll = negative_log_likelihood(&run.map, &test).unwrap();
    let mut manual = 0.0;
    for x in &test {
        let mut y = x.clone();
        let mut ld = 0.0;
        for layer in run.map.layers() {
            let (z, l) = layer.inverse_with_logdet(&y).unwrap();
            y = z;
            ld += l;
        }
        manual -= run.map.reference().log_density(&y).unwrap() + ld;
    }
    assert!((nll.total - manual).abs() <= 1e-9 * manual.abs());
}

fn sos_target(seed: u64) -> SosDensity {
    let mut rng = common::rng(seed);
    common::random_density(ReferenceMeasure::uniform_cube(2), 2, &mut rng)
}

#[test]
fn single_layer_recovers_sos_target() {
    let target = sos_target(5);
    let (nodes, w) = tensor_rule(2, 24);
    for alpha in [0.5, 1.0, 2.0] {
        let mut c = SequentialConfig::new(ReferenceMeasure::uniform_cube(2));
        c.alpha = alpha;
        c.discretization = Discretization::Quadrature(6);
        c.diagnostic_samples = 0;
        c.solver.max_iterations = 20000;
        let schedule = BridgingSchedule::explicit(ScheduleKind::Tempering, vec![1.0]).unwrap();
        let run = fit_from_density(|x| (target.log_evaluate(x).unwrap(), 0.0), &schedule, &c)
            .unwrap();
        let d: f64 = nodes
            .iter()
            .zip(&w)
            .map(|(x, wt)| {
                let lf = target.log_evaluate(x).unwrap();
                let lg = run.map.pushforward_logpdf(x).unwrap();
                wt * divergence_integrand(lf, lg, alpha, false)
            })
            .sum();
        assert!(d <= 1e-6, "alpha {alpha}: divergence {d:e}");
    }
}

fn bimodal_log_parts(x: &[f64]) -> (f64, f64) {
    let reference = -0.5 * (x[0] * x[0] + x[1] * x[1]);
    (DiagonalMixture::bimodal().log_density(x) - reference, reference)
}

#[test]
fn tempered_layers_reduce_target_residual() {
    let mut c = SequentialConfig::new(ReferenceMeasure::gaussian(2));
    c.degree = 4;
    c.samples = 2000;
    c.diagnostic_samples = 4000;
    c.seed = 9;
    let schedule = BridgingSchedule::explicit(ScheduleKind::Tempering, vec![0.25, 0.5, 1.0]).unwrap();
    let run = fit_from_density(bimodal_log_parts, &schedule, &c).unwrap();
    let trace = run.report.get_array("trace.target_residual").unwrap();
    assert_eq!(trace.len(), 3);
    assert!(trace.windows(2).all(|w| w[1] < w[0]), "{trace:?}");
    for l in 1..=3 {
        let obj = run.report.get_f64(&format!("layer.{l}.objective")).unwrap();
        let init = run.report.get_f64(&format!("layer.{l}.initial_objective")).unwrap();
        assert!(obj <= init, "layer {l}: {obj} > {init}");
    }
}

#[test]
fn density_failure_returns_partial_run() {
    let c = SequentialConfig::new(ReferenceMeasure::uniform_cube(2));
    let schedule = BridgingSchedule::explicit(ScheduleKind::Tempering, vec![1.0]).unwrap();
    let err = fit_from_density(|_| (f64::NEG_INFINITY, 0.0), &schedule, &c).unwrap_err();
    assert!(err.partial.map.is_empty());
    assert_eq!(err.partial.report.get("status"), Some("failed"));
}

#[test]
fn stopping_on_reference_data() {
    let data = normals(1000, 2, 11);
    let (val, train) = data.split_at(200);
    let mut c = data_config(2, 2, 1);
    c.l0 = 4;
    c.layers_max = 30;
    let run = fit_from_data(train, val, &DataSchedule::Adaptive, &c).unwrap();
    let attempted = run.report.get_array("trace.validation_nll").unwrap().len() - 1;
    assert!(attempted <= c.l0 + 2, "stopped after {attempted} layers");
    assert_eq!(run.report.get("stop"), Some("validation increase"));
    assert_eq!(run.map.len(), attempted - 1);
}

#[test]
fn determinism_across_thread_counts() {
    let data = DiagonalMixture::bimodal().sample(500, 6);
    let (val, train) = data.split_at(100);
    let c = data_config(2, 3, 4);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit_from_data(train, val, &fixed(3), &c).unwrap())
    };
    let a = run(1).report.deterministic_text();
    let b = run(4).report.deterministic_text();
    assert_eq!(a, b);
    assert!(a.contains("trace.validation_nll"));
}

fn table_with(cols: Vec<Vec<f64>>) -> Table {
    let n = cols[0].len();
    let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    Table::from_rows(rows).unwrap()
}

#[test]
fn preprocess_drops_duplicates_and_discrete_columns() {
    let mut rng = common::rng(3);
    let a: Vec<f64> = (0..506).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..506).map(|_| rng.random_range(0.0..5.0)).collect();
    let discrete: Vec<f64> = (0..506).map(|i| (i % 7) as f64).collect();
    let dup = a.iter().map(|v| 3.0 * v + 1.0).collect();
    let ds = preprocess(&table_with(vec![a, discrete, b, dup]), &PreprocessConfig::default()).unwrap();
    assert_eq!(ds.names, vec!["x1", "x3"]);
    assert_eq!(ds.dropped.len(), 2);
    assert!(ds.dropped[1].1.contains("x1"));
    assert_eq!(ds.train_idx.len() + ds.validation_idx.len(), 455);
    assert_eq!(ds.test_idx.len(), 51);
    assert_eq!(ds.validation_idx.len(), 91);
    let train = ds.train_full();
    for k in 0..2 {
        let col: Vec<f64> = train.iter().map(|r| r[k]).collect();
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);
    }
    let raw = &ds.raw.rows[17];
    let back = ds.inverse_transform(&ds.transform(raw));
    assert!((back[0] - raw[0]).abs() < 1e-12 && (back[1] - raw[2]).abs() < 1e-12);
    let record = ds.record_text();
    assert!(record.contains("retained = x1,x3") && record.contains("dropped.x2 = discrete"));
}

#[test]
fn preprocess_needs_two_columns() {
    let a: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
    let dup = a.clone();
    let err = preprocess(&table_with(vec![a, dup]), &PreprocessConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Preprocess(_)));
}

#[test]
fn csv_round_trip() {
    let text = "a,\"b\"\n1.5, 2\n-3,4e-1\n";
    let t = parse_csv(text).unwrap();
    assert_eq!(t.names, vec!["a", "b"]);
    assert_eq!(t.rows, vec![vec![1.5, 2.0], vec![-3.0, 0.4]]);
    assert_eq!(parse_csv(&t.to_csv().unwrap()).unwrap(), t);
    assert!(matches!(parse_csv("a,b\n1,x\n"), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn gaussian_baseline_matches_entropy_and_moments() {
    let train = normals(10000, 10, 1);
    let test = normals(10000, 10, 2);
    let g = gaussian_baseline(&train, &test).unwrap();
    let entropy = 5.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert!((g.test.mean - entropy).abs() < 0.2);
    assert_eq!(g.ridge, 0.0);
    let n = train.len() as f64;
    for i in 0..10 {
        let m: f64 = train.iter().map(|r| r[i]).sum::<f64>() / n;
        assert!((g.mean[i] - m).abs() < 1e-12);
        for j in 0..10 {
            let mj: f64 = train.iter().map(|r| r[j]).sum::<f64>() / n;
            let c = train.iter().map(|r| (r[i] - m) * (r[j] - mj)).sum::<f64>() / n;
            assert!((g.covariance[(i, j)] - c).abs() < 1e-12);
        }
    }
}

#[test]
fn gaussian_baseline_ridge_on_singular_covariance() {
    let train: Vec<Vec<f64>> = normals(50, 1, 3).into_iter().map(|v| vec![v[0], 2.0 * v[0]]).collect();
    let g = gaussian_baseline(&train, &train).unwrap();
    assert!(g.ridge > 0.0);
    assert!(g.test.mean.is_finite());
}

#[test]
fn pipeline_beats_gaussian_on_bimodal_data() {
    let mix = DiagonalMixture::bimodal();
    let data = mix.sample(1000, 31);
    let test = mix.sample(5000, 32);
    let (val, train) = data.split_at(200);
    let run = fit_from_data(train, val, &fixed(10), &data_config(2, 4, 2)).unwrap();
    let sos = negative_log_likelihood(&run.map, &test).unwrap().mean;
    let gauss = gaussian_baseline(&data, &test).unwrap().test.mean;
    assert!(sos < gauss, "{sos} vs {gauss}");
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

#[test]
fn product_joint_conditional_equals_marginal() {
    let mut rng = common::rng(8);
    let a1 = common::random_psd(4, &mut rng) + DMatrix::identity(4, 4) * 0.1;
    let a2 = common::random_psd(3, &mut rng) + DMatrix::identity(3, 3) * 0.1;
    let basis = FeatureBasis::new(IndexSet::tensor(&[3, 2]).unwrap(), ReferenceMeasure::gaussian(2)).unwrap();
    let joint = TriangularMap::from_sos(&SosDensity::normalized(basis, kron(&a1, &a2)).unwrap()).unwrap();
    let map = ComposedMap::new(ReferenceMeasure::gaussian(2), vec![Layer::Full(joint)]).unwrap();
    let b2 = FeatureBasis::new(IndexSet::tensor(&[2]).unwrap(), ReferenceMeasure::gaussian(1)).unwrap();
    let m2 = TriangularMap::from_sos(&SosDensity::normalized(b2, a2).unwrap()).unwrap();
    let marginal = ComposedMap::new(ReferenceMeasure::gaussian(1), vec![Layer::Full(m2)]).unwrap();
    let rows = normals(100, 2, 9);
    let c = conditional_nll(&map, &rows, 1).unwrap();
    let last: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[1]]).collect();
    let m = negative_log_likelihood(&marginal, &last).unwrap();
    assert!((c.mean - m.mean).abs() < 1e-9, "{} vs {}", c.mean, m.mean);
    assert!(conditional_nll(&map, &rows, 0).is_err());
}

#[test]
fn linear_gaussian_conditional_entropy() {
    let rows: Vec<Vec<f64>> = normals(2500, 2, 12)
        .into_iter()
        .map(|z| vec![z[0], z[0] + 0.5 * z[1]])
        .collect();
    let (val, rest) = rows.split_at(300);
    let (test, train) = rest.split_at(700);
    let run = fit_from_data(train, val, &fixed(6), &data_config(2, 2, 5)).unwrap();
    let c = conditional_nll(&run.map, test, 1).unwrap();
    let truth = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 0.25).ln();
    assert!((c.mean - truth).abs() < 0.2, "{} vs {truth}", c.mean);
}

#[test]
fn report_text_round_trips() {
    let mut r = RunReport::new();
    r.set("mode", "data");
    r.set_f64("x", 0.1);
    r.set_array("trace", &[1.0, 2.5]);
    r.timing("layer.1", 0.25);
    let p = RunReport::parse(&r.to_text()).unwrap();
    assert_eq!(p, r);
    assert_eq!(p.get_f64("x"), Some(0.1));
    assert!(!r.deterministic_text().contains("time."));
}

/// 308 rows: two continuous design inputs and a response growing
/// exponentially in the first one, with multiplicative noise.
fn yacht_like(seed: u64) -> Table {
    let mut rng = common::rng(seed);
    let rows = (0..308)
        .map(|_| {
            let froude: f64 = rng.random_range(0.125..0.45);
            let shape: f64 = rng.sample(StandardNormal);
            let noise: f64 = rng.sample(StandardNormal);
            let y = (12.0 * froude + 0.2 * shape + 0.15 * noise).exp();
            vec![froude, shape, y.ln()]
        })
        .collect();
    Table::from_rows(rows).unwrap()
}

#[test]
fn enrichment_improves_conditional_nll() {
    let ds = preprocess(&yacht_like(4), &PreprocessConfig { seed: 1, ..Default::default() }).unwrap();
    let score = |k: usize| {
        let mut c = data_config(3, 3, 6);
        c.enrichment = k;
        let run = fit_from_data(&ds.train(), &ds.validation(), &fixed(8), &c).unwrap();
        conditional_nll(&run.map, &ds.test(), 2).unwrap().mean
    };
    let (k1, k4) = (score(1), score(4));
    assert!(k4 <= k1, "K=4 {k4} vs K=1 {k1}");
}
