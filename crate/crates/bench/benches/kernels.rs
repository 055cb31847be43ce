use criterion::{black_box, criterion_group, criterion_main, Criterion};

use rumoverload::colgen::pricing;
use rumoverload::min_tests::fisher_one_sided;
use rumoverload::optim::{nnls, QuadProjectionProblem};
use rumoverload::rum_test::weighting_matrix;
use rumoverload::{enumerate_columns, paper_data, Model, Tolerances};

fn enumeration(c: &mut Criterion) {
    let d = paper_data::design();
    let mut g = c.benchmark_group("enumerate");
    for model in Model::ALL {
        g.bench_function(model.label(), |b| {
            b.iter(|| enumerate_columns(black_box(&d), model).unwrap())
        });
    }
    g.finish();
}

fn projection(c: &mut Criterion) {
    let data = paper_data::dataset();
    let d = data.design();
    let m = enumerate_columns(d, Model::I).unwrap();
    let w = weighting_matrix(d).unwrap();
    let target = data.frequencies().stacked();
    let tol = Tolerances::default();
    let mut g = c.benchmark_group("nnls");
    g.sample_size(10);
    g.bench_function("embedded_model_i", |b| {
        b.iter(|| {
            nnls(
                &QuadProjectionProblem {
                    matrix: &m,
                    target: &target,
                    weights: &w,
                    lower: 0.0,
                },
                &tol,
            )
            .unwrap()
        })
    });
    g.finish();
}

fn fisher(c: &mut Criterion) {
    c.bench_function("fisher_large_cell", |b| {
        b.iter(|| fisher_one_sided(black_box(30), black_box(223), black_box(409), black_box(1832)).unwrap())
    });
}

fn pricing_problem(c: &mut Criterion) {
    let data = paper_data::dataset();
    let d = data.design();
    let target = data.frequencies().stacked();
    // Direction at the all-passive point: the first pricing round.
    let fitted: Vec<f64> = (0..target.len()).map(|r| (r % 2) as f64).collect();
    let w = weighting_matrix(d).unwrap();
    let direction: Vec<f64> = target
        .iter()
        .zip(&fitted)
        .zip(&w)
        .map(|((t, f), w)| w * (t - f))
        .collect();
    let tol = Tolerances::default();
    let mut g = c.benchmark_group("pricing");
    g.sample_size(10);
    for model in Model::ALL {
        g.bench_function(model.label(), |b| {
            b.iter(|| pricing(&direction, &fitted, d, model, &tol).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, enumeration, projection, fisher, pricing_problem);
criterion_main!(benches);
