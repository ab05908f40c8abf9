mod common;

use sq_core::eval::{contrast_ratio, evaluate, weighted_f1};
use sq_core::io::{
    decode_codebook, decode_embeddings, encode_codebook, encode_embeddings, parse_points, read_trace,
    write_trace,
};
use sq_core::kmeans::run_lloyd;
use sq_core::model::Labels;
use sq_core::objective::empirical_objective;
use sq_core::sq::run_sq;
use sq_core::synth::{generate, uniform_cube, MixtureSpec};
use sq_core::{
    Codebook32, Codebook64, FeatureSet32, FeatureSet64, KMeansConfig64, Schedule32, SqConfig32,
    SqConfig64,
};

#[test]
fn one_dimensional_oracle_matches_enumeration() {
    for seed in 0..8 {
        let data = common::uniform_points(seed, 7, 1, 0.0, 10.0);
        for k in 1..=3 {
            let dp = common::optimum_1d(data.points(), k);
            let bf = common::brute_force_optimum(&data, k);
            assert!((dp - bf).abs() < 1e-12, "seed {seed} k {k}: {dp} vs {bf}");
        }
    }
}

#[test]
fn brute_force_beats_every_solver() {
    for seed in 0..5 {
        let data = common::uniform_points(40 + seed, 8, 2, -1.0, 1.0);
        let f_star = common::brute_force_optimum(&data, 2);
        let mut cfg = KMeansConfig64::new(2);
        cfg.seed = seed;
        let run = run_lloyd(&data, &cfg).unwrap();
        assert!(empirical_objective(&data, &run.codebook).unwrap() >= f_star - 1e-12);
    }
}

#[test]
fn embedding_and_codebook_round_trip() {
    let spec = MixtureSpec::isotropic(&[vec![0.0, 1.0, 2.0], vec![4.0, 4.0, 4.0]], 0.3, 40, 6);
    let data = generate(&spec).unwrap();
    let back = decode_embeddings(&encode_embeddings(&data)).unwrap();
    assert_eq!(back.points(), data.points());
    assert_eq!(back.labels(), data.labels());

    let cb = Codebook64::new(vec![0.1, 0.2, 0.3, 1.0, 2.0, 3.0], 3, 1.5, 3.0).unwrap();
    let labels = [Some(1), None];
    let file = decode_codebook(&encode_codebook(&cb, Some(&labels)).unwrap()).unwrap();
    assert_eq!(file.codebook, cb);
    assert_eq!(file.quant_labels.as_deref(), Some(&labels[..]));
}

#[test]
fn trace_file_round_trip() {
    let data = uniform_cube(2, 50, 3).unwrap();
    let mut cfg = SqConfig64::new(3, 200);
    cfg.eval_stride = Some(25);
    let run = run_sq(&data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&path, &run.trace).unwrap();
    let back = read_trace(&path).unwrap();
    assert_eq!(back, run.trace);
}

#[test]
fn evaluation_on_perfect_and_disjoint_fixtures() {
    let train = parse_points("0,0,0\n0.2,0,0\n10,10,1\n10,10.2,1\n", true).unwrap();
    let cb = Codebook64::euclidean(vec![0.1, 0.0, 10.0, 10.1], 2).unwrap();
    let report = evaluate(&cb, &train, &train).unwrap();
    assert_eq!(report.weighted_f1, 1.0);
    assert_eq!(report.quant_labels, vec![Some(0), Some(1)]);

    let swapped = parse_points("0,0,1\n0.2,0,1\n10,10,0\n10,10.2,0\n", true).unwrap();
    let report = evaluate(&cb, &train, &swapped).unwrap();
    assert_eq!(report.weighted_f1, 0.0);
    assert_eq!(report.confusion_matrix, vec![vec![0, 2], vec![2, 0]]);

    // by hand: class 0 has P = 1, R = 1/2, F1 = 2/3; class 1 has P = 1/2, R = 1, F1 = 2/3
    let f = weighted_f1(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
    assert!((f - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn contrast_shrinks_with_dimension() {
    let mean_contrast = |dim: usize| -> f64 {
        (0..20u64)
            .map(|seed| {
                let data = uniform_cube(dim, 200, seed).unwrap();
                let cb = Codebook64::euclidean(
                    uniform_cube(dim, 1, 1000 + seed).unwrap().points().to_vec(),
                    dim,
                )
                .unwrap();
                contrast_ratio(&data, &cb).unwrap()
            })
            .sum::<f64>()
            / 20.0
    };
    let low = mean_contrast(2);
    let high = mean_contrast(200);
    assert!(high < low, "{high} vs {low}");
    assert!(high < 1.0);
}

#[test]
fn single_precision_pipeline() {
    let data: FeatureSet32 = uniform_cube(2, 100, 11).unwrap().cast();
    let mut cfg = SqConfig32::new(2, 2000);
    cfg.schedule = Schedule32::polynomial(0.25, 0.75);
    let run = run_sq(&data, &cfg).unwrap();
    let f: f32 = empirical_objective(&data, &run.codebook).unwrap();
    assert!(f.is_finite());
    assert!(run.trace.last_objective().unwrap() <= run.trace.first_objective().unwrap());
    let cb: Codebook32 = run.codebook.clone();
    let wide: Codebook64 = cb.cast();
    let data64: FeatureSet64 = data.cast();
    let f64v = empirical_objective(&data64, &wide).unwrap();
    assert!((f64v - f as f64).abs() < 1e-4);
}

#[test]
fn labels_survive_weighted_construction() {
    let data = FeatureSet64::with_weights(vec![0.0, 1.0, 2.0], 1, vec![0.5, 0.25, 0.25])
        .unwrap()
        .with_labels(Labels::new(vec![Some(0), None, Some(2)], 3).unwrap())
        .unwrap();
    assert_eq!(data.labels().unwrap().labeled_count(), 2);
    let cb = Codebook64::euclidean(vec![0.0], 1).unwrap();
    // 0.25 · 1 + 0.25 · 4
    assert!((empirical_objective(&data, &cb).unwrap() - 1.25).abs() < 1e-15);
}
