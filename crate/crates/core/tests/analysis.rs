use gqnq::analysis::*;
use gqnq::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(centers: &[Vec<f64>], per: usize, std: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std).unwrap();
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            pts.push(center.iter().map(|v| v + noise.sample(&mut rng)).collect());
            labels.push(c);
        }
    }
    (pts, labels)
}

fn separated_pair(dim: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; dim], (0..dim).map(|i| if i % 2 == 0 { 3.0 } else { -3.0 }).collect()]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Mean distance between groups over mean distance within groups.
fn separation_ratio(y: &[[f64; 2]], labels: &[usize]) -> f64 {
    let (mut inter, mut ni, mut intra, mut na) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            let d = dist(y[i], y[j]);
            if labels[i] == labels[j] {
                intra += d;
                na += 1.0;
            } else {
                inter += d;
                ni += 1.0;
            }
        }
    }
    (inter / ni) / (intra / na)
}

#[test]
fn blobs_stay_separated_under_both_embeddings() {
    let (pts, labels) = blobs(&separated_pair(16), 40, 1.0, 1);
    let cfg = TsneConfig { seed: 3, ..Default::default() };
    for method in [EmbedMethod::Pca, EmbedMethod::Tsne] {
        let y = embed2d(&pts, method, &cfg).unwrap();
        assert_eq!(y.len(), pts.len());
        let ratio = separation_ratio(&y, &labels);
        assert!(ratio > 3.0, "{method:?}: {ratio}");
    }
}

#[test]
fn pca_of_planar_points_preserves_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-0.5..0.5)]).collect();
    let y = embed2d(&pts, EmbedMethod::Pca, &TsneConfig::default()).unwrap();
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            let d0 = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            assert!((dist(y[i], y[j]) - d0).abs() < 1e-9);
        }
    }
}

#[test]
fn pca_pads_degenerate_directions() {
    let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64, 1.0]).collect();
    let y = embed2d(&pts, EmbedMethod::Pca, &TsneConfig::default()).unwrap();
    assert!(y.iter().all(|p| p[1] == 0.0));
    assert!((dist(y[0], y[4]) - 80f64.sqrt()).abs() < 1e-9);
    let same = vec![vec![1.0, 2.0]; 4];
    assert!(embed2d(&same, EmbedMethod::Pca, &TsneConfig::default()).unwrap().iter().all(|p| *p == [0.0, 0.0]));
}

#[test]
fn identical_points_get_identical_embeddings() {
    let (mut pts, _) = blobs(&separated_pair(4), 10, 0.5, 4);
    pts.push(pts[3].clone());
    pts.push(pts[12].clone());
    let cfg = TsneConfig { iterations: 300, seed: 1, ..Default::default() };
    for method in [EmbedMethod::Pca, EmbedMethod::Tsne] {
        let y = embed2d(&pts, method, &cfg).unwrap();
        assert_eq!(y[3], y[20]);
        assert_eq!(y[12], y[21]);
        assert_eq!(y, embed2d(&pts, method, &cfg).unwrap());
    }
}

#[test]
fn embedding_rejects_too_few_or_ragged_points() {
    let cfg = TsneConfig::default();
    assert!(matches!(embed2d(&[vec![1.0], vec![2.0]], EmbedMethod::Pca, &cfg), Err(Error::Contract(_))));
    assert!(matches!(
        embed2d(&[vec![1.0], vec![2.0, 1.0], vec![0.0]], EmbedMethod::Tsne, &cfg),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn gmm_recovers_separated_blobs() {
    let centers = vec![vec![0.0; 8], vec![6.0; 8], (0..8).map(|i| if i < 4 { 6.0 } else { -6.0 }).collect()];
    let (pts, truth) = blobs(&centers, 30, 1.0, 5);
    let (model, labels) = fit_gmm(&pts, 3, 7).unwrap();
    assert_eq!(match_rate(&labels, &truth).unwrap(), 1.0);
    assert!((model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(model.variances.iter().flatten().all(|v| *v > 0.0));
    assert_eq!(fit_gmm(&pts, 3, 7).unwrap().1, labels);
}

#[test]
fn gmm_single_component_labels_everything_alike() {
    let (pts, _) = blobs(&separated_pair(3), 10, 1.0, 6);
    let (model, labels) = fit_gmm(&pts, 1, 0).unwrap();
    assert!(labels.iter().all(|&l| l == 0));
    assert_eq!(model.weights, vec![1.0]);
}

#[test]
fn gmm_handles_duplicate_points() {
    let mut pts = vec![vec![0.0, 0.0]; 10];
    pts.extend(vec![vec![5.0, 5.0]; 10]);
    let truth: Vec<usize> = (0..20).map(|i| i / 10).collect();
    let (model, labels) = fit_gmm(&pts, 2, 1).unwrap();
    assert!(model.log_likelihood.is_finite());
    assert_eq!(match_rate(&labels, &truth).unwrap(), 1.0);
}

#[test]
fn gmm_rejects_bad_component_counts() {
    let pts = vec![vec![0.0], vec![1.0]];
    assert!(matches!(fit_gmm(&pts, 0, 0), Err(Error::InvalidParameter(_))));
    assert!(matches!(fit_gmm(&pts, 3, 0), Err(Error::InvalidParameter(_))));
}

#[test]
fn match_rate_examples() {
    assert_eq!(match_rate(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
    assert_eq!(match_rate(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.5);
    assert_eq!(match_rate(&[0, 1, 2, 2], &[0, 0, 1, 1]).unwrap(), 0.75);
    assert_eq!(optimal_assignment(&[2, 0, 1], &[0, 1, 2]).unwrap(), vec![Some(1), Some(2), Some(0)]);
    assert_eq!(optimal_assignment(&[0, 1, 2], &[0, 0, 0]).unwrap().iter().flatten().count(), 1);
}

fn brute_force_rate(labels: &[usize], truth: &[usize], k: usize) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    perms(k)
        .iter()
        .map(|p| labels.iter().zip(truth).filter(|(c, t)| p[**c] == **t).count())
        .max()
        .unwrap() as f64
        / labels.len() as f64
}

proptest! {
    #[test]
    fn match_rate_equals_best_permutation(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40)) {
        let (labels, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let got = match_rate(&labels, &truth).unwrap();
        prop_assert!((got - brute_force_rate(&labels, &truth, 4)).abs() < 1e-12);
    }

    #[test]
    fn match_rate_ignores_cluster_names(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..30), seed in 0u64..1000) {
        let (labels, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let mut perm = vec![0, 1, 2];
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let renamed: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        prop_assert_eq!(match_rate(&labels, &truth).unwrap(), match_rate(&renamed, &truth).unwrap());
    }
}

fn regime_data(n: usize, seed: u64, shuffle: bool) -> (Vec<Vec<f64>>, Vec<Regime>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pure = x[0] + 0.5 * x[1] - 0.2 * x[4] > 0.1;
        labels.push(if pure { Regime::PureFerro } else { Regime::MixedFerro });
        pts.push(x);
    }
    if shuffle {
        labels = (0..n).map(|_| if rng.random::<bool>() { Regime::PureFerro } else { Regime::MixedFerro }).collect();
    }
    (pts, labels)
}

#[test]
fn classifier_fits_separable_labels() {
    let (pts, labels) = regime_data(120, 1, false);
    let clf = RegimeClassifier::train(&pts, &labels, &ClassifierConfig::default()).unwrap();
    assert_eq!(clf.accuracy(&pts, &labels).unwrap(), 1.0);
    let (test, test_labels) = regime_data(200, 2, false);
    assert!(clf.accuracy(&test, &test_labels).unwrap() > 0.9);
    assert!(clf.logit(&pts[0]).unwrap().is_finite());
}

#[test]
fn classifier_on_shuffled_labels_is_chance() {
    let (pts, labels) = regime_data(200, 3, true);
    let clf = RegimeClassifier::train(&pts, &labels, &ClassifierConfig { iterations: 500, ..Default::default() }).unwrap();
    let (test, test_labels) = regime_data(400, 4, true);
    let acc = clf.accuracy(&test, &test_labels).unwrap();
    assert!((acc - 0.5).abs() < 0.1, "{acc}");
}

#[test]
fn classifier_rejects_single_class_and_bad_shapes() {
    let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let one = [Regime::MixedFerro, Regime::MixedFerro];
    assert!(matches!(RegimeClassifier::train(&pts, &one, &ClassifierConfig::default()), Err(Error::InvalidParameter(_))));
    let two = [Regime::MixedFerro, Regime::PureFerro];
    let clf = RegimeClassifier::train(&pts, &two, &ClassifierConfig { iterations: 10, ..Default::default() }).unwrap();
    assert!(matches!(clf.classify(&[1.0]), Err(Error::ShapeMismatch { .. })));
    assert!(RegimeClassifier::train(&pts, &two[..1], &ClassifierConfig::default()).is_err());
}

#[test]
fn regime_from_coupling() {
    assert_eq!(Regime::from_coupling(1.3), Some(Regime::PureFerro));
    assert_eq!(Regime::from_coupling(0.4), Some(Regime::MixedFerro));
    assert_eq!(Regime::from_coupling(1.0), None);
    assert_eq!(Regime::from_coupling(-0.4), None);
}

#[test]
fn csv_and_svg_outputs() {
    let pts = [[0.0, 1.0], [2.0, -1.0], [1.0, 0.5]];
    let labels: Vec<String> = ["cat", "gkp", "cat"].iter().map(|s| s.to_string()).collect();
    let csv = embedding_csv(&pts, &labels);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(2).unwrap().ends_with(",gkp"));
    let svg = scatter_svg(&pts, &labels, "a < b");
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<circle").count(), 3 + 2);
    assert!(svg.contains("a &lt; b"));
    let line = line_svg(&[("mean", &[0.8, 0.85, 0.9]), ("worst", &[0.5, 0.6, 0.7])], "online");
    assert_eq!(line.matches("<polyline").count(), 2);
}
