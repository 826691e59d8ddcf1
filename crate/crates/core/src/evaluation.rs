//! Scoring a frozen model against a labelled dataset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{ModelError, Scorer};
use crate::graph::Graph;

pub const DEFAULT_BINS: usize = 20;

/// Graphs per inference call.
const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty dataset")]
    Empty,
    #[error("sample {0} has no label")]
    Unlabelled(usize),
    #[error("sample {index} is a {found} graph but the model expects {expected}")]
    Variant {
        index: usize,
        found: &'static str,
        expected: &'static str,
    },
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("absolute error {0} outside [0, 1]")]
    Range(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    /// Zero-based position in the dataset.
    pub id: usize,
    pub label: f64,
    pub prediction: f64,
    pub abs_error: f64,
    pub label_100: f64,
    pub prediction_100: f64,
}

/// Uniform bins over `[0, 1]` with `counts.len() + 1` edges; bin `k` covers
/// `[edges[k], edges[k + 1])` except the last, which also includes 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Two columns, `bin_left,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,count\n");
        for (left, count) in self.edges.iter().zip(&self.counts) {
            out.push_str(&format!("{left},{count}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub size: usize,
    pub mse: f64,
    pub samples: Vec<SampleResult>,
    pub histogram: Histogram,
}

pub fn error_histogram(errors: &[f64], n_bins: usize) -> Result<Histogram, EvalError> {
    if n_bins == 0 {
        return Err(EvalError::NoBins);
    }
    let edges: Vec<f64> = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
    let mut counts = vec![0; n_bins];
    for &e in errors {
        if !(0.0..=1.0).contains(&e) {
            return Err(EvalError::Range(e));
        }
        let mut k = ((e * n_bins as f64) as usize).min(n_bins - 1);
        // keep the bin consistent with the stored edges under rounding
        while k > 0 && e < edges[k] {
            k -= 1;
        }
        while k + 1 < n_bins && e >= edges[k + 1] {
            k += 1;
        }
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Scores every sample with dropout off and summarizes the errors.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    dataset: &[Graph],
    n_bins: usize,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty);
    }
    if n_bins == 0 {
        return Err(EvalError::NoBins);
    }
    let expected = scorer.variant();
    let mut labels = Vec::with_capacity(dataset.len());
    for (i, g) in dataset.iter().enumerate() {
        if g.variant != expected {
            return Err(EvalError::Variant {
                index: i,
                found: g.variant.name(),
                expected: expected.name(),
            });
        }
        labels.push(g.label.ok_or(EvalError::Unlabelled(i))?);
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    for chunk in dataset.chunks(CHUNK) {
        let refs: Vec<&Graph> = chunk.iter().collect();
        predictions.extend(scorer.score_graphs(&refs)?);
    }
    let samples: Vec<SampleResult> = labels
        .iter()
        .zip(&predictions)
        .enumerate()
        .map(|(id, (&label, &prediction))| SampleResult {
            id,
            label,
            prediction,
            abs_error: (prediction - label).abs(),
            label_100: 100.0 * label,
            prediction_100: 100.0 * prediction,
        })
        .collect();
    let mse = samples
        .iter()
        .map(|s| s.abs_error * s.abs_error)
        .sum::<f64>()
        / samples.len() as f64;
    let errors: Vec<f64> = samples.iter().map(|s| s.abs_error).collect();
    Ok(EvalReport {
        size: samples.len(),
        mse,
        histogram: error_histogram(&errors, n_bins)?,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::gnn::{assemble_model, Preset, PresetParams};
    use crate::graph::{build_graph, Variant};
    use crate::numeric::Rng;
    use crate::scenario::{generate_synthetic, SynthConfig};

    struct Oracle;
    impl Scorer for Oracle {
        fn variant(&self) -> Variant {
            Variant::Unlabelled
        }
        fn score_graphs(&self, graphs: &[&Graph]) -> Result<Vec<f64>, ModelError> {
            Ok(graphs.iter().map(|g| g.label.unwrap()).collect())
        }
    }

    struct Constant(f64);
    impl Scorer for Constant {
        fn variant(&self) -> Variant {
            Variant::Unlabelled
        }
        fn score_graphs(&self, graphs: &[&Graph]) -> Result<Vec<f64>, ModelError> {
            Ok(vec![self.0; graphs.len()])
        }
    }

    fn dataset(n: u64) -> Vec<Graph> {
        (0..n)
            .map(|s| {
                build_graph(
                    &generate_synthetic(s, &SynthConfig::default()).unwrap(),
                    Variant::Unlabelled,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn oracle_and_constant_stubs() {
        let data = dataset(30);
        let r = evaluate(&Oracle, &data, DEFAULT_BINS).unwrap();
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.histogram.counts[0], 30);
        let mut split = dataset(4);
        for (i, g) in split.iter_mut().enumerate() {
            g.label = Some((i % 2) as f64);
        }
        let r = evaluate(&Constant(0.5), &split, 10).unwrap();
        assert_eq!(r.mse, 0.25);
        assert_eq!(r.histogram.counts[5], 4);
        assert_eq!(r.samples[1].prediction_100, 50.0);
        assert_eq!(r.samples[1].label_100, 100.0);
    }

    #[test]
    fn errors_name_the_sample() {
        let mut data = dataset(3);
        data[2].label = None;
        assert!(matches!(
            evaluate(&Oracle, &data, 10),
            Err(EvalError::Unlabelled(2))
        ));
        assert!(matches!(evaluate(&Oracle, &[], 10), Err(EvalError::Empty)));
        let labelled = vec![build_graph(
            &generate_synthetic(1, &SynthConfig::default()).unwrap(),
            Variant::Labelled,
        )
        .unwrap()];
        assert!(matches!(
            evaluate(&Oracle, &labelled, 10),
            Err(EvalError::Variant { index: 0, .. })
        ));
    }

    #[test]
    fn histogram_examples() {
        let h = error_histogram(&[0.0; 7], 10).unwrap();
        assert_eq!(h.counts[0], 7);
        assert_eq!(h.counts.iter().sum::<usize>(), 7);
        let h = error_histogram(&[0.05, 0.15], 10).unwrap();
        assert_eq!(&h.counts[..3], &[1, 1, 0]);
        let h = error_histogram(&[1.0, 0.1, 0.3, 0.7], 10).unwrap();
        assert_eq!(h.counts, vec![0, 1, 0, 1, 0, 0, 0, 1, 0, 1]);
        assert!(matches!(
            error_histogram(&[1.5], 10),
            Err(EvalError::Range(_))
        ));
        assert!(matches!(
            error_histogram(&[-0.1], 10),
            Err(EvalError::Range(_))
        ));
        assert!(error_histogram(&[0.5], 0).is_err());
        let mut rng = Rng::new(2);
        let errs: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
        assert_eq!(
            error_histogram(&errs, 20)
                .unwrap()
                .counts
                .iter()
                .sum::<usize>(),
            1000
        );
        assert_eq!(h.to_csv().lines().next(), Some("bin_left,count"));
        assert_eq!(h.to_csv().lines().nth(2), Some("0.1,1"));
    }

    #[test]
    fn evaluation_is_pure_and_order_free() {
        let spec = Preset::Gat
            .build(&PresetParams {
                layers: 2,
                hidden: 6,
                heads: 2,
                final_heads: 2,
                alpha: 0.2,
                dropout: 0.0,
                variant: None,
            })
            .unwrap();
        let model = assemble_model(&spec, &mut Rng::new(4)).unwrap();
        let data = dataset(40);
        let a = evaluate(&model, &data, 20).unwrap();
        assert_eq!(a, evaluate(&model, &data, 20).unwrap());
        let mut rev = data.clone();
        rev.reverse();
        let b = evaluate(&model, &rev, 20).unwrap();
        assert!((a.mse - b.mse).abs() < 1e-15);
        let direct: f64 = a
            .samples
            .iter()
            .map(|s| (s.prediction - s.label).powi(2))
            .sum::<f64>()
            / 40.0;
        assert!((a.mse - direct).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn histogram_conserves_counts(errs in proptest::collection::vec(0.0f64..=1.0, 0..200), bins in 1usize..50) {
            let h = error_histogram(&errs, bins).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<usize>(), errs.len());
            prop_assert_eq!(h.edges.len(), bins + 1);
        }
    }
}
