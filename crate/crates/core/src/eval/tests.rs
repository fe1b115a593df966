use super::*;
use crate::data::{ColumnOrigin, InputColumn, Normalization, Sample};
use crate::net::NetworkSpec;
use crate::rr::SensitiveDomain;

fn stats_row(epoch: usize, cumulative_seconds: f64) -> EpochStats {
    EpochStats {
        epoch,
        loss: 1.0 / (epoch + 1) as f64,
        gamma: None,
        gamma_residual: None,
        gamma_feasible: None,
        certificate_spread: 0.0,
        rollbacks: 0,
        cumulative_seconds,
        fairness_pct: None,
        accuracy_pct: None,
    }
}

fn tiny_dataset() -> Dataset {
    let col = InputColumn {
        name: "x".into(),
        origin: ColumnOrigin::Continuous(Normalization {
            name: "x".into(),
            lo: 0.0,
            hi: 1.0,
            declared: true,
        }),
    };
    Dataset {
        samples: vec![
            Sample { x: vec![0.1], s: 0, y: 1 },
            Sample { x: vec![0.6], s: 1, y: 2 },
            Sample { x: vec![0.9], s: 0, y: 2 },
        ],
        columns: vec![col],
        sensitive: SensitiveDomain::one_hot(vec!["a".into(), "b".into()]).unwrap(),
        label_names: vec!["no".into(), "yes".into()],
        dropped_rows: 0,
    }
}

// Input [x, s0, s1], single logit z = w * input + b; z > 0 predicts class 2.
fn linear_net(weights: [f64; 3], bias: f64) -> (NetworkSpec, Parameters) {
    let spec = NetworkSpec::new(vec![3, 1], 1..3).unwrap();
    let mut params = Parameters::zeros(&spec);
    params.layers[0].weights.copy_from_slice(&weights);
    params.layers[0].biases[0] = bias;
    (spec, params)
}

#[test]
fn tied_network_is_perfectly_fair() {
    let data = tiny_dataset();
    // Sensitive weights equal: prediction cannot depend on s.
    let (spec, params) = linear_net([2.0, 0.3, 0.3], -1.0);
    let report = empirical_fairness(&spec, &params, &data).unwrap();
    assert_eq!(report.total, 3);
    assert_eq!(report.discriminatory, 0);
    assert_eq!(report.fairness_pct, 100.0);
}

#[test]
fn sensitive_weight_gap_flips_predictions() {
    let data = tiny_dataset();
    // z = x + 5*s0 - 5*s1: the sensitive value alone decides the class.
    let (spec, params) = linear_net([1.0, 5.0, -5.0], 0.0);
    let report = empirical_fairness(&spec, &params, &data).unwrap();
    assert_eq!(report.discriminatory, 3);
    assert_eq!(report.fairness_pct, 0.0);
}

#[test]
fn accuracy_counts_matches_at_true_value() {
    let data = tiny_dataset();
    // z = 8x - 6: positive iff x > 0.75, so only samples 1 and 3 are right.
    let (spec, params) = linear_net([8.0, 0.0, 0.0], -6.0);
    let acc = accuracy(&spec, &params, &data).unwrap();
    assert!((acc - 200.0 / 3.0).abs() < 1e-12);
}

#[test]
fn timing_ratio_uses_final_cumulative_seconds() {
    let fair: Vec<EpochStats> =
        (0..=4).map(|e| stats_row(e, e as f64 * 30.5)).collect();
    let erm: Vec<EpochStats> =
        (0..=4).map(|e| stats_row(e, e as f64 * 29.89)).collect();
    let ratio = timing_ratio(&fair, &erm).unwrap();
    assert!((ratio - 30.5 / 29.89).abs() < 1e-12);

    assert!(timing_ratio(&[], &erm).is_err());
    assert!(timing_ratio(&fair, &[stats_row(0, 0.0)]).is_err());
}

#[test]
fn dispersion_is_max_over_median_epoch_time() {
    // Epoch durations 1, 1, 3, 1, 1; median 1, max 3.
    let cum = [0.0, 1.0, 2.0, 5.0, 6.0, 7.0];
    let stats: Vec<EpochStats> =
        cum.iter().enumerate().map(|(e, &c)| stats_row(e, c)).collect();
    let d = epoch_time_dispersion(&stats).unwrap();
    assert!((d - 3.0).abs() < 1e-12);

    assert!(epoch_time_dispersion(&stats[..1]).is_err());
}

#[test]
fn report_csv_round_trips_with_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    let rows = vec![
        ReportRow {
            dataset: "adult".into(),
            attribute: "sex".into(),
            method: "fair".into(),
            fairness_pct: 100.0,
            discriminatory_count: 0,
            accuracy_pct: 82.41,
            total_seconds: 12.5,
            steps_per_sec: 881.3,
        },
        ReportRow {
            dataset: "adult".into(),
            attribute: "sex".into(),
            method: "erm".into(),
            fairness_pct: 94.02,
            discriminatory_count: 191,
            accuracy_pct: 84.77,
            total_seconds: 11.9,
            steps_per_sec: 925.0,
        },
    ];
    write_report(&path, &rows).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, REPORT_COLUMNS.join(","));

    assert_eq!(read_report(&path).unwrap(), rows);
}

#[test]
fn curve_csv_round_trips_optional_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    let stats = vec![
        stats_row(0, 0.0),
        EpochStats {
            epoch: 1,
            loss: 0.45,
            gamma: Some(0.0),
            gamma_residual: Some(1.25e-2),
            gamma_feasible: Some(false),
            certificate_spread: 0.0,
            rollbacks: 2,
            cumulative_seconds: 0.8,
            fairness_pct: Some(100.0),
            accuracy_pct: Some(76.5),
        },
    ];
    write_curves(&path, &stats).unwrap();
    let back = read_curves(&path).unwrap();
    assert_eq!(back, stats);
    assert!(back[0].gamma.is_none());
    assert_eq!(back[1].gamma_feasible, Some(false));
}

#[test]
fn empty_dataset_is_rejected() {
    let (spec, params) = linear_net([1.0, 0.0, 0.0], 0.0);
    let empty = tiny_dataset().with_samples(Vec::new());
    assert!(empirical_fairness(&spec, &params, &empty).is_err());
    assert!(accuracy(&spec, &params, &empty).is_err());
}
