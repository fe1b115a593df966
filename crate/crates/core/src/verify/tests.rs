use super::*;

use rand::Rng;

fn cont(name: &str, lo: f64, hi: f64) -> FeatureRange {
    FeatureRange { name: name.into(), lo, hi, integral: false }
}

fn binary_domain(features: Vec<FeatureRange>) -> InputDomain {
    let sens = SensitiveDomain::signed_binary(vec!["a".into(), "b".into()]).unwrap();
    InputDomain::new(features, sens).unwrap()
}

fn one_hot_domain(features: Vec<FeatureRange>, k: usize) -> InputDomain {
    let sens = SensitiveDomain::one_hot((0..k).map(|i| format!("v{i}")).collect()).unwrap();
    InputDomain::new(features, sens).unwrap()
}

fn zero_net(sizes: Vec<usize>, slice: std::ops::Range<usize>) -> (NetworkSpec, Parameters) {
    let spec = NetworkSpec::new(sizes, slice).unwrap();
    let params = Parameters::zeros(&spec);
    (spec, params)
}

/// Output = +0.5/-0.5 depending on the sign of the sensitive input.
fn sensitive_sign_net() -> (NetworkSpec, Parameters) {
    let (spec, mut p) = zero_net(vec![2, 1, 1], 0..1);
    *p.layers[0].weight_mut(0, 0) = 1.0;
    *p.layers[1].weight_mut(0, 0) = 1.0;
    p.layers[1].biases[0] = -0.5;
    (spec, p)
}

/// Fair network that intervals cannot decide without refinement: a ReLU
/// neuron fed by the sensitive value is dead everywhere (pre-activation
/// supremum -0.1) but the full-box bounds cannot see it until sub-boxes
/// are narrower than ~0.1.
fn dead_neuron_net() -> (NetworkSpec, Parameters) {
    let spec = NetworkSpec::new(vec![2, 3, 1, 2], 0..1).unwrap();
    let mut p = Parameters::zeros(&spec);
    // n1 = relu(x), n2 = relu(x - 0.5), n3 = relu(s)
    *p.layers[0].weight_mut(0, 1) = 1.0;
    *p.layers[0].weight_mut(1, 1) = 1.0;
    p.layers[0].biases[1] = -0.5;
    *p.layers[0].weight_mut(2, 0) = 1.0;
    // r = relu(n1 - n2 + n3 - 1.6); n1 - n2 = min(x, 0.5), so sup pre = -0.1
    p.layers[1].weights = vec![1.0, -1.0, 1.0];
    p.layers[1].biases = vec![-1.6];
    // z = (r + 0.2, 2r + 0.1): class 1 everywhere since r = 0
    p.layers[2].weights = vec![1.0, 2.0];
    p.layers[2].biases = vec![0.2, 0.1];
    (spec, p)
}

fn random_net(seed: u64, sizes: Vec<usize>, slice: std::ops::Range<usize>) -> (NetworkSpec, Parameters) {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = NetworkSpec::new(sizes, slice).unwrap();
    let mut p = Parameters::zeros(&spec);
    for layer in &mut p.layers {
        for w in &mut layer.weights {
            *w = rng.gen_range(-0.8..0.8);
        }
        for b in &mut layer.biases {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    (spec, p)
}

#[test]
fn certificate_passes_zero_parameters() {
    let (spec, p) = zero_net(vec![4, 3, 2], 0..2);
    let report = structural_certificate(&spec, &p).unwrap();
    assert!(report.pass);
    assert_eq!(report.spread, 0.0);
}

#[test]
fn certificate_measures_one_hot_group_spread() {
    let (spec, mut p) = zero_net(vec![4, 3, 2], 0..2);
    for r in 0..3 {
        *p.layers[0].weight_mut(r, 0) = 0.25;
        *p.layers[0].weight_mut(r, 1) = 0.25;
    }
    assert!(structural_certificate(&spec, &p).unwrap().pass);

    *p.layers[0].weight_mut(1, 0) += 1e-3;
    let report = structural_certificate(&spec, &p).unwrap();
    assert!(!report.pass);
    assert!((report.spread - 1e-3).abs() <= 1e-18);
}

#[test]
fn certificate_signed_binary_allows_tiny_weights() {
    let (spec, mut p) = zero_net(vec![3, 2, 2], 0..1);
    *p.layers[0].weight_mut(0, 0) = 5e-13;
    assert!(structural_certificate(&spec, &p).unwrap().pass);
    *p.layers[0].weight_mut(1, 0) = 1e-3;
    let report = structural_certificate(&spec, &p).unwrap();
    assert!(!report.pass);
    assert!((report.spread - 1e-3).abs() <= 1e-18);
}

#[test]
fn intervals_degenerate_for_constant_network() {
    let (spec, mut p) = zero_net(vec![3, 2, 2], 0..1);
    p.layers[1].biases = vec![0.3, 0.3];
    let domain = binary_domain(vec![cont("a", 0.0, 1.0), cont("b", -2.0, 5.0)]);
    let bounds =
        propagate_intervals(&spec, &p, &domain.full_partition(), &domain, 0).unwrap();
    assert_eq!(bounds, vec![(0.3, 0.3), (0.3, 0.3)]);
}

#[test]
fn intervals_clamp_relu_at_zero() {
    // Single pass-through neuron: relu of a [-1, 2] input is [0, 2].
    let (spec, mut p) = zero_net(vec![2, 1, 1], 0..1);
    *p.layers[0].weight_mut(0, 1) = 1.0;
    *p.layers[1].weight_mut(0, 0) = 1.0;
    let domain = binary_domain(vec![cont("x", -1.0, 2.0)]);
    let bounds =
        propagate_intervals(&spec, &p, &domain.full_partition(), &domain, 0).unwrap();
    assert_eq!(bounds, vec![(0.0, 2.0)]);
}

#[test]
fn intervals_contain_sampled_outputs() {
    use rand::SeedableRng;
    let (spec, p) = random_net(99, vec![4, 3, 2], 0..2);
    let domain = one_hot_domain(vec![cont("a", -1.0, 1.0), cont("b", 0.0, 3.0)], 2);
    let mut partition = domain.full_partition();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for round in 0..3 {
        if round > 0 {
            partition = partition.split(&domain).0;
        }
        for s in 0..2 {
            let bounds = propagate_intervals(&spec, &p, &partition, &domain, s).unwrap();
            let enc = domain.sensitive.encode(s).unwrap();
            for _ in 0..10_000 {
                let x: Vec<f64> = partition
                    .intervals
                    .iter()
                    .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                    .collect();
                let out = forward(&spec, &p, &x, &enc).unwrap();
                for (v, &(lo, hi)) in out.output().iter().zip(&bounds) {
                    assert!(lo <= *v && *v <= hi, "output {v} outside [{lo}, {hi}]");
                }
            }
        }
    }
}

#[test]
fn constant_network_partition_verifies() {
    let (spec, mut p) = zero_net(vec![3, 2, 2], 0..1);
    p.layers[1].biases = vec![0.4, 0.1];
    let domain = binary_domain(vec![cont("a", 0.0, 1.0), cont("b", 0.0, 1.0)]);
    let outcome = check_partition(&spec, &p, &domain.full_partition(), &domain).unwrap();
    assert_eq!(outcome, PartitionOutcome::Verified);
}

#[test]
fn sensitive_sign_partition_falsifies_with_valid_counterexample() {
    let (spec, p) = sensitive_sign_net();
    let domain = binary_domain(vec![cont("x", 0.0, 1.0)]);
    match check_partition(&spec, &p, &domain.full_partition(), &domain).unwrap() {
        PartitionOutcome::Falsified(ce) => {
            assert_ne!(ce.label1, ce.label2);
            assert_ne!(ce.s1, ce.s2);
        }
        other => panic!("expected Falsified, got {other:?}"),
    }
}

#[test]
fn overlapping_bounds_without_probe_violation_stay_undecided() {
    // z = 0.25 s + x + 0.5 on x in [-1, 1]: bounds straddle the threshold
    // for both sensitive values, but the midpoint probe agrees (class 2).
    let (spec, mut p) = zero_net(vec![2, 1], 0..1);
    p.layers[0].weights = vec![0.25, 1.0];
    p.layers[0].biases = vec![0.5];
    let domain = binary_domain(vec![cont("x", -1.0, 1.0)]);
    let outcome = check_partition(&spec, &p, &domain.full_partition(), &domain).unwrap();
    assert_eq!(outcome, PartitionOutcome::Undecided);
}

#[test]
fn verify_constant_network_in_one_partition() {
    let (spec, p) = zero_net(vec![3, 2, 2], 0..1);
    let domain = binary_domain(vec![cont("a", 0.0, 1.0), cont("b", 0.0, 1.0)]);
    let verdict = verify(&spec, &p, &domain, VerifyBudget::default()).unwrap();
    assert_eq!(verdict.tag, VerdictTag::Verified);
    assert_eq!(verdict.partitions_examined, 1);
}

#[test]
fn refinement_verifies_dead_neuron_network() {
    let (spec, p) = dead_neuron_net();
    // Certificate fails (live sensitive weight), so refinement must work.
    assert!(!structural_certificate(&spec, &p).unwrap().pass);
    let domain = binary_domain(vec![cont("x", 0.0, 1.0)]);
    let budget = VerifyBudget { max_partitions: 10_000, max_seconds: 60.0 };
    let verdict = verify_by_refinement(&spec, &p, &domain, budget).unwrap();
    assert_eq!(verdict.tag, VerdictTag::Verified);
    assert!(verdict.partitions_examined > 1, "fixture must require refinement");
    assert!(verdict.partitions_examined <= 10_000);
    assert!(verdict.max_depth >= 2);
}

#[test]
fn tied_network_verifies_without_refinement_or_certificate() {
    // Random net with equal one-hot sensitive weights: the exact pairwise
    // difference propagation proves equality on the root partition.
    let (spec, mut p) = random_net(3, vec![4, 3, 2], 0..2);
    for r in 0..3 {
        let w = p.layers[0].weight(r, 0);
        *p.layers[0].weight_mut(r, 1) = w;
    }
    let domain = one_hot_domain(vec![cont("a", -2.0, 2.0), cont("b", -2.0, 2.0)], 2);
    let budget = VerifyBudget::default();
    let verdict = verify_by_refinement(&spec, &p, &domain, budget).unwrap();
    assert_eq!(verdict.tag, VerdictTag::Verified);
    assert_eq!(verdict.partitions_examined, 1);
}

#[test]
fn verify_falsifies_sensitive_sign_network() {
    let (spec, p) = sensitive_sign_net();
    let domain = binary_domain(vec![cont("x", 0.0, 1.0)]);
    let verdict = verify(&spec, &p, &domain, VerifyBudget::default()).unwrap();
    assert_eq!(verdict.tag, VerdictTag::Falsified);
    let ce = verdict.counterexample.unwrap();
    assert_ne!(ce.label1, ce.label2);
}

#[test]
fn budget_exhaustion_returns_undecided() {
    let (spec, mut p) = zero_net(vec![2, 1], 0..1);
    p.layers[0].weights = vec![0.25, 1.0];
    p.layers[0].biases = vec![0.5];
    let domain = binary_domain(vec![cont("x", -1.0, 1.0)]);
    let budget = VerifyBudget { max_partitions: 1, max_seconds: 60.0 };
    let verdict = verify_by_refinement(&spec, &p, &domain, budget).unwrap();
    assert_eq!(verdict.tag, VerdictTag::Undecided);
    assert_eq!(verdict.partitions_examined, 1);
    assert!(verify_by_refinement(&spec, &p, &domain, VerifyBudget { max_partitions: 0, max_seconds: 1.0 }).is_err());
}

#[test]
fn falsified_verdict_construction_rechecks_labels() {
    let (spec, p) = zero_net(vec![3, 2, 2], 0..1);
    let domain = binary_domain(vec![cont("a", 0.0, 1.0), cont("b", 0.0, 1.0)]);
    let err = Verdict::falsified(
        &spec,
        &p,
        &domain,
        vec![0.5, 0.5],
        0,
        1,
        1,
        0,
        Instant::now(),
    );
    assert!(err.is_err(), "constant network cannot have a counterexample");
}

#[test]
fn split_prefers_widest_normalized_dimension() {
    let domain = binary_domain(vec![cont("a", 0.0, 1.0), cont("b", 0.0, 10.0)]);
    let root = domain.full_partition();
    // Both dims have normalized width 1: the tie goes to dimension 0.
    let (left, _) = root.split(&domain);
    assert_eq!(left.intervals[0], (0.0, 0.5));
    assert_eq!(left.intervals[1], (0.0, 10.0));
    // After halving dim 0, dim 1 is relatively wider and splits next.
    let (deeper, _) = left.split(&domain);
    assert_eq!(deeper.intervals[0], (0.0, 0.5));
    assert_eq!(deeper.intervals[1], (0.0, 5.0));
    assert_eq!(deeper.depth, 2);
}

#[test]
fn probe_point_snaps_integral_features() {
    let mut features = vec![cont("a", 0.0, 5.0)];
    features[0].integral = true;
    let domain = binary_domain(features);
    let probe = domain.full_partition().probe_point(&domain);
    assert_eq!(probe, vec![3.0]); // midpoint 2.5 rounds to 3
}

#[test]
fn grid_falsify_examples() {
    let (spec, p) = zero_net(vec![3, 2, 2], 0..1);
    let domain = binary_domain(vec![cont("a", 0.0, 1.0), cont("b", 0.0, 1.0)]);
    assert!(grid_falsify(&spec, &p, &domain, 10, 1000).unwrap().is_none());

    let (spec, p) = sensitive_sign_net();
    let domain = binary_domain(vec![cont("x", 0.0, 1.0)]);
    let ce = grid_falsify(&spec, &p, &domain, 10, 1000).unwrap().expect("must falsify");
    assert_ne!(ce.label1, ce.label2);

    assert!(grid_falsify(&spec, &p, &domain, 1, 1000).is_err());
}

#[test]
fn grid_falsify_random_sampling_path() {
    // 6 continuous dims at resolution 50 exceed any sample budget, forcing
    // the random-sampling branch.
    let (spec, p) = {
        let spec = NetworkSpec::new(vec![7, 2, 1], 0..1).unwrap();
        let mut p = Parameters::zeros(&spec);
        *p.layers[0].weight_mut(0, 0) = 1.0;
        *p.layers[1].weight_mut(0, 0) = 1.0;
        p.layers[1].biases[0] = -0.5;
        (spec, p)
    };
    let features = (0..6).map(|i| cont(&format!("f{i}"), 0.0, 1.0)).collect();
    let domain = binary_domain(features);
    let ce = grid_falsify(&spec, &p, &domain, 50, 500).unwrap().expect("must falsify");
    assert_ne!(ce.label1, ce.label2);
}

#[test]
fn verified_never_coexists_with_grid_counterexample() {
    let domain = binary_domain(vec![cont("a", -1.0, 1.0), cont("b", -1.0, 1.0)]);
    let budget = VerifyBudget { max_partitions: 300, max_seconds: 10.0 };
    let mut verified = 0;
    for seed in 0..100u64 {
        let (spec, mut p) = random_net(seed, vec![3, 3, 2], 0..1);
        if seed % 3 == 0 {
            // Mix in structurally fair cases so Verified actually occurs.
            for r in 0..3 {
                *p.layers[0].weight_mut(r, 0) = 0.0;
            }
        }
        let verdict = verify(&spec, &p, &domain, budget).unwrap();
        if verdict.is_verified() {
            verified += 1;
            let ce = grid_falsify(&spec, &p, &domain, 50, 10_000).unwrap();
            assert!(ce.is_none(), "seed {seed}: Verified but falsifiable: {ce:?}");
        }
    }
    assert!(verified >= 10, "soundness check vacuous: only {verified} Verified");
}

#[test]
fn falsified_counterexamples_from_verify_are_valid() {
    let domain = binary_domain(vec![cont("a", -1.0, 1.0), cont("b", -1.0, 1.0)]);
    let budget = VerifyBudget { max_partitions: 300, max_seconds: 10.0 };
    let mut falsified = 0;
    for seed in 100..160u64 {
        let (spec, p) = random_net(seed, vec![3, 3, 2], 0..1);
        let verdict = verify(&spec, &p, &domain, budget).unwrap();
        if verdict.tag == VerdictTag::Falsified {
            falsified += 1;
            let ce = verdict.counterexample.expect("Falsified carries a counterexample");
            let l1 = predict(
                &spec,
                &forward(&spec, &p, &ce.x, &domain.sensitive.encode(ce.s1).unwrap()).unwrap(),
            );
            let l2 = predict(
                &spec,
                &forward(&spec, &p, &ce.x, &domain.sensitive.encode(ce.s2).unwrap()).unwrap(),
            );
            assert_ne!(l1, l2);
            assert_eq!((l1, l2), (ce.label1, ce.label2));
        }
    }
    assert!(falsified >= 10, "falsification check vacuous: only {falsified}");
}

#[test]
fn domain_validation_rejects_bad_ranges() {
    let sens = SensitiveDomain::signed_binary(vec!["a".into(), "b".into()]).unwrap();
    assert!(InputDomain::new(vec![cont("x", 1.0, 0.0)], sens.clone()).is_err());
    assert!(InputDomain::new(vec![cont("x", 0.0, f64::INFINITY)], sens).is_err());
}

#[test]
fn verify_rejects_mismatched_domain() {
    let (spec, p) = zero_net(vec![3, 2, 2], 0..1);
    let domain = binary_domain(vec![cont("a", 0.0, 1.0)]); // needs 2 features
    assert!(verify(&spec, &p, &domain, VerifyBudget::default()).is_err());
}
