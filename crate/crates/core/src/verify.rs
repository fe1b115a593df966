//! Sound global fairness verification over box input domains.
//!
//! Three layers of machinery, cheapest first: a structural certificate on
//! first-layer sensitive weights (sufficient, exact), an interval-propagation
//! verifier that refines the domain into sub-boxes until every one certifies,
//! and a brute-force grid falsifier used as a testing oracle.
//!
//! A partition verifies if either (a) for every pair of sensitive values the
//! propagated output difference is exactly [0,0], i.e. the two functions
//! coincide on the whole sub-box, or (b) every sensitive value certifies a
//! unique predicted class and the classes agree. Both are sound; (a) catches
//! weight-tied networks without refinement.

use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{forward, predict, EncodingMode, NetworkSpec, Parameters};
use crate::rr::SensitiveDomain;

/// Certificate tolerance in signed-binary mode; one-hot mode demands exact
/// equality because tied weights receive tied updates.
pub const TOL_CERT_SIGNED: f64 = 1e-12;

const FALSIFIER_SEED: u64 = 0x5EED_FA1C;

/// Closed box of non-sensitive feature ranges plus the sensitive domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDomain {
    pub features: Vec<FeatureRange>,
    pub sensitive: SensitiveDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Probe points are snapped to integers when set.
    pub integral: bool,
}

impl InputDomain {
    pub fn new(features: Vec<FeatureRange>, sensitive: SensitiveDomain) -> Result<Self> {
        for f in &features {
            if !f.lo.is_finite() || !f.hi.is_finite() || f.lo > f.hi {
                return Err(Error::Config(format!(
                    "feature `{}` has invalid range [{}, {}]",
                    f.name, f.lo, f.hi
                )));
            }
        }
        Ok(Self { features, sensitive })
    }

    pub fn dims(&self) -> usize {
        self.features.len()
    }

    /// The whole domain as the root partition.
    pub fn full_partition(&self) -> Partition {
        Partition {
            intervals: self.features.iter().map(|f| (f.lo, f.hi)).collect(),
            depth: 0,
        }
    }

    /// Uniform sample of a non-sensitive feature vector.
    pub fn sample_x(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| {
                let v = if f.lo == f.hi { f.lo } else { rng.gen_range(f.lo..=f.hi) };
                if f.integral { v.round().clamp(f.lo, f.hi) } else { v }
            })
            .collect()
    }

    fn check_width(&self, spec: &NetworkSpec) -> Result<()> {
        if self.dims() != spec.nonsensitive_width() {
            return Err(Error::Shape(format!(
                "domain has {} features, network expects {}",
                self.dims(),
                spec.nonsensitive_width()
            )));
        }
        if self.sensitive.encoding_width() != spec.sensitive_width() {
            return Err(Error::Shape(format!(
                "sensitive encoding width {} does not match network slice width {}",
                self.sensitive.encoding_width(),
                spec.sensitive_width()
            )));
        }
        Ok(())
    }
}

/// Sub-box of an [`InputDomain`], intervals in feature order.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub intervals: Vec<(f64, f64)>,
    pub depth: usize,
}

impl Partition {
    /// Midpoint of the sub-box, snapped per the domain's integrality flags.
    pub fn probe_point(&self, domain: &InputDomain) -> Vec<f64> {
        self.intervals
            .iter()
            .zip(&domain.features)
            .map(|(&(lo, hi), f)| {
                let mid = 0.5 * (lo + hi);
                if f.integral { mid.round().clamp(lo, hi) } else { mid }
            })
            .collect()
    }

    /// Splits along the widest dimension measured in domain-normalized
    /// units; ties break to the lowest feature index.
    pub fn split(&self, domain: &InputDomain) -> (Partition, Partition) {
        let mut best = 0;
        let mut best_width = f64::NEG_INFINITY;
        for (i, &(lo, hi)) in self.intervals.iter().enumerate() {
            let full = (domain.features[i].hi - domain.features[i].lo).max(f64::MIN_POSITIVE);
            let w = (hi - lo) / full;
            if w > best_width {
                best_width = w;
                best = i;
            }
        }
        let (lo, hi) = self.intervals[best];
        let mid = 0.5 * (lo + hi);
        let mut left = self.clone();
        let mut right = self.clone();
        left.intervals[best] = (lo, mid);
        right.intervals[best] = (mid, hi);
        left.depth += 1;
        right.depth += 1;
        (left, right)
    }
}

/// Concrete fairness violation: one input, two sensitive values, two labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub s1: usize,
    pub s2: usize,
    pub label1: usize,
    pub label2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictTag {
    Verified,
    Falsified,
    Undecided,
}

/// Verification outcome with search statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub tag: VerdictTag,
    pub counterexample: Option<Counterexample>,
    pub partitions_examined: usize,
    pub max_depth: usize,
    pub elapsed_seconds: f64,
}

impl Verdict {
    fn decided(tag: VerdictTag, partitions: usize, depth: usize, started: Instant) -> Self {
        Self {
            tag,
            counterexample: None,
            partitions_examined: partitions,
            max_depth: depth,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        }
    }

    /// Builds a Falsified verdict, re-checking that the counterexample
    /// really produces differing predictions.
    pub fn falsified(
        spec: &NetworkSpec,
        params: &Parameters,
        domain: &InputDomain,
        x: Vec<f64>,
        s1: usize,
        s2: usize,
        partitions: usize,
        depth: usize,
        started: Instant,
    ) -> Result<Self> {
        let ce = validate_counterexample(spec, params, domain, x, s1, s2)?;
        Ok(Self {
            tag: VerdictTag::Falsified,
            counterexample: Some(ce),
            partitions_examined: partitions,
            max_depth: depth,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        })
    }

    pub fn is_verified(&self) -> bool {
        self.tag == VerdictTag::Verified
    }
}

fn validate_counterexample(
    spec: &NetworkSpec,
    params: &Parameters,
    domain: &InputDomain,
    x: Vec<f64>,
    s1: usize,
    s2: usize,
) -> Result<Counterexample> {
    let label1 = predict(spec, &forward(spec, params, &x, &domain.sensitive.encode(s1)?)?);
    let label2 = predict(spec, &forward(spec, params, &x, &domain.sensitive.encode(s2)?)?);
    if label1 == label2 {
        return Err(Error::Data(format!(
            "counterexample does not re-evaluate to differing labels (both {label1})"
        )));
    }
    Ok(Counterexample { x, s1, s2, label1, label2 })
}

/// Structural sufficient condition for global fairness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub pass: bool,
    /// Worst first-layer sensitive-group spread (one-hot) or largest
    /// absolute sensitive weight (signed-binary).
    pub spread: f64,
}

/// Checks that every first-hidden-layer neuron is invariant to the
/// sensitive encoding: equal weights across each one-hot group, or a zero
/// sensitive-column weight in signed-binary mode. A pass propagates to the
/// whole network because every later layer only composes invariant inputs.
pub fn structural_certificate(spec: &NetworkSpec, params: &Parameters) -> Result<CertificateReport> {
    if !params.matches_spec(spec) {
        return Err(Error::Shape("parameters do not match spec".into()));
    }
    let layer = &params.layers[0];
    let slice = spec.sensitive_slice.clone();
    let mut spread = 0.0_f64;
    match spec.encoding_mode() {
        EncodingMode::OneHot => {
            for r in 0..layer.rows {
                let group = &layer.row(r)[slice.start..slice.end];
                let max = group.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = group.iter().cloned().fold(f64::INFINITY, f64::min);
                spread = spread.max(max - min);
            }
            Ok(CertificateReport { pass: spread <= 0.0, spread })
        }
        EncodingMode::SignedBinary => {
            for r in 0..layer.rows {
                spread = spread.max(layer.weight(r, slice.start).abs());
            }
            Ok(CertificateReport { pass: spread <= TOL_CERT_SIGNED, spread })
        }
    }
}

type Interval = (f64, f64);

fn interval_affine(layer: &crate::net::LayerValues, input: &[Interval]) -> Vec<Interval> {
    let mut out = Vec::with_capacity(layer.rows);
    for r in 0..layer.rows {
        let mut lo = layer.biases[r];
        let mut hi = layer.biases[r];
        for (&w, &(ilo, ihi)) in layer.row(r).iter().zip(input) {
            if w >= 0.0 {
                lo += w * ilo;
                hi += w * ihi;
            } else {
                lo += w * ihi;
                hi += w * ilo;
            }
        }
        out.push((lo, hi));
    }
    out
}

fn interval_relu(v: &[Interval]) -> Vec<Interval> {
    v.iter().map(|&(lo, hi)| (lo.max(0.0), hi.max(0.0))).collect()
}

fn assemble_interval_input(
    spec: &NetworkSpec,
    partition: &Partition,
    s_enc: &[f64],
) -> Vec<Interval> {
    let mut input = vec![(0.0, 0.0); spec.input_width()];
    let mut feat = partition.intervals.iter();
    for (pos, slot) in input.iter_mut().enumerate() {
        if spec.sensitive_slice.contains(&pos) {
            let e = s_enc[pos - spec.sensitive_slice.start];
            *slot = (e, e);
        } else {
            *slot = feat.next().copied().unwrap();
        }
    }
    input
}

/// Sound per-output bounds over the partition with sensitive value `s` fixed.
pub fn propagate_intervals(
    spec: &NetworkSpec,
    params: &Parameters,
    partition: &Partition,
    domain: &InputDomain,
    s: usize,
) -> Result<Vec<Interval>> {
    if !params.matches_spec(spec) {
        return Err(Error::Shape("parameters do not match spec".into()));
    }
    domain.check_width(spec)?;
    if partition.intervals.len() != domain.dims() {
        return Err(Error::Shape("partition does not match domain".into()));
    }
    let s_enc = domain.sensitive.encode(s)?;
    let mut values = assemble_interval_input(spec, partition, &s_enc);
    let depth = spec.depth();
    for l in 0..depth {
        values = interval_affine(&params.layers[l], &values);
        if l + 1 < depth {
            values = interval_relu(&values);
        }
    }
    Ok(values)
}

/// Layer-by-layer bounds for one sensitive value: the per-layer post
/// intervals, needed by the pairwise difference propagation.
fn propagate_layers(
    spec: &NetworkSpec,
    params: &Parameters,
    input: &[Interval],
) -> (Vec<Vec<Interval>>, Vec<Vec<Interval>>) {
    let depth = spec.depth();
    let mut pre = Vec::with_capacity(depth);
    let mut post = Vec::with_capacity(depth);
    let mut values = input.to_vec();
    for l in 0..depth {
        let p = interval_affine(&params.layers[l], &values);
        pre.push(p.clone());
        values = if l + 1 < depth { interval_relu(&p) } else { p };
        post.push(values.clone());
    }
    (pre, post)
}

/// Interval of `f(x, s1) - f(x, s2)` over the partition, exact through the
/// affine layers (the shared `x` cancels; only the encoding difference and
/// the per-neuron differences propagate) and relaxed through ReLU using
/// monotonicity plus 1-Lipschitzness.
fn difference_intervals(
    spec: &NetworkSpec,
    params: &Parameters,
    pre1: &[Vec<Interval>],
    pre2: &[Vec<Interval>],
    enc1: &[f64],
    enc2: &[f64],
) -> Vec<Interval> {
    let mut d: Vec<Interval> = vec![(0.0, 0.0); spec.input_width()];
    for (offset, slot) in d[spec.sensitive_slice.clone()].iter_mut().enumerate() {
        let diff = enc1[offset] - enc2[offset];
        *slot = (diff, diff);
    }
    let depth = spec.depth();
    for l in 0..depth {
        let layer = &params.layers[l];
        let mut next = Vec::with_capacity(layer.rows);
        for r in 0..layer.rows {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for (&w, &(dlo, dhi)) in layer.row(r).iter().zip(&d) {
                if w >= 0.0 {
                    lo += w * dlo;
                    hi += w * dhi;
                } else {
                    lo += w * dhi;
                    hi += w * dlo;
                }
            }
            next.push((lo, hi));
        }
        if l + 1 < depth {
            for (r, slot) in next.iter_mut().enumerate() {
                let a = pre1[l][r];
                let b = pre2[l][r];
                *slot = if a.1 <= 0.0 && b.1 <= 0.0 {
                    // Both sides dead on the whole box.
                    (0.0, 0.0)
                } else if a.0 >= 0.0 && b.0 >= 0.0 {
                    // Both sides linear on the whole box.
                    *slot
                } else {
                    // relu is monotone and 1-Lipschitz: the difference keeps
                    // its sign options but can only shrink toward zero.
                    let relaxed = (slot.0.min(0.0), slot.1.max(0.0));
                    // Also bounded by the box difference of the relu ranges.
                    let ra = (a.0.max(0.0), a.1.max(0.0));
                    let rb = (b.0.max(0.0), b.1.max(0.0));
                    let boxd = (ra.0 - rb.1, ra.1 - rb.0);
                    (relaxed.0.max(boxd.0), relaxed.1.min(boxd.1))
                };
            }
        }
        d = next;
    }
    d
}

/// Class certified by interval logits, if any: `k` wins when its lower
/// bound clears every rival's upper bound (strictly for lower-indexed
/// rivals, which win ties).
fn certified_class(spec: &NetworkSpec, bounds: &[Interval]) -> Option<usize> {
    let logits: Vec<Interval> =
        if spec.output_width() == 1 { vec![(0.0, 0.0), bounds[0]] } else { bounds.to_vec() };
    'outer: for k in 0..logits.len() {
        for j in 0..logits.len() {
            if j == k {
                continue;
            }
            let ok = if j < k { logits[k].0 > logits[j].1 } else { logits[k].0 >= logits[j].1 };
            if !ok {
                continue 'outer;
            }
        }
        return Some(k + 1);
    }
    None
}

/// Outcome of analyzing a single partition.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionOutcome {
    Verified,
    Falsified(Counterexample),
    Undecided,
}

/// Decides one sub-box: Verified when the outputs provably agree for every
/// sensitive pair, Falsified when the midpoint probe produces differing
/// predictions, Undecided otherwise.
pub fn check_partition(
    spec: &NetworkSpec,
    params: &Parameters,
    partition: &Partition,
    domain: &InputDomain,
) -> Result<PartitionOutcome> {
    if !params.matches_spec(spec) {
        return Err(Error::Shape("parameters do not match spec".into()));
    }
    domain.check_width(spec)?;
    let k = domain.sensitive.len();

    let mut encs = Vec::with_capacity(k);
    let mut pres = Vec::with_capacity(k);
    let mut outs = Vec::with_capacity(k);
    for s in 0..k {
        let enc = domain.sensitive.encode(s)?;
        let input = assemble_interval_input(spec, partition, &enc);
        let (pre, post) = propagate_layers(spec, params, &input);
        outs.push(post.last().unwrap().clone());
        pres.push(pre);
        encs.push(enc);
    }

    let mut all_pairs_tied = true;
    'pairs: for s1 in 0..k {
        for s2 in s1 + 1..k {
            let d = difference_intervals(spec, params, &pres[s1], &pres[s2], &encs[s1], &encs[s2]);
            if d.iter().any(|&(lo, hi)| lo != 0.0 || hi != 0.0) {
                all_pairs_tied = false;
                break 'pairs;
            }
        }
    }
    if all_pairs_tied {
        return Ok(PartitionOutcome::Verified);
    }

    let classes: Vec<Option<usize>> = outs.iter().map(|b| certified_class(spec, b)).collect();
    if let Some(first) = classes[0] {
        if classes.iter().all(|c| *c == Some(first)) {
            return Ok(PartitionOutcome::Verified);
        }
    }

    // Midpoint probe for a concrete violation.
    let x = partition.probe_point(domain);
    let mut labels = Vec::with_capacity(k);
    for enc in &encs {
        labels.push(predict(spec, &forward(spec, params, &x, enc)?));
    }
    for s1 in 0..k {
        for s2 in s1 + 1..k {
            if labels[s1] != labels[s2] {
                let ce = validate_counterexample(spec, params, domain, x, s1, s2)?;
                return Ok(PartitionOutcome::Falsified(ce));
            }
        }
    }
    Ok(PartitionOutcome::Undecided)
}

/// Resource limits for the refinement search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyBudget {
    pub max_partitions: usize,
    pub max_seconds: f64,
}

impl Default for VerifyBudget {
    fn default() -> Self {
        Self { max_partitions: 100_000, max_seconds: 60.0 }
    }
}

/// Full verification: the structural certificate short-circuits to
/// Verified; otherwise the domain is refined partition by partition.
pub fn verify(
    spec: &NetworkSpec,
    params: &Parameters,
    domain: &InputDomain,
    budget: VerifyBudget,
) -> Result<Verdict> {
    let started = Instant::now();
    domain.check_width(spec)?;
    if structural_certificate(spec, params)?.pass {
        return Ok(Verdict::decided(VerdictTag::Verified, 1, 0, started));
    }
    verify_by_refinement(spec, params, domain, budget)
}

/// Interval-refinement verification without the structural shortcut.
pub fn verify_by_refinement(
    spec: &NetworkSpec,
    params: &Parameters,
    domain: &InputDomain,
    budget: VerifyBudget,
) -> Result<Verdict> {
    if budget.max_partitions == 0 || budget.max_seconds <= 0.0 {
        return Err(Error::Config("verification budget must be positive".into()));
    }
    let started = Instant::now();
    domain.check_width(spec)?;

    let mut queue = VecDeque::new();
    queue.push_back(domain.full_partition());
    let mut examined = 0;
    let mut max_depth = 0;
    while let Some(partition) = queue.pop_front() {
        if examined >= budget.max_partitions || started.elapsed().as_secs_f64() > budget.max_seconds
        {
            return Ok(Verdict::decided(VerdictTag::Undecided, examined, max_depth, started));
        }
        examined += 1;
        max_depth = max_depth.max(partition.depth);
        match check_partition(spec, params, &partition, domain)? {
            PartitionOutcome::Verified => {}
            PartitionOutcome::Falsified(ce) => {
                return Ok(Verdict {
                    tag: VerdictTag::Falsified,
                    counterexample: Some(ce),
                    partitions_examined: examined,
                    max_depth,
                    elapsed_seconds: started.elapsed().as_secs_f64(),
                });
            }
            PartitionOutcome::Undecided => {
                let (a, b) = partition.split(domain);
                queue.push_back(a);
                queue.push_back(b);
            }
        }
    }
    Ok(Verdict::decided(VerdictTag::Verified, examined, max_depth, started))
}

/// Brute-force falsification oracle: probes a dense grid (when it fits in
/// `sample_count` points) or uniform random samples, trying every sensitive
/// pair at each probe.
pub fn grid_falsify(
    spec: &NetworkSpec,
    params: &Parameters,
    domain: &InputDomain,
    resolution: usize,
    sample_count: usize,
) -> Result<Option<Counterexample>> {
    if resolution < 2 {
        return Err(Error::Config("grid resolution must be >= 2".into()));
    }
    domain.check_width(spec)?;
    let dims = domain.dims();
    let k = domain.sensitive.len();
    let mut encs = Vec::with_capacity(k);
    for s in 0..k {
        encs.push(domain.sensitive.encode(s)?);
    }

    let grid_points = (resolution as f64).powi(dims as i32);
    let exhaustive = grid_points.is_finite() && grid_points <= sample_count as f64;

    let check_x = |x: &[f64]| -> Result<Option<Counterexample>> {
        let mut first_label = None;
        for (s, enc) in encs.iter().enumerate() {
            let label = predict(spec, &forward(spec, params, x, enc)?);
            match first_label {
                None => first_label = Some((s, label)),
                Some((s0, l0)) if l0 != label => {
                    let ce =
                        validate_counterexample(spec, params, domain, x.to_vec(), s0, s)?;
                    return Ok(Some(ce));
                }
                _ => {}
            }
        }
        Ok(None)
    };

    if exhaustive {
        let total = (resolution as u64).pow(dims as u32);
        let mut x = vec![0.0; dims];
        for mut idx in 0..total {
            for (i, f) in domain.features.iter().enumerate() {
                let step = (idx % resolution as u64) as f64;
                idx /= resolution as u64;
                let t = step / (resolution - 1) as f64;
                let v = f.lo + t * (f.hi - f.lo);
                x[i] = if f.integral { v.round().clamp(f.lo, f.hi) } else { v };
            }
            if let Some(ce) = check_x(&x)? {
                return Ok(Some(ce));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(FALSIFIER_SEED);
        for _ in 0..sample_count {
            let x = domain.sample_x(&mut rng);
            if let Some(ce) = check_x(&x)? {
                return Ok(Some(ce));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests;
