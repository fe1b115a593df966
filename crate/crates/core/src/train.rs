//! Gradient descent that keeps a fair network fair.
//!
//! When the tie certificate holds, per-sample gradients differ across
//! sensitive values only in the first-layer sensitive columns, so each
//! step runs one backward pass per sample at the true value and then
//! rewrites those columns in randomized-response form: averaged over drawn
//! responses (stochastic mode) or taken in exact expectation. A safeguard
//! projects any remaining tie-breaking component before the update, and an
//! update that still breaks the certificate beyond tolerance is rolled
//! back and counted.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval;
use crate::net::{
    backward_into, forward_into, loss, EncodingMode, ForwardTrace, GradientSet, NetworkSpec,
    Parameters,
};
use crate::rr::{solve_gamma, GammaSolution, GradientTable, RRConfig, SensitiveFrontier};
use crate::verify::structural_certificate;

pub const DEFAULT_ETA: f64 = 0.01;
pub const DEFAULT_BATCH: usize = 64;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_DELTA: usize = 8;
pub const DEFAULT_TOL_FAIR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    /// Sensitive columns averaged over `delta` randomized-response draws
    /// per sample and batch.
    Stochastic,
    /// Sensitive columns in closed-form expectation over the response
    /// distribution; deterministic given the seed.
    Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaSchedule {
    /// Solve on the first batch of each epoch and reuse within it.
    PerEpoch,
    /// Re-solve on every batch.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: TrainMode,
    /// Response draws per sample and batch in stochastic mode.
    pub delta: usize,
    pub gamma_schedule: GammaSchedule,
    /// Project tie-breaking gradient components to their group mean
    /// instead of halting when the budget system is infeasible.
    pub projection_fallback: bool,
    pub tol_fair: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            batch_size: DEFAULT_BATCH,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            mode: TrainMode::Expectation,
            delta: DEFAULT_DELTA,
            gamma_schedule: GammaSchedule::PerEpoch,
            projection_fallback: true,
            tol_fair: DEFAULT_TOL_FAIR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.eta)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.delta == 0 {
            return Err(Error::Config("delta must be >= 1".into()));
        }
        if !(self.tol_fair.is_finite() && self.tol_fair >= 0.0) {
            return Err(Error::Config(format!(
                "fairness tolerance must be >= 0, got {}",
                self.tol_fair
            )));
        }
        Ok(())
    }
}

/// One row of the training record; row 0 describes the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's visits (full-set loss at
    /// epoch 0).
    pub loss: f64,
    pub gamma: Option<f64>,
    pub gamma_residual: Option<f64>,
    pub gamma_feasible: Option<bool>,
    pub certificate_spread: f64,
    pub rollbacks: usize,
    /// Training-loop wall clock so far, excluding evaluation; monotone.
    pub cumulative_seconds: f64,
    pub fairness_pct: Option<f64>,
    pub accuracy_pct: Option<f64>,
}

/// One budget solve, recorded at every schedule tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTick {
    pub epoch: usize,
    pub step: usize,
    pub gamma: f64,
    pub residual: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Parameters,
    /// `epochs + 1` rows, led by the epoch-0 state.
    pub stats: Vec<EpochStats>,
    /// Empty for the plain trainer.
    pub gamma_ticks: Vec<GammaTick>,
    pub total_rollbacks: usize,
    pub steps: usize,
}

impl TrainOutcome {
    pub fn train_seconds(&self) -> f64 {
        self.stats.last().map_or(0.0, |s| s.cumulative_seconds)
    }

    pub fn steps_per_sec(&self) -> f64 {
        let secs = self.train_seconds();
        if secs > 0.0 {
            self.steps as f64 / secs
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreserveReport {
    /// Worst tie-breaking magnitude before adjustment: group spread in
    /// one-hot mode, absolute sensitive component in signed mode.
    pub max_deviation: f64,
    /// Some component exceeded `tol_fair`.
    pub exceeded: bool,
    /// Components were replaced to restore exact tie preservation.
    pub projected: bool,
}

/// Safeguards one gradient before it is applied. `tol_fair` only
/// classifies the tie-breaking magnitude as `exceeded`; with `project` set
/// every untied sensitive group is re-tied exactly (group mean in one-hot
/// mode, zero in signed mode), because even sub-tolerance components
/// accumulate into the weights and break the exact-equality certificate
/// after enough steps. All other parameters pass through untouched.
pub fn preserve_step(
    spec: &NetworkSpec,
    grad: &mut GradientSet,
    tol_fair: f64,
    project: bool,
) -> Result<PreserveReport> {
    if grad.layers.len() != spec.depth()
        || grad.layers[0].cols != spec.layer_sizes[0]
        || grad.layers[0].rows != spec.layer_sizes[1]
    {
        return Err(Error::Shape("gradient does not match spec".into()));
    }
    let slice = spec.sensitive_slice.clone();
    let layer = &mut grad.layers[0];
    let mut max_deviation = 0.0_f64;
    let mut exceeded = false;
    let mut projected = false;
    match spec.encoding_mode() {
        EncodingMode::OneHot => {
            let k = slice.len() as f64;
            for r in 0..layer.rows {
                let group = &layer.row(r)[slice.start..slice.end];
                let max = group.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = group.iter().cloned().fold(f64::INFINITY, f64::min);
                let spread = max - min;
                max_deviation = max_deviation.max(spread);
                if spread > tol_fair {
                    exceeded = true;
                }
                if project && spread > 0.0 {
                    let mean = group.iter().sum::<f64>() / k;
                    for c in slice.clone() {
                        *layer.weight_mut(r, c) = mean;
                    }
                    projected = true;
                }
            }
        }
        EncodingMode::SignedBinary => {
            for r in 0..layer.rows {
                let dev = layer.weight(r, slice.start).abs();
                max_deviation = max_deviation.max(dev);
                if dev > tol_fair {
                    exceeded = true;
                }
                if project && dev > 0.0 {
                    *layer.weight_mut(r, slice.start) = 0.0;
                    projected = true;
                }
            }
        }
    }
    Ok(PreserveReport { max_deviation, exceeded, projected })
}

/// Per-group first-layer delta sums over a set of samples: `sums[s*h1+j]`
/// is the summed backward delta of neuron `j` over samples with true
/// sensitive value `s`. Valid whenever the tie certificate holds, because
/// then the deltas do not depend on the released sensitive value.
struct GroupDeltas {
    sums: Vec<f64>,
    h1: usize,
    k: usize,
}

impl GroupDeltas {
    fn new(h1: usize, k: usize) -> Self {
        Self { sums: vec![0.0; h1 * k], h1, k }
    }

    fn reset(&mut self) {
        self.sums.iter_mut().for_each(|v| *v = 0.0);
    }

    fn get(&self, s: usize, j: usize) -> f64 {
        self.sums[s * self.h1 + j]
    }

    fn add(&mut self, s: usize, j: usize, d: f64) {
        self.sums[s * self.h1 + j] += d;
    }

    /// Zero-sum equation table: in one-hot mode one equation per neuron
    /// and released column, in signed mode one per neuron and true group.
    fn table(&self, mode: EncodingMode) -> Result<GradientTable> {
        let mut table = GradientTable::new(self.k);
        for j in 0..self.h1 {
            match mode {
                EncodingMode::OneHot => {
                    let grads: Vec<f64> = (0..self.k).map(|s| self.get(s, j)).collect();
                    for c in 0..self.k {
                        table.push(grads.clone(), c)?;
                    }
                }
                EncodingMode::SignedBinary => {
                    for s in 0..2 {
                        let a = self.get(s, j);
                        table.push(vec![a, -a], s)?;
                    }
                }
            }
        }
        Ok(table)
    }
}

/// Reads the first-layer backward deltas out of a true-encoding sample
/// gradient. One-hot: the entry at the true column is the delta itself.
/// Signed: the column entry times the +-1 encoding.
fn delta_row(
    spec: &NetworkSpec,
    sample_grad: &GradientSet,
    s_true: usize,
    enc: &[f64],
    out: &mut [f64],
) {
    let layer = &sample_grad.layers[0];
    let slice = &spec.sensitive_slice;
    match spec.encoding_mode() {
        EncodingMode::OneHot => {
            let col = slice.start + s_true;
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = layer.weight(j, col);
            }
        }
        EncodingMode::SignedBinary => {
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = layer.weight(j, slice.start) * enc[0];
            }
        }
    }
}

/// Draws `delta` released values per sample (pass-major order) and counts
/// them per sample into `freqs[i*k + released]`.
fn draw_freqs(
    rr: &RRConfig,
    true_values: &[usize],
    delta: usize,
    rng: &mut ChaCha8Rng,
    freqs: &mut [u32],
) -> Result<()> {
    let k = rr.domain.len();
    freqs.iter_mut().for_each(|c| *c = 0);
    for _ in 0..delta {
        for (i, &s) in true_values.iter().enumerate() {
            let released = rr.sample(s, rng)?;
            freqs[i * k + released] += 1;
        }
    }
    Ok(())
}

/// Overwrites the first-layer sensitive columns of an accumulated batch
/// gradient with their randomized-response form.
fn write_rr_columns(
    spec: &NetworkSpec,
    grad: &mut GradientSet,
    mode: TrainMode,
    rr: &RRConfig,
    group: &GroupDeltas,
    deltas: &[f64],
    freqs: &[u32],
    delta_draws: usize,
) -> Result<()> {
    let slice = spec.sensitive_slice.clone();
    let h1 = group.h1;
    let k = group.k;
    let layer = &mut grad.layers[0];
    match (spec.encoding_mode(), mode) {
        (EncodingMode::OneHot, TrainMode::Expectation) => {
            for c in 0..k {
                for j in 0..h1 {
                    let mut acc = 0.0;
                    for s in 0..k {
                        acc += group.get(s, j) * rr.response_prob(s, c)?;
                    }
                    *layer.weight_mut(j, slice.start + c) = acc;
                }
            }
        }
        (EncodingMode::SignedBinary, TrainMode::Expectation) => {
            let factor = 2.0 * rr.keep_probability() - 1.0;
            for j in 0..h1 {
                *layer.weight_mut(j, slice.start) =
                    factor * (group.get(0, j) - group.get(1, j));
            }
        }
        (EncodingMode::OneHot, TrainMode::Stochastic) => {
            let m = deltas.len() / h1;
            for c in 0..k {
                for j in 0..h1 {
                    let mut acc = 0.0;
                    for i in 0..m {
                        acc += deltas[i * h1 + j] * freqs[i * k + c] as f64;
                    }
                    *layer.weight_mut(j, slice.start + c) = acc / delta_draws as f64;
                }
            }
        }
        (EncodingMode::SignedBinary, TrainMode::Stochastic) => {
            let m = deltas.len() / h1;
            for j in 0..h1 {
                let mut acc = 0.0;
                for i in 0..m {
                    let net = freqs[i * k] as f64 - freqs[i * k + 1] as f64;
                    acc += deltas[i * h1 + j] * net;
                }
                *layer.weight_mut(j, slice.start) = acc / delta_draws as f64;
            }
        }
    }
    Ok(())
}

/// Builds the sensitive frontier at the current parameters from the first
/// `limit` samples: every first-hidden-layer neuron, with the zero-sum
/// gradient table aggregated over those samples.
pub fn build_frontier(
    spec: &NetworkSpec,
    params: &Parameters,
    data: &Dataset,
    limit: usize,
) -> Result<SensitiveFrontier> {
    check_dataset(spec, data)?;
    if data.is_empty() || limit == 0 {
        return Err(Error::Data("need at least one sample".into()));
    }
    let h1 = spec.layer_sizes[1];
    let k = data.sensitive.len();
    let mut group = GroupDeltas::new(h1, k);
    let mut trace = ForwardTrace::empty(spec);
    let mut sample_grad = GradientSet::zeros(spec);
    let mut row = vec![0.0; h1];
    for sample in data.samples.iter().take(limit) {
        let enc = data.sensitive.encode(sample.s)?;
        forward_into(spec, params, &sample.x, &enc, &mut trace)?;
        backward_into(spec, params, &trace, sample.y, &mut sample_grad)?;
        delta_row(spec, &sample_grad, sample.s, &enc, &mut row);
        for (j, &d) in row.iter().enumerate() {
            group.add(sample.s, j, d);
        }
    }
    Ok(SensitiveFrontier {
        coordinates: (0..h1).map(|j| (1, j)).collect(),
        table: group.table(spec.encoding_mode())?,
    })
}

fn check_dataset(spec: &NetworkSpec, data: &Dataset) -> Result<()> {
    if data.feature_width() != spec.nonsensitive_width() {
        return Err(Error::Shape(format!(
            "dataset has {} feature columns, network expects {}",
            data.feature_width(),
            spec.nonsensitive_width()
        )));
    }
    if data.sensitive.encoding_width() != spec.sensitive_width()
        || data.sensitive.mode() != spec.encoding_mode()
    {
        return Err(Error::Shape(
            "sensitive domain encoding does not match the network's sensitive slice".into(),
        ));
    }
    if data.num_classes() != spec.num_classes() {
        return Err(Error::Shape(format!(
            "dataset has {} classes, network predicts {}",
            data.num_classes(),
            spec.num_classes()
        )));
    }
    Ok(())
}

/// Trains with fairness-preserving updates. Requires initial parameters
/// that pass the tie certificate; the returned parameters still pass it.
/// `probe` adds held-out fairness/accuracy columns to the stats.
pub fn train_fair(
    spec: &NetworkSpec,
    init: &Parameters,
    data: &Dataset,
    probe: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    run(spec, init, data, probe, config, true)
}

/// Plain SGD at the true sensitive encodings, with instrumentation
/// identical to [`train_fair`] for timing comparisons. The randomization
/// and projection settings in the config are ignored.
pub fn train_erm(
    spec: &NetworkSpec,
    init: &Parameters,
    data: &Dataset,
    probe: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    run(spec, init, data, probe, config, false)
}

fn run(
    spec: &NetworkSpec,
    init: &Parameters,
    data: &Dataset,
    probe: Option<&Dataset>,
    config: &TrainConfig,
    fair: bool,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_dataset(spec, data)?;
    if let Some(p) = probe {
        check_dataset(spec, p)?;
    }
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if !init.matches_spec(spec) {
        return Err(Error::Shape("parameters do not match spec".into()));
    }
    init.validate_finite()?;
    if fair {
        let cert = structural_certificate(spec, init)?;
        if !cert.pass {
            return Err(Error::Config(format!(
                "initial parameters break sensitive ties (spread {:.3e}); start from a \
                 verified initialization",
                cert.spread
            )));
        }
    }

    let n = data.len();
    let h1 = spec.layer_sizes[1];
    let k = data.sensitive.len();
    let batch_cap = config.batch_size.min(n);
    let mut params = init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let encodings: Vec<Vec<f64>> =
        (0..k).map(|s| data.sensitive.encode(s)).collect::<Result<_>>()?;
    let mut trace = ForwardTrace::empty(spec);
    let mut sample_grad = GradientSet::zeros(spec);
    let mut grad = GradientSet::zeros(spec);
    let mut group = GroupDeltas::new(h1, k);
    let mut deltas = vec![0.0; batch_cap * h1];
    let mut delta_buf = vec![0.0; h1];
    let mut freqs = vec![0u32; batch_cap * k];
    let mut true_values = vec![0usize; batch_cap];

    let mut stats = Vec::with_capacity(config.epochs + 1);
    let initial_loss = {
        let mut total = 0.0;
        for sample in &data.samples {
            forward_into(spec, &params, &sample.x, &encodings[sample.s], &mut trace)?;
            total += loss(spec, &trace, sample.y)?;
        }
        total / n as f64
    };
    stats.push(build_stats(spec, &params, probe, 0, initial_loss, None, 0, 0.0)?);

    let mut order: Vec<usize> = (0..n).collect();
    let mut cumulative = 0.0;
    let mut total_rollbacks = 0;
    let mut steps = 0;
    let mut gamma: Option<GammaSolution> = None;
    let mut rr: Option<RRConfig> = None;
    let mut gamma_ticks = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_rollbacks = 0;
        let timer = Instant::now();

        for (step_in_epoch, chunk) in order.chunks(config.batch_size).enumerate() {
            let m = chunk.len();
            grad.fill_zero();
            group.reset();
            for (bi, &idx) in chunk.iter().enumerate() {
                let sample = &data.samples[idx];
                let enc = &encodings[sample.s];
                forward_into(spec, &params, &sample.x, enc, &mut trace)?;
                epoch_loss += loss(spec, &trace, sample.y)?;
                backward_into(spec, &params, &trace, sample.y, &mut sample_grad)?;
                grad.add_scaled(&sample_grad, 1.0);
                if fair {
                    delta_row(spec, &sample_grad, sample.s, enc, &mut delta_buf);
                    for (j, &d) in delta_buf.iter().enumerate() {
                        deltas[bi * h1 + j] = d;
                        group.add(sample.s, j, d);
                    }
                    true_values[bi] = sample.s;
                }
            }

            if fair {
                let resolve = gamma.is_none()
                    || match config.gamma_schedule {
                        GammaSchedule::PerStep => true,
                        GammaSchedule::PerEpoch => step_in_epoch == 0,
                    };
                if resolve {
                    let table = group.table(spec.encoding_mode())?;
                    let solution = solve_gamma(&table, config.tol_fair)?;
                    if !solution.feasible
                        && config.mode == TrainMode::Expectation
                        && !config.projection_fallback
                    {
                        return Err(Error::GammaInfeasible { residual: solution.residual });
                    }
                    rr = Some(RRConfig::new(solution.gamma, data.sensitive.clone())?);
                    gamma_ticks.push(GammaTick {
                        epoch,
                        step: step_in_epoch,
                        gamma: solution.gamma,
                        residual: solution.residual,
                        feasible: solution.feasible,
                    });
                    gamma = Some(solution);
                }
                let rr = rr.as_ref().unwrap();
                if config.mode == TrainMode::Stochastic {
                    draw_freqs(rr, &true_values[..m], config.delta, &mut rng, &mut freqs)?;
                }
                write_rr_columns(
                    spec,
                    &mut grad,
                    config.mode,
                    rr,
                    &group,
                    &deltas[..m * h1],
                    &freqs[..m * k],
                    config.delta,
                )?;
            }

            grad.scale(1.0 / m as f64);
            if fair {
                preserve_step(spec, &mut grad, config.tol_fair, config.projection_fallback)?;
                let snapshot = params.clone();
                params.apply_update(&grad, config.eta)?;
                let cert = structural_certificate(spec, &params)?;
                if cert.spread > config.tol_fair {
                    params = snapshot;
                    epoch_rollbacks += 1;
                }
            } else {
                params.apply_update(&grad, config.eta)?;
            }
            steps += 1;
        }

        cumulative += timer.elapsed().as_secs_f64();
        total_rollbacks += epoch_rollbacks;
        stats.push(build_stats(
            spec,
            &params,
            probe,
            epoch,
            epoch_loss / n as f64,
            gamma.as_ref(),
            epoch_rollbacks,
            cumulative,
        )?);
    }

    Ok(TrainOutcome { params, stats, gamma_ticks, total_rollbacks, steps })
}

#[allow(clippy::too_many_arguments)]
fn build_stats(
    spec: &NetworkSpec,
    params: &Parameters,
    probe: Option<&Dataset>,
    epoch: usize,
    loss: f64,
    gamma: Option<&GammaSolution>,
    rollbacks: usize,
    cumulative_seconds: f64,
) -> Result<EpochStats> {
    let cert = structural_certificate(spec, params)?;
    let (fairness_pct, accuracy_pct) = match probe {
        Some(p) => (
            Some(eval::empirical_fairness(spec, params, p)?.fairness_pct),
            Some(eval::accuracy(spec, params, p)?),
        ),
        None => (None, None),
    };
    Ok(EpochStats {
        epoch,
        loss,
        gamma: gamma.map(|g| g.gamma),
        gamma_residual: gamma.map(|g| g.residual),
        gamma_feasible: gamma.map(|g| g.feasible),
        certificate_spread: cert.spread,
        rollbacks,
        cumulative_seconds,
        fairness_pct,
        accuracy_pct,
    })
}

/// Concentration check for the stochastic update noise at fixed
/// parameters.
///
/// The monitored quantities are the first-layer pre-activations at a probe
/// input (the first sample); they are linear in the parameters the
/// randomness touches, so the variance of a `delta`-draw update is exactly
/// the single-draw variance over `delta`. `variance` is the worst
/// single-draw variance among the monitored neurons, estimated from
/// `draws` seeded single-draw updates, and the reported bound is
/// `variance / (delta * tau^2)`. The exceedance frequency counts
/// `delta`-draw updates (an independent stream) whose deviation from the
/// expectation update passes `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevReport {
    pub variance: f64,
    pub bound: f64,
    pub exceed_frequency: f64,
    pub delta: usize,
    pub tau: f64,
    pub draws: usize,
}

pub fn chebyshev_report(
    spec: &NetworkSpec,
    params: &Parameters,
    data: &Dataset,
    eta: f64,
    gamma: f64,
    delta: usize,
    tau: f64,
    draws: usize,
    seed: u64,
) -> Result<ChebyshevReport> {
    check_dataset(spec, data)?;
    if data.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if delta == 0 || draws < 2 {
        return Err(Error::Config("need delta >= 1 and draws >= 2".into()));
    }
    if !(tau.is_finite() && tau > 0.0) || !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Config("tau and eta must be positive".into()));
    }
    let cert = structural_certificate(spec, params)?;
    if !cert.pass {
        return Err(Error::Config("parameters must pass the tie certificate".into()));
    }

    let h1 = spec.layer_sizes[1];
    let k = data.sensitive.len();
    let m = data.len().min(DEFAULT_BATCH);
    let rr = RRConfig::new(gamma, data.sensitive.clone())?;

    // One backward per sample; only the first-layer deltas matter because
    // the non-sensitive part of the update is identical across draws.
    let mut trace = ForwardTrace::empty(spec);
    let mut sample_grad = GradientSet::zeros(spec);
    let mut deltas = vec![0.0; m * h1];
    let mut row = vec![0.0; h1];
    let mut group = GroupDeltas::new(h1, k);
    let mut true_values = vec![0usize; m];
    for (bi, sample) in data.samples.iter().take(m).enumerate() {
        let enc = data.sensitive.encode(sample.s)?;
        forward_into(spec, params, &sample.x, &enc, &mut trace)?;
        backward_into(spec, params, &trace, sample.y, &mut sample_grad)?;
        delta_row(spec, &sample_grad, sample.s, &enc, &mut row);
        for (j, &d) in row.iter().enumerate() {
            deltas[bi * h1 + j] = d;
            group.add(sample.s, j, d);
        }
        true_values[bi] = sample.s;
    }

    // Probe direction: the sensitive encoding of the first sample. The
    // monitored pre-activation shift of one update is
    // -eta/m * sum_c col[j][c] * enc[c].
    let probe_enc = data.sensitive.encode(data.samples[0].s)?;
    let col_shift = |cols: &[f64], j: usize| -> f64 {
        let mut acc = 0.0;
        match spec.encoding_mode() {
            EncodingMode::OneHot => {
                for c in 0..k {
                    acc += cols[j * k + c] * probe_enc[c];
                }
            }
            EncodingMode::SignedBinary => acc = cols[j] * probe_enc[0],
        }
        -eta / m as f64 * acc
    };
    let col_width = match spec.encoding_mode() {
        EncodingMode::OneHot => k,
        EncodingMode::SignedBinary => 1,
    };

    let freq_cols = |freqs: &[u32], per_draw: usize, cols: &mut [f64]| {
        cols.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            for j in 0..h1 {
                let d = deltas[i * h1 + j];
                match spec.encoding_mode() {
                    EncodingMode::OneHot => {
                        for c in 0..k {
                            cols[j * k + c] += d * freqs[i * k + c] as f64;
                        }
                    }
                    EncodingMode::SignedBinary => {
                        let net = freqs[i * k] as f64 - freqs[i * k + 1] as f64;
                        cols[j] += d * net;
                    }
                }
            }
        }
        cols.iter_mut().for_each(|v| *v /= per_draw as f64);
    };

    // Expectation columns, for the exceedance reference point.
    let mut exp_cols = vec![0.0; h1 * col_width];
    match spec.encoding_mode() {
        EncodingMode::OneHot => {
            for j in 0..h1 {
                for c in 0..k {
                    let mut acc = 0.0;
                    for s in 0..k {
                        acc += group.get(s, j) * rr.response_prob(s, c)?;
                    }
                    exp_cols[j * k + c] = acc;
                }
            }
        }
        EncodingMode::SignedBinary => {
            let factor = 2.0 * rr.keep_probability() - 1.0;
            for j in 0..h1 {
                exp_cols[j] = factor * (group.get(0, j) - group.get(1, j));
            }
        }
    }
    let exp_shift: Vec<f64> = (0..h1).map(|j| col_shift(&exp_cols, j)).collect();

    let mut freqs = vec![0u32; m * k];
    let mut cols = vec![0.0; h1 * col_width];

    // Single-draw variance, delta-independent by construction.
    let mut var_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shifts = vec![0.0; draws * h1];
    for d in 0..draws {
        draw_freqs(&rr, &true_values, 1, &mut var_rng, &mut freqs)?;
        freq_cols(&freqs, 1, &mut cols);
        for j in 0..h1 {
            shifts[d * h1 + j] = col_shift(&cols, j);
        }
    }
    let mut variance = 0.0_f64;
    for j in 0..h1 {
        let mean = (0..draws).map(|d| shifts[d * h1 + j]).sum::<f64>() / draws as f64;
        let ss = (0..draws).map(|d| (shifts[d * h1 + j] - mean).powi(2)).sum::<f64>();
        variance = variance.max(ss / (draws - 1) as f64);
    }
    let bound = variance / (delta as f64 * tau * tau);

    // Exceedance of delta-draw updates around the expectation update.
    let mut exc_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut worst_exceed = 0usize;
    let mut exceed_counts = vec![0usize; h1];
    for _ in 0..draws {
        draw_freqs(&rr, &true_values, delta, &mut exc_rng, &mut freqs)?;
        freq_cols(&freqs, delta, &mut cols);
        for j in 0..h1 {
            if (col_shift(&cols, j) - exp_shift[j]).abs() > tau {
                exceed_counts[j] += 1;
            }
        }
    }
    for &c in &exceed_counts {
        worst_exceed = worst_exceed.max(c);
    }

    Ok(ChebyshevReport {
        variance,
        bound,
        exceed_frequency: worst_exceed as f64 / draws as f64,
        delta,
        tau,
        draws,
    })
}
