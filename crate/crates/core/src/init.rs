//! Provably fair parameter initialization and the init-verify-retry loop.
//!
//! Two schemes: all-zero weights with constant biases (a constant, hence
//! fair, function) and symmetric Bernoulli weights of magnitude `e^phi`
//! with the sensitive columns tied so the structural certificate holds at
//! birth. Every returned initialization is independently verified.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{EncodingMode, NetworkSpec, Parameters};
use crate::verify::{verify, InputDomain, Verdict, VerifyBudget};

/// How to draw the starting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitScheme {
    /// All weights zero, every bias the given constant.
    ZeroConstant { c: f64 },
    /// Weights +-e^phi by a Bernoulli trial, biases zero.
    Bernoulli { p_init: f64, phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub scheme: InitScheme,
    pub seed: u64,
}

pub const DEFAULT_P_INIT: f64 = 0.5;
pub const DEFAULT_PHI: f64 = -10.0;
pub const DEFAULT_MAX_ATTEMPTS: usize = 10;

impl InitConfig {
    pub fn bernoulli(seed: u64) -> Self {
        Self { scheme: InitScheme::Bernoulli { p_init: DEFAULT_P_INIT, phi: DEFAULT_PHI }, seed }
    }

    pub fn zero(c: f64) -> Self {
        Self { scheme: InitScheme::ZeroConstant { c }, seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        if let InitScheme::Bernoulli { p_init, phi } = self.scheme {
            if !(0.0..1.0).contains(&p_init) || p_init == 0.0 {
                return Err(Error::Config(format!("p_init must be in (0,1), got {p_init}")));
            }
            if !phi.is_finite() || phi > 0.0 {
                return Err(Error::Config(format!("phi must be <= 0, got {phi}")));
            }
        }
        Ok(())
    }
}

/// Constant-function initialization: zero weights, biases `c`.
pub fn zero_init(spec: &NetworkSpec, c: f64) -> Parameters {
    let mut params = Parameters::zeros(spec);
    for layer in &mut params.layers {
        layer.biases.iter_mut().for_each(|b| *b = c);
    }
    params
}

/// Symmetric Bernoulli initialization with tied sensitive columns.
///
/// Every weight is `+e^phi` with probability `p_init` and `-e^phi`
/// otherwise. First-layer sensitive columns are made s-invariant: one draw
/// shared across each one-hot group, or zero in signed-binary mode (the
/// two endpoints of a +-pair summed).
pub fn bernoulli_init(spec: &NetworkSpec, config: &InitConfig) -> Result<Parameters> {
    let (p_init, phi) = match config.scheme {
        InitScheme::Bernoulli { p_init, phi } => (p_init, phi),
        InitScheme::ZeroConstant { c } => return Ok(zero_init(spec, c)),
    };
    config.validate()?;
    let magnitude = phi.exp();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        if rng.gen::<f64>() < p_init {
            magnitude
        } else {
            -magnitude
        }
    };

    let mut params = Parameters::zeros(spec);
    for (l, layer) in params.layers.iter_mut().enumerate() {
        for r in 0..layer.rows {
            if l == 0 {
                let slice = spec.sensitive_slice.clone();
                let tied = match spec.encoding_mode() {
                    EncodingMode::OneHot => draw(&mut rng),
                    EncodingMode::SignedBinary => 0.0,
                };
                for c in 0..layer.cols {
                    *layer.weight_mut(r, c) = if slice.contains(&c) { tied } else { draw(&mut rng) };
                }
            } else {
                for c in 0..layer.cols {
                    *layer.weight_mut(r, c) = draw(&mut rng);
                }
            }
        }
    }
    Ok(params)
}

/// One accepted initialization together with its verification evidence.
#[derive(Debug, Clone)]
pub struct VerifiedInit {
    pub params: Parameters,
    pub verdict: Verdict,
    pub attempts: usize,
}

/// Draws initializations until one verifies, reseeding deterministically
/// (`seed + attempt`) between draws.
pub fn init_until_verified(
    spec: &NetworkSpec,
    config: &InitConfig,
    domain: &InputDomain,
    budget: VerifyBudget,
    max_attempts: usize,
) -> Result<VerifiedInit> {
    if max_attempts == 0 {
        return Err(Error::Config("max_attempts must be >= 1".into()));
    }
    config.validate()?;
    let mut last_verdict = None;
    for attempt in 1..=max_attempts {
        let mut attempt_config = *config;
        attempt_config.seed = config.seed.wrapping_add(attempt as u64 - 1);
        let params = bernoulli_init(spec, &attempt_config)?;
        let verdict = verify(spec, &params, domain, budget)?;
        if verdict.is_verified() {
            return Ok(VerifiedInit { params, verdict, attempts: attempt });
        }
        last_verdict = Some(verdict);
    }
    Err(Error::InitExhausted {
        attempts: max_attempts,
        verdict: format!("{:?}", last_verdict.map(|v| v.tag)),
    })
}
