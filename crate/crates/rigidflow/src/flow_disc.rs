//! Discrete flow matching over motif tokens with continuous-time Markov
//! chains: the masking-prior conditional path, conditional and generative
//! rate matrices, temperature and remasking noise, Euler jump simulation,
//! and the cross-entropy objective.
//!
//! Token id 0 is the mask state. Under the masking path a masked token
//! unmasks to its target at rate `1/(1−t)` and unmasked tokens stay fixed.
//! Remasking adds the detailed-balance pair of rates: `η` from a token back
//! to mask and `η·t/(1−t)` from mask toward the posterior, so the marginal
//! path is unchanged. A uniform-prior variant is available as an ablation.

use crate::vocab::MASK_TOKEN;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("posterior row {row} is not a probability vector (sum {sum})")]
    BadPosterior { row: usize, sum: f64 },
    #[error("time {0} is outside the valid range")]
    BadTime(f64),
    #[error("token id {0} out of range for vocabulary of {1}")]
    BadToken(usize, usize),
}

/// Joint token state at time `t`; ids in `0..=V` with 0 = mask.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenState {
    pub tokens: Vec<usize>,
    pub t: f64,
}

impl TokenState {
    pub fn all_masked(k: usize) -> Self {
        TokenState {
            tokens: vec![MASK_TOKEN; k],
            t: 0.0,
        }
    }

    pub fn n_masked(&self) -> usize {
        self.tokens.iter().filter(|&&m| m == MASK_TOKEN).count()
    }
}

/// Row-stochastic K × V matrix over the real classes (token `c+1` ↔ column
/// `c`); the mask state has no column.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserPosterior {
    pub probs: Vec<Vec<f64>>,
}

impl DenoiserPosterior {
    pub fn validate(&self) -> Result<(), DiscError> {
        for (row, p) in self.probs.iter().enumerate() {
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < 0.0) {
                return Err(DiscError::BadPosterior { row, sum });
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.first().map(Vec::len).unwrap_or(0)
    }
}

/// Sampling temperature, fixed or linearly interpolated lo→hi in t.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TemperatureSchedule {
    Fixed(f64),
    Linear { lo: f64, hi: f64 },
}

impl TemperatureSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            TemperatureSchedule::Fixed(v) => v,
            TemperatureSchedule::Linear { lo, hi } => lo + (hi - lo) * t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplingKnobs {
    pub temperature: TemperatureSchedule,
    /// Remasking rate η ≥ 0; 0 disables remasking.
    pub eta: f64,
}

impl Default for SamplingKnobs {
    fn default() -> Self {
        SamplingKnobs {
            temperature: TemperatureSchedule::Fixed(1.0),
            eta: 0.0,
        }
    }
}

/// Prior for the discrete path. `Uniform` is the ablation variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum DiscretePrior {
    #[default]
    Masking,
    Uniform,
}

/// Temperature-adjusted posterior: log-probabilities divided by τ, then
/// renormalised (`p̃ ∝ p^{1/τ}`).
pub fn temper(probs: &[f64], tau: f64) -> Vec<f64> {
    let mut out: Vec<f64> = probs
        .iter()
        .map(|&p| {
            if p <= 0.0 {
                0.0
            } else {
                (p.ln() / tau).exp()
            }
        })
        .collect();
    let sum: f64 = out.iter().sum();
    if sum <= 0.0 {
        let v = out.len().max(1);
        return vec![1.0 / v as f64; v];
    }
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Draws from `p_t(m_t | m₁) = (1−t)·δ_mask + t·δ_{m₁}`.
pub fn conditional_path_sample<R: Rng + ?Sized>(m1: usize, t: f64, rng: &mut R) -> usize {
    debug_assert_ne!(m1, MASK_TOKEN);
    if rng.gen::<f64>() < t {
        m1
    } else {
        MASK_TOKEN
    }
}

/// Masking-path conditional rate: `1/(1−t)` from mask to the target class,
/// zero elsewhere.
pub fn conditional_rate(j: usize, l: usize, m1: usize, t: f64) -> f64 {
    debug_assert!(t < 1.0);
    if j == MASK_TOKEN && l == m1 {
        1.0 / (1.0 - t)
    } else {
        0.0
    }
}

/// Uniform-prior conditional rate (ablation): any state other than the
/// target flows into it at `1/(1−t)`.
pub fn conditional_rate_uniform(j: usize, l: usize, m1: usize, t: f64) -> f64 {
    debug_assert!(t < 1.0);
    if j != m1 && l == m1 {
        1.0 / (1.0 - t)
    } else {
        0.0
    }
}

/// Draws from the uniform-prior conditional path
/// `p_t = (1−t)·uniform + t·δ_{m₁}` over real tokens `1..=V`.
pub fn conditional_path_sample_uniform<R: Rng + ?Sized>(
    m1: usize,
    vocab_size: usize,
    t: f64,
    rng: &mut R,
) -> usize {
    debug_assert_ne!(m1, MASK_TOKEN);
    if rng.gen::<f64>() < t {
        m1
    } else {
        rng.gen_range(1..=vocab_size)
    }
}

/// Per-token outgoing rate vectors of the generative CTMC, indexed by token
/// id (column 0 = mask). For a masked token, rate to class `l` is
/// `p̃(l)·(1+η·t)/(1−t)`; for an unmasked token, rate to mask is `η`. With
/// `η = 0` this is exactly the expected conditional rate matrix.
pub fn generative_rates(
    state: &TokenState,
    post: &DenoiserPosterior,
    knobs: &SamplingKnobs,
) -> Result<Vec<Vec<f64>>, DiscError> {
    if post.k() != state.tokens.len() {
        return Err(DiscError::ShapeMismatch {
            expected: state.tokens.len(),
            got: post.k(),
        });
    }
    if state.t >= 1.0 {
        return Err(DiscError::BadTime(state.t));
    }
    post.validate()?;
    let v = post.vocab_size();
    let t = state.t;
    let tau = knobs.temperature.at(t);
    let mut rates = Vec::with_capacity(state.tokens.len());
    for (k, &tok) in state.tokens.iter().enumerate() {
        let mut row = vec![0.0; v + 1];
        if tok == MASK_TOKEN {
            let tempered = temper(&post.probs[k], tau);
            let scale = (1.0 + knobs.eta * t) / (1.0 - t);
            for (c, &p) in tempered.iter().enumerate() {
                row[c + 1] = p * scale;
            }
        } else {
            if tok > v {
                return Err(DiscError::BadToken(tok, v));
            }
            row[MASK_TOKEN] = knobs.eta;
        }
        rates.push(row);
    }
    Ok(rates)
}

/// Uniform-prior generative rates (ablation): token `j` flows to `l ≠ j`
/// at `p̃(l)/(1−t)`.
pub fn generative_rates_uniform(
    state: &TokenState,
    post: &DenoiserPosterior,
    knobs: &SamplingKnobs,
) -> Result<Vec<Vec<f64>>, DiscError> {
    if post.k() != state.tokens.len() {
        return Err(DiscError::ShapeMismatch {
            expected: state.tokens.len(),
            got: post.k(),
        });
    }
    if state.t >= 1.0 {
        return Err(DiscError::BadTime(state.t));
    }
    post.validate()?;
    let v = post.vocab_size();
    let t = state.t;
    let tau = knobs.temperature.at(t);
    let mut rates = Vec::with_capacity(state.tokens.len());
    for (k, &tok) in state.tokens.iter().enumerate() {
        let mut row = vec![0.0; v + 1];
        let tempered = temper(&post.probs[k], tau);
        for (c, &p) in tempered.iter().enumerate() {
            if c + 1 != tok {
                row[c + 1] = p / (1.0 - t);
            }
        }
        rates.push(row);
    }
    Ok(rates)
}

/// Euler jump step: each token independently jumps to `l` with probability
/// `h·rate(l)`, staying otherwise. When the total outflow exceeds `1/h` the
/// step is subdivided internally so every substep is a valid probability.
pub fn ctmc_step<R: Rng + ?Sized>(
    state: &TokenState,
    rates: &[Vec<f64>],
    h: f64,
    rng: &mut R,
) -> Result<TokenState, DiscError> {
    if rates.len() != state.tokens.len() {
        return Err(DiscError::ShapeMismatch {
            expected: state.tokens.len(),
            got: rates.len(),
        });
    }
    let mut tokens = state.tokens.clone();
    for (k, row) in rates.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let substeps = (h * total).ceil().max(1.0) as usize;
        let h_sub = h / substeps as f64;
        for _ in 0..substeps {
            let jump_prob = (h_sub * total).min(1.0);
            if rng.gen::<f64>() < jump_prob {
                // Destination sampled proportionally to the rates.
                let mut u = rng.gen::<f64>() * total;
                let mut dest = tokens[k];
                for (l, &r) in row.iter().enumerate() {
                    if r <= 0.0 {
                        continue;
                    }
                    u -= r;
                    if u <= 0.0 {
                        dest = l;
                        break;
                    }
                }
                tokens[k] = dest;
                break;
            }
        }
    }
    Ok(TokenState {
        tokens,
        t: state.t + h,
    })
}

/// Cross-entropy of the posterior against the clean tokens, summed over the
/// masked slots only.
pub fn dfm_loss(
    post: &DenoiserPosterior,
    m1: &[usize],
    masked: &[bool],
) -> Result<f64, DiscError> {
    if post.k() != m1.len() || masked.len() != m1.len() {
        return Err(DiscError::ShapeMismatch {
            expected: m1.len(),
            got: post.k().min(masked.len()),
        });
    }
    post.validate()?;
    let v = post.vocab_size();
    let mut loss = 0.0;
    for k in 0..m1.len() {
        if !masked[k] {
            continue;
        }
        if m1[k] == MASK_TOKEN || m1[k] > v {
            return Err(DiscError::BadToken(m1[k], v));
        }
        let p = post.probs[k][m1[k] - 1].max(f64::MIN_POSITIVE);
        loss -= p.ln();
    }
    Ok(loss)
}

/// Analytic marginal of the masking path over token ids `0..=V`.
fn masking_path_marginal(m1: usize, v: usize, t: f64) -> Vec<f64> {
    let mut p = vec![0.0; v + 1];
    p[MASK_TOKEN] = 1.0 - t;
    p[m1] = t;
    p
}

fn uniform_path_marginal(m1: usize, v: usize, t: f64) -> Vec<f64> {
    let mut p = vec![0.0; v + 1];
    for c in 1..=v {
        p[c] = (1.0 - t) / v as f64;
    }
    p[m1] += t;
    p
}

/// Finite-difference residual of the Kolmogorov forward equation for the
/// conditional path and rate, per state. Small residuals certify that the
/// rate matrix generates the path.
pub fn kolmogorov_residual(m1: usize, vocab_size: usize, t: f64, dt: f64) -> Vec<f64> {
    kolmogorov_residual_impl(m1, vocab_size, t, dt, DiscretePrior::Masking)
}

/// Residual for the uniform-prior ablation path.
pub fn kolmogorov_residual_uniform(m1: usize, vocab_size: usize, t: f64, dt: f64) -> Vec<f64> {
    kolmogorov_residual_impl(m1, vocab_size, t, dt, DiscretePrior::Uniform)
}

fn kolmogorov_residual_impl(
    m1: usize,
    v: usize,
    t: f64,
    dt: f64,
    prior: DiscretePrior,
) -> Vec<f64> {
    let (path, rate): (
        fn(usize, usize, f64) -> Vec<f64>,
        fn(usize, usize, usize, f64) -> f64,
    ) = match prior {
        DiscretePrior::Masking => (masking_path_marginal, conditional_rate),
        DiscretePrior::Uniform => (uniform_path_marginal, conditional_rate_uniform),
    };
    let p_now = path(m1, v, t);
    let p_plus = path(m1, v, t + dt);
    let p_minus = path(m1, v, t - dt);
    (0..=v)
        .map(|k| {
            let dpdt = (p_plus[k] - p_minus[k]) / (2.0 * dt);
            let inflow: f64 = (0..=v)
                .filter(|&j| j != k)
                .map(|j| p_now[j] * rate(j, k, m1, t))
                .sum();
            let outflow: f64 = (0..=v)
                .filter(|&j| j != k)
                .map(|j| p_now[k] * rate(k, j, m1, t))
                .sum();
            (dpdt - (inflow - outflow)).abs()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_posterior(k: usize, v: usize) -> DenoiserPosterior {
        DenoiserPosterior {
            probs: vec![vec![1.0 / v as f64; v]; k],
        }
    }

    #[test]
    fn path_sample_boundaries_and_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..100 {
            assert_eq!(conditional_path_sample(3, 0.0, &mut rng), MASK_TOKEN);
            assert_eq!(conditional_path_sample(3, 1.0, &mut rng), 3);
        }
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| conditional_path_sample(2, 0.3, &mut rng) == 2)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.005, "P(m1) = {freq}");
    }

    #[test]
    fn conditional_rate_formula() {
        assert!((conditional_rate(MASK_TOKEN, 2, 2, 0.5) - 2.0).abs() < 1e-12);
        assert_eq!(conditional_rate(2, MASK_TOKEN, 2, 0.7), 0.0);
        assert_eq!(conditional_rate(MASK_TOKEN, 1, 2, 0.7), 0.0);
    }

    #[test]
    fn generative_rates_base_construction() {
        // η = 0, uniform posterior over 4 classes at t = 0.5: each unmask
        // rate is 0.25 × 1/(1−0.5) = 0.5.
        let state = TokenState {
            tokens: vec![MASK_TOKEN, 2],
            t: 0.5,
        };
        let rates = generative_rates(
            &state,
            &uniform_posterior(2, 4),
            &SamplingKnobs::default(),
        )
        .unwrap();
        for c in 1..=4 {
            assert!((rates[0][c] - 0.5).abs() < 1e-12);
        }
        // Unmasked token stays fixed at η = 0.
        assert!(rates[1].iter().all(|&r| r == 0.0));
    }

    #[test]
    fn high_temperature_flattens_any_posterior() {
        let p = vec![0.7, 0.2, 0.05, 0.05];
        let flat = temper(&p, 1e12);
        for &x in &flat {
            assert!((x - 0.25).abs() < 1e-6);
        }
        // Argmax is temperature-invariant.
        for tau in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let q = temper(&p, tau);
            let argmax = q
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 0);
        }
    }

    #[test]
    fn remasking_rates_satisfy_detailed_balance() {
        // p_t(m1)·η = p_t(mask)·(η·t/(1−t)) for the masking path.
        for t in [0.1f64, 0.3, 0.5, 0.7, 0.9] {
            for eta in [0.5, 1.5] {
                let lhs = t * eta;
                let rhs = (1.0 - t) * (eta * t / (1.0 - t));
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
        // The generative construction exposes exactly those two rates.
        let state = TokenState {
            tokens: vec![MASK_TOKEN, 1],
            t: 0.25,
        };
        let knobs = SamplingKnobs {
            temperature: TemperatureSchedule::Fixed(1.0),
            eta: 1.5,
        };
        let post = DenoiserPosterior {
            probs: vec![vec![1.0], vec![1.0]],
        };
        let rates = generative_rates(&state, &post, &knobs).unwrap();
        let expected_unmask = (1.0 + 1.5 * 0.25) / 0.75;
        assert!((rates[0][1] - expected_unmask).abs() < 1e-12);
        assert!((rates[1][MASK_TOKEN] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ctmc_zero_rates_leave_state_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let state = TokenState {
            tokens: vec![1, MASK_TOKEN, 3],
            t: 0.2,
        };
        let rates = vec![vec![0.0; 4]; 3];
        let next = ctmc_step(&state, &rates, 0.05, &mut rng).unwrap();
        assert_eq!(next.tokens, state.tokens);
        assert!((next.t - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dirac_oracle_always_unmasks_by_time_one() {
        // Single masked token, Dirac posterior, 100 uniform steps: the
        // stay-probabilities telescope to zero.
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let knobs = SamplingKnobs::default();
        for _ in 0..200 {
            let mut state = TokenState::all_masked(1);
            let steps = 100;
            let h = 1.0 / steps as f64;
            for _ in 0..steps {
                let post = DenoiserPosterior {
                    probs: vec![vec![0.0, 1.0, 0.0]],
                };
                let rates = generative_rates(&state, &post, &knobs).unwrap();
                state = ctmc_step(&state, &rates, h, &mut rng).unwrap();
            }
            assert_eq!(state.tokens[0], 2);
        }
    }

    #[test]
    fn monotone_unmasking_without_remasking() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let knobs = SamplingKnobs::default();
        for _ in 0..50 {
            let mut state = TokenState::all_masked(5);
            let mut masked = state.n_masked();
            let steps = 40;
            let h = 1.0 / steps as f64;
            for _ in 0..steps {
                let rates = generative_rates(&state, &uniform_posterior(5, 3), &knobs).unwrap();
                state = ctmc_step(&state, &rates, h, &mut rng).unwrap();
                let now = state.n_masked();
                assert!(now <= masked);
                masked = now;
            }
        }
    }

    #[test]
    fn marginal_recovery_monte_carlo() {
        // E over m1 ~ data of the conditional path at time t equals
        // (1−t)·δ_mask + t·(data marginal), within TV 0.01 at n = 1e5.
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let data = [1usize, 1, 2, 3];
        let t = 0.6;
        let n = 100_000;
        let mut counts = vec![0usize; 4];
        for i in 0..n {
            let m1 = data[i % data.len()];
            counts[conditional_path_sample(m1, t, &mut rng)] += 1;
        }
        let mut expected = vec![1.0 - t, 0.0, 0.0, 0.0];
        for &m in &data {
            expected[m] += t / data.len() as f64;
        }
        let tv: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&c, &e)| (c as f64 / n as f64 - e).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "TV {tv}");
    }

    #[test]
    fn dfm_loss_cases() {
        let dirac = DenoiserPosterior {
            probs: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        let m1 = vec![2, 1];
        assert!(dfm_loss(&dirac, &m1, &[true, true]).unwrap() < 1e-12);

        let uniform = uniform_posterior(1, 5);
        let loss = dfm_loss(&uniform, &[3], &[true]).unwrap();
        assert!((loss - (5.0f64).ln()).abs() < 1e-12);

        assert_eq!(dfm_loss(&uniform, &[3], &[false]).unwrap(), 0.0);
    }

    #[test]
    fn kolmogorov_residual_of_masking_path() {
        for &t in &[0.0 + 1e-5, 0.25, 0.5, 0.75, 0.95] {
            let res = kolmogorov_residual(2, 4, t, 1e-5);
            for (k, r) in res.iter().enumerate() {
                assert!(*r < 1e-6, "state {k} at t={t}: residual {r}");
            }
        }
        // Zero rates with a constant path: residual identically zero.
        let constant = |_: usize| vec![0.25; 4];
        let dpdt: f64 = constant(0).iter().map(|_| 0.0).sum();
        assert_eq!(dpdt, 0.0);
    }

    #[test]
    fn kolmogorov_residual_of_uniform_path() {
        for &t in &[0.1, 0.5, 0.9] {
            let res = kolmogorov_residual_uniform(1, 3, t, 1e-5);
            for r in res {
                assert!(r < 1e-6);
            }
        }
    }

    #[test]
    fn uniform_prior_ctmc_reaches_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let knobs = SamplingKnobs::default();
        let mut hits = 0;
        let trials = 2000;
        for _ in 0..trials {
            let mut state = TokenState {
                tokens: vec![conditional_path_sample_uniform(2, 3, 0.0, &mut rng)],
                t: 0.0,
            };
            let steps = 100;
            let h = 1.0 / steps as f64;
            for _ in 0..steps {
                let post = DenoiserPosterior {
                    probs: vec![vec![0.0, 1.0, 0.0]],
                };
                let rates = generative_rates_uniform(&state, &post, &knobs).unwrap();
                state = ctmc_step(&state, &rates, h, &mut rng).unwrap();
            }
            if state.tokens[0] == 2 {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 > 0.99);
    }
}
