//! Closed-form constants from the regret analysis of LMDH.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The approximation factor of greedy selection.
pub const GAMMA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Horizon `n`.
    pub n: u64,
    pub k: usize,
    pub d: usize,
    pub m: usize,
    pub lambda: f64,
    /// Failure probability `δ ∈ (0, 1)`.
    pub delta: f64,
    /// Upper bound `S ≥ ‖η*‖₂`.
    pub eta_norm_bound: f64,
    pub gamma: f64,
}

impl TheoryParams {
    /// Parameters with `δ = 1/(nK)`, `S = 1` and `γ = 1/4`.
    pub fn standard(n: u64, k: usize, d: usize, m: usize, lambda: f64) -> Self {
        Self {
            n,
            k,
            d,
            m,
            lambda,
            delta: 1.0 / (n.max(1) as f64 * k as f64),
            eta_norm_bound: 1.0,
            gamma: GAMMA,
        }
    }

    pub fn with_horizon(self, n: u64) -> Self {
        Self { n, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.eta_norm_bound >= 0.0) {
            return Err(Error::Config("eta norm bound must be >= 0".into()));
        }
        if self.gamma != GAMMA {
            return Err(Error::Config(format!("gamma is fixed at {GAMMA}")));
        }
        if self.k == 0 || self.d + self.m == 0 {
            return Err(Error::Config("K and d + m must be positive".into()));
        }
        Ok(())
    }

    fn dim(&self) -> f64 {
        (self.d + self.m) as f64
    }

    /// `log(1 + nK / ((d+m) λ))`.
    fn log_det_term(&self) -> f64 {
        (self.n as f64 * self.k as f64 / (self.dim() * self.lambda)).ln_1p()
    }

    /// `√( n (d+m) log(1 + nK/((d+m)λ)) / (λ log(1 + 1/λ)) )`.
    fn width_root(&self) -> f64 {
        (self.n as f64 * self.dim() * self.log_det_term() / (self.lambda * (1.0 / self.lambda).ln_1p()))
            .sqrt()
    }
}

/// Smallest exploration scale covered by the confidence-set guarantee:
/// `√((d+m) log(1 + nK/((d+m)λ)) + 2 log(1/δ)) + √λ · S`.
pub fn theoretical_alpha(params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    let radicand = params.dim() * params.log_det_term() + 2.0 * (1.0 / params.delta).ln();
    Ok(radicand.sqrt() + params.lambda.sqrt() * params.eta_norm_bound)
}

/// Upper bound on the γ-scaled regret after `n` rounds:
/// `(2αK/γ) √( n(d+m) log(1 + nK/((d+m)λ)) / (λ log(1 + 1/λ)) ) + nKδ`.
pub fn regret_upper_bound(params: &TheoryParams, alpha: f64) -> Result<f64> {
    let threshold = theoretical_alpha(params)?;
    if alpha < threshold {
        return Err(Error::PreconditionViolation(format!(
            "alpha {alpha} is below the required {threshold}"
        )));
    }
    let k = params.k as f64;
    Ok(2.0 * alpha * k / params.gamma * params.width_root() + params.n as f64 * k * params.delta)
}

/// Ceiling on `Σ_t Σ_k √(ζᵀΦ_t⁻¹ζ)` over `n` rounds:
/// `K √( n(d+m) log(1 + nK/((d+m)λ)) / (λ log(1 + 1/λ)) )`.
pub fn width_budget(params: &TheoryParams) -> Result<f64> {
    if !(params.lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be > 0, got {}", params.lambda)));
    }
    Ok(params.k as f64 * params.width_root())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simulation_params() -> TheoryParams {
        TheoryParams::standard(1000, 5, 10, 1, 1.0)
    }

    #[test]
    fn alpha_at_simulation_settings() {
        let p = simulation_params();
        assert_eq!(p.delta, 1.0 / 5000.0);
        // sqrt(11 ln(1 + 5000/11) + 2 ln 5000) + 1, evaluated independently.
        let expected = (11.0 * (1.0f64 + 5000.0 / 11.0).ln() + 2.0 * 5000.0f64.ln()).sqrt() + 1.0;
        let a = theoretical_alpha(&p).unwrap();
        assert!((a - expected).abs() < 1e-12);
        assert!((a - 10.19).abs() < 0.005, "{a}");
    }

    #[test]
    fn alpha_degenerate_limit() {
        let p = TheoryParams {
            n: 0,
            delta: 1.0 - 1e-15,
            eta_norm_bound: 0.0,
            ..simulation_params()
        };
        assert!(theoretical_alpha(&p).unwrap() < 1e-6);
    }

    #[test]
    fn alpha_grows_with_horizon() {
        let p = TheoryParams { delta: 0.01, ..simulation_params() };
        let a1 = theoretical_alpha(&p).unwrap();
        let a2 = theoretical_alpha(&p.with_horizon(2000)).unwrap();
        assert!(a2 > a1);
    }

    #[test]
    fn bound_basics() {
        let p = simulation_params().with_horizon(0);
        let a = theoretical_alpha(&p).unwrap();
        assert_eq!(regret_upper_bound(&p, a).unwrap(), 0.0);
        let p = simulation_params();
        let a = theoretical_alpha(&p).unwrap();
        assert!(matches!(regret_upper_bound(&p, a * 0.5), Err(Error::PreconditionViolation(_))));
        let b = regret_upper_bound(&p, a).unwrap();
        assert!(b.is_finite() && b > 0.0);
    }

    #[test]
    fn bound_grows_like_sqrt_n() {
        let p = TheoryParams { delta: 1e-9, ..simulation_params() };
        let n = 1_000_000;
        let a = theoretical_alpha(&p.with_horizon(4 * n)).unwrap();
        let r = regret_upper_bound(&p.with_horizon(4 * n), a).unwrap()
            / regret_upper_bound(&p.with_horizon(n), a).unwrap();
        assert!(r > 2.0 && r < 2.5, "{r}");
    }

    #[test]
    fn budget_monotone() {
        let p = simulation_params();
        assert_eq!(width_budget(&p.with_horizon(0)).unwrap(), 0.0);
        let base = width_budget(&p).unwrap();
        assert!(width_budget(&p.with_horizon(2000)).unwrap() > base);
        assert!(width_budget(&TheoryParams { k: 6, ..p }).unwrap() > base);
    }
}
