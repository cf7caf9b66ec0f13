//! Swarm model parameters, derived load quantities, and the Poisson
//! utilities (pmf, exact tail, truncation-point selection) shared by the
//! analytical modules.

use crate::error::{Error, Result};
use crate::numeric::{inverse_normal_cdf, ln_factorial, CompensatedSum};

/// Default truncation tolerance when a caller does not specify one.
pub const DEFAULT_ETA: f64 = 1e-9;

/// Default block size in bytes (256 KiB).
pub const DEFAULT_BLOCK_BYTES: u64 = 262_144;

/// Residence behaviour of peers that have completed their download.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gamma {
    /// Peers leave immediately on completion.
    Infinite,
    /// Peers linger as seeds, departing at this rate (1/second).
    Rate(f64),
}

impl Gamma {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Gamma::Infinite)
    }
}

/// Classified seed-departure regime, used to pick the matching recursion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaKind {
    Infinite,
    /// Seed departure rate equals the (scalar) block rate.
    EqualMu,
    /// Any other finite rate.
    Finite(f64),
}

/// Block download rates: one shared rate or one rate per block index.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockRates {
    Uniform(f64),
    PerBlock(Vec<f64>),
}

/// Parameters of the swarm model: arrival rate, block rates, seed-departure
/// rate, and block count.
#[derive(Clone, Debug)]
pub struct ModelParams {
    /// Peer arrival rate (peers/second).
    pub lambda: f64,
    /// Block download rates (blocks/second).
    pub mu: BlockRates,
    /// Seed departure behaviour.
    pub gamma: Gamma,
    /// Number of blocks in the file.
    pub blocks: u32,
    /// Block size in bytes; only used for unit conversions.
    pub block_bytes: u64,
}

impl ModelParams {
    /// Parameters with a single shared block rate.
    pub fn new(lambda: f64, mu: f64, gamma: Gamma, blocks: u32) -> Self {
        Self {
            lambda,
            mu: BlockRates::Uniform(mu),
            gamma,
            blocks,
            block_bytes: DEFAULT_BLOCK_BYTES,
        }
    }

    /// Parameters with one rate per block index (rate j applies to the j-th
    /// block downloaded by a peer, 1-based).
    pub fn with_rates(lambda: f64, rates: Vec<f64>, gamma: Gamma, blocks: u32) -> Self {
        Self {
            lambda,
            mu: BlockRates::PerBlock(rates),
            gamma,
            blocks,
            block_bytes: DEFAULT_BLOCK_BYTES,
        }
    }

    /// The shared block rate, when rates are uniform.
    pub fn scalar_mu(&self) -> Option<f64> {
        match &self.mu {
            BlockRates::Uniform(m) => Some(*m),
            BlockRates::PerBlock(_) => None,
        }
    }

    /// Mean occupancy of download stage `h` (peers owning `h` blocks,
    /// 0 <= h <= B-1): lambda over the rate of the (h+1)-th block.
    pub fn stage_mean(&self, h: u32) -> f64 {
        debug_assert!(h < self.blocks);
        match &self.mu {
            BlockRates::Uniform(m) => self.lambda / m,
            BlockRates::PerBlock(v) => self.lambda / v[h as usize],
        }
    }

    /// Classify the seed-departure regime. `Rate(g)` with `g` equal to the
    /// scalar block rate (to 1e-12 relative) counts as `EqualMu`.
    pub fn gamma_kind(&self) -> GammaKind {
        match self.gamma {
            Gamma::Infinite => GammaKind::Infinite,
            Gamma::Rate(g) => match self.scalar_mu() {
                Some(m) if (g - m).abs() <= 1e-12 * m.abs() => GammaKind::EqualMu,
                _ => GammaKind::Finite(g),
            },
        }
    }

    /// Validate all invariants and return the derived load profile.
    pub fn validate(&self) -> Result<LoadProfile> {
        if self.blocks == 0 {
            return Err(Error::InvalidParameter(
                "block count must be at least 1".into(),
            ));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "arrival rate must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        let b = self.blocks as usize;
        match &self.mu {
            BlockRates::Uniform(m) => {
                if !m.is_finite() || *m <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "block rate must be finite and positive, got {m}"
                    )));
                }
            }
            BlockRates::PerBlock(v) => {
                if v.len() != b {
                    return Err(Error::InvalidParameter(format!(
                        "expected {b} block rates, got {}",
                        v.len()
                    )));
                }
                if let Some(bad) = v.iter().find(|m| !m.is_finite() || **m <= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "block rates must be finite and positive, got {bad}"
                    )));
                }
            }
        }
        if let Gamma::Rate(g) = self.gamma {
            if !g.is_finite() || g <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "seed departure rate must be positive (or infinite), got {g}"
                )));
            }
        }

        let (rho, sigma) = match &self.mu {
            BlockRates::Uniform(m) => {
                let rho = self.lambda / m;
                (rho, vec![1.0 / b as f64; b])
            }
            BlockRates::PerBlock(v) => {
                let inv_sum: f64 = v.iter().map(|m| 1.0 / m).sum();
                let sigma = v.iter().map(|m| (1.0 / m) / inv_sum).collect();
                (self.lambda * inv_sum / b as f64, sigma)
            }
        };
        let total_mean = match self.gamma_kind() {
            GammaKind::Infinite => rho * b as f64,
            GammaKind::EqualMu => rho * (b + 1) as f64,
            GammaKind::Finite(g) => rho * b as f64 + self.lambda / g,
        };
        Ok(LoadProfile {
            rho,
            sigma,
            total_mean,
        })
    }
}

/// Derived load quantities: per-stage load, stage probabilities, and the
/// mean total population.
#[derive(Clone, Debug)]
pub struct LoadProfile {
    /// Mean per-stage load (lambda/mu for uniform rates).
    pub rho: f64,
    /// Probability that a randomly selected user occupies stage h,
    /// h = 0..B-1; entries sum to one.
    pub sigma: Vec<f64>,
    /// Mean total population (B*rho with immediate departure,
    /// (B+1)*rho when the seed rate equals the block rate).
    pub total_mean: f64,
}

/// Poisson pmf e^-mean mean^n / n!, evaluated in log space so that large
/// means and counts neither overflow nor underflow prematurely.
pub fn poisson_pmf(mean: f64, n: u64) -> f64 {
    assert!(mean >= 0.0 && mean.is_finite(), "mean must be nonnegative");
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    poisson_ln_pmf(mean, n).exp()
}

fn poisson_ln_pmf(mean: f64, n: u64) -> f64 {
    n as f64 * mean.ln() - mean - ln_factorial(n)
}

/// Exact upper tail P(X > n) for X ~ Poisson(mean), by direct summation of
/// the tail terms until they are negligible.
pub fn poisson_upper_tail(mean: f64, n: u64) -> f64 {
    assert!(mean >= 0.0 && mean.is_finite(), "mean must be nonnegative");
    if mean == 0.0 {
        return 0.0;
    }
    let mut sum = CompensatedSum::new();
    let mut k = n + 1;
    let mut term = poisson_ln_pmf(mean, k).exp();
    loop {
        sum.add(term);
        k += 1;
        term *= mean / k as f64;
        // Terms decay geometrically once k exceeds the mean.
        if k as f64 > mean && (term < sum.value() * 1e-18 || term < 1e-320) {
            break;
        }
    }
    sum.value().min(1.0)
}

/// Smallest N such that the Poisson upper tail beyond N is at most `eta`.
///
/// For means above 1000 a normal-quantile seed brackets the search; the
/// returned bound always comes from exact tail evaluation. `eta >= 1`
/// returns 0.
pub fn choose_truncation(mean: f64, eta: f64) -> u32 {
    assert!(mean >= 0.0 && mean.is_finite(), "mean must be nonnegative");
    assert!(eta > 0.0, "tolerance must be positive");
    if eta >= 1.0 || mean == 0.0 {
        return 0;
    }

    // Bracket: lo fails (tail > eta), hi passes (tail <= eta).
    let (mut lo, mut hi): (i64, i64);
    if mean > 1000.0 {
        let z = inverse_normal_cdf(1.0 - eta.max(1e-300).min(0.5));
        let spread = (z.abs() + 4.0) * mean.sqrt();
        lo = (mean - spread).floor().max(-1.0) as i64;
        hi = (mean + spread).ceil() as i64;
        while poisson_upper_tail(mean, hi as u64) > eta {
            lo = hi;
            hi *= 2;
        }
        if lo >= 0 && poisson_upper_tail(mean, lo as u64) <= eta {
            // Seed overshot low; restart the bracket from below.
            lo = -1;
        }
    } else {
        lo = -1;
        hi = (mean.ceil() as i64 + 1).max(1);
        while poisson_upper_tail(mean, hi as u64) > eta {
            hi *= 2;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if mid < 0 || poisson_upper_tail(mean, mid as u64) > eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stirling_ln_factorial(n: u64) -> f64 {
        // Independent route: Stirling series with three correction terms.
        let x = n as f64;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }

    #[test]
    fn validate_uniform_rates() {
        let p = ModelParams::new(0.15, 0.15, Gamma::Infinite, 16);
        let lp = p.validate().unwrap();
        assert!((lp.rho - 1.0).abs() < 1e-15);
        assert_eq!(lp.sigma.len(), 16);
        for s in &lp.sigma {
            assert!((s - 1.0 / 16.0).abs() < 1e-15);
        }
        assert!((lp.total_mean - 16.0).abs() < 1e-12);
    }

    #[test]
    fn validate_per_block_rates() {
        let p = ModelParams::with_rates(1.0, vec![1.0, 1.0, 2.0], Gamma::Infinite, 3);
        let lp = p.validate().unwrap();
        let expected = [0.4, 0.4, 0.2];
        for (s, e) in lp.sigma.iter().zip(expected) {
            assert!((s - e).abs() < 1e-15, "sigma {s} vs {e}");
        }
        let sum: f64 = lp.sigma.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validate_load_from_rates_per_minute() {
        // 8 peers/min at 0.15 blocks/s.
        let p = ModelParams::new(8.0 / 60.0, 0.15, Gamma::Infinite, 16);
        let lp = p.validate().unwrap();
        assert!((lp.rho - 0.888_888_888_888_888_9).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        assert!(ModelParams::new(1.0, 0.0, Gamma::Infinite, 4)
            .validate()
            .is_err());
        assert!(ModelParams::new(-1.0, 1.0, Gamma::Infinite, 4)
            .validate()
            .is_err());
        assert!(ModelParams::new(1.0, 1.0, Gamma::Infinite, 0)
            .validate()
            .is_err());
        assert!(ModelParams::new(1.0, 1.0, Gamma::Rate(-2.0), 4)
            .validate()
            .is_err());
        assert!(
            ModelParams::with_rates(1.0, vec![1.0, -1.0], Gamma::Infinite, 2)
                .validate()
                .is_err()
        );
    }

    #[test]
    fn gamma_kind_classification() {
        let p = ModelParams::new(1.0, 0.15, Gamma::Rate(0.15), 4);
        assert_eq!(p.gamma_kind(), GammaKind::EqualMu);
        let p = ModelParams::new(1.0, 0.15, Gamma::Rate(0.4), 4);
        assert_eq!(p.gamma_kind(), GammaKind::Finite(0.4));
        let p = ModelParams::new(1.0, 0.15, Gamma::Infinite, 4);
        assert_eq!(p.gamma_kind(), GammaKind::Infinite);
    }

    #[test]
    fn poisson_pmf_trivial_values() {
        assert_eq!(poisson_pmf(0.0, 0), 1.0);
        assert_eq!(poisson_pmf(0.0, 3), 0.0);
        assert!((poisson_pmf(1.0, 1) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn poisson_pmf_large_arguments_match_stirling() {
        // Independent evaluation of the log-pmf via the Stirling series.
        let mean = 500.0;
        let n = 500u64;
        let direct = poisson_pmf(mean, n);
        let stirling = (n as f64 * mean.ln() - mean - stirling_ln_factorial(n)).exp();
        assert!(
            ((direct - stirling) / stirling).abs() < 1e-12,
            "{direct} vs {stirling}"
        );
    }

    #[test]
    fn truncation_vacuous_tolerance() {
        assert_eq!(choose_truncation(123.0, 1.0), 0);
        assert_eq!(choose_truncation(0.0, 0.5), 0);
    }

    #[test]
    fn truncation_matches_brute_force_tail() {
        // Brute-force oracle: cumulative pmf sums.
        let mean = 1.0;
        let eta = 1e-9;
        let mut cum = 0.0;
        let mut smallest = None;
        for n in 0..200u64 {
            cum += poisson_pmf(mean, n);
            if 1.0 - cum <= eta {
                smallest = Some(n as u32);
                break;
            }
        }
        assert_eq!(choose_truncation(mean, eta), smallest.unwrap());
    }

    #[test]
    fn truncation_tail_bound_holds() {
        for &(mean, eta) in &[(0.5, 1e-6), (7.3, 1e-9), (120.0, 1e-8), (1600.0, 1e-6)] {
            let n = choose_truncation(mean, eta);
            assert!(poisson_upper_tail(mean, n as u64) <= eta);
            if n > 0 {
                assert!(poisson_upper_tail(mean, n as u64 - 1) > eta);
            }
        }
    }

    #[test]
    fn truncation_large_mean_near_normal_quantile() {
        let mean = 1600.0;
        let eta = 1e-6;
        let n = choose_truncation(mean, eta);
        assert!(poisson_upper_tail(mean, n as u64) <= eta);
        let z = (n as f64 - mean) / mean.sqrt();
        let z_expected = inverse_normal_cdf(1.0 - eta);
        assert!(
            (z - z_expected).abs() <= 2.0,
            "z={z}, expected near {z_expected}"
        );
    }

    #[test]
    fn truncation_monotonicity() {
        // Nonincreasing in eta.
        let mut last = u32::MAX;
        for &eta in &[1e-3, 1e-6, 1e-9, 1e-12] {
            let n = choose_truncation(10.0, eta);
            assert!(n <= last || last == u32::MAX);
            assert!(n >= choose_truncation(10.0, eta * 10.0));
            last = n;
        }
        // Nondecreasing in the mean.
        let mut prev = 0;
        for &mean in &[0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
            let n = choose_truncation(mean, 1e-9);
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn pmf_sums_to_tolerance_at_truncation() {
        for &(mean, eta) in &[(3.0, 1e-6), (42.0, 1e-9)] {
            let n = choose_truncation(mean, eta);
            let sum: f64 = (0..=n as u64).map(|k| poisson_pmf(mean, k)).sum();
            assert!(sum >= 1.0 - eta - 1e-15);
        }
    }
}
