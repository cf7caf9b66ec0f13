//! Availability with per-block download rates: a backward recursion over
//! download stages, each stage mixed by its own Poisson occupancy, plus a
//! rescaled-convolution variant of the per-user step.

use crate::avail::AvailDist;
use crate::error::{Error, Result};
use crate::numeric::{ln_binomial, ln_factorial};
use crate::params::{choose_truncation, poisson_pmf, GammaKind, ModelParams, DEFAULT_ETA};
use crate::transition::TransitionKernel;

fn validate_hetero(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.scalar_mu().is_some() {
        return Err(Error::InvalidParameter(
            "uniform rates are handled by avail_distribution; the heterogeneous engine \
             requires per-block rates"
                .into(),
        ));
    }
    if params.gamma_kind() != GammaKind::Infinite {
        return Err(Error::Capability(
            "the heterogeneous engine supports immediate departure only".into(),
        ));
    }
    Ok(())
}

fn default_cap(params: &ModelParams) -> u32 {
    let b = params.blocks;
    let max_mean = (0..b)
        .map(|h| params.stage_mean(h))
        .fold(0.0f64, f64::max);
    // Per-stage tolerance eta/B keeps the union tail bound within eta.
    choose_truncation(max_mean, DEFAULT_ETA / b as f64)
}

/// Steady-state availability distribution under per-block rates, by the
/// direct backward recursion. Stages are processed from the most advanced
/// downward; within a stage, each of up to `per_stage_cap` occupants folds
/// the stage's transition layer into the running distribution, and the
/// results are mixed by the stage's Poisson occupancy (mean lambda over the
/// stage's block rate). Cost O(B^3 * M).
pub fn avail_hetero(params: &ModelParams, per_stage_cap: Option<u32>) -> Result<AvailDist> {
    validate_hetero(params)?;
    let b = params.blocks;
    let cap = per_stage_cap.unwrap_or_else(|| default_cap(params));
    let kernel = TransitionKernel::build(b, b.saturating_sub(1));
    let w = b as usize + 1;

    let mut acc = vec![0.0; w];
    acc[0] = 1.0;
    let mut scratch = vec![0.0; w];
    for stage in (1..b).rev() {
        let mean = params.stage_mean(stage);
        let layer = kernel.layer(stage);
        let mut mixed = vec![0.0; w];
        let mut cur = acc.clone();
        for r in 0..=cap {
            let weight = poisson_pmf(mean, r as u64);
            if weight > 0.0 {
                for (m, c) in mixed.iter_mut().zip(&cur) {
                    *m += weight * c;
                }
            }
            if r < cap {
                scratch.fill(0.0);
                for (k, pk) in cur.iter().enumerate() {
                    if *pk > 0.0 {
                        for (v, s) in scratch.iter_mut().enumerate().skip(k) {
                            *s += pk * layer.prob(k as u32, v as u32);
                        }
                    }
                }
                std::mem::swap(&mut cur, &mut scratch);
            }
        }
        acc = mixed;
    }
    finish_with_stage_zero(params, acc, cap)
}

/// Same output as [`avail_hetero`] (agreement to 1e-8), with the per-user
/// step computed as a convolution of factorial-rescaled vectors:
/// `a(k) k! (B-k)!` convolved with `1/(j! (h-j)!)`, then unscaled by
/// `(v-h)! (B-v)! C(B,h)`, the top entry taken as the mass complement.
/// Scale factors are carried in log space and normalized per step.
pub fn avail_hetero_fast(params: &ModelParams, per_stage_cap: Option<u32>) -> Result<AvailDist> {
    validate_hetero(params)?;
    let b = params.blocks;
    let cap = per_stage_cap.unwrap_or_else(|| default_cap(params));
    let w = b as usize + 1;

    let mut acc = vec![0.0; w];
    acc[0] = 1.0;
    for stage in (1..b).rev() {
        let mean = params.stage_mean(stage);
        let mut mixed = vec![0.0; w];
        let mut cur = acc.clone();
        for r in 0..=cap {
            let weight = poisson_pmf(mean, r as u64);
            if weight > 0.0 {
                for (m, c) in mixed.iter_mut().zip(&cur) {
                    *m += weight * c;
                }
            }
            if r < cap {
                cur = convolution_step(b, stage, &cur);
            }
        }
        acc = mixed;
    }
    finish_with_stage_zero(params, acc, cap)
}

/// One application of the stage-`h` transition layer via rescaled
/// convolution.
fn convolution_step(b: u32, h: u32, cur: &[f64]) -> Vec<f64> {
    let w = b as usize + 1;
    let hb = h as usize;
    let mass: f64 = cur.iter().sum();

    // Rescale the input, normalizing in log space to dodge overflow.
    let ln_in: Vec<f64> = cur
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if *p > 0.0 {
                p.ln() + ln_factorial(k as u64) + ln_factorial((w - 1 - k) as u64)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let in_shift = ln_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if in_shift == f64::NEG_INFINITY {
        return vec![0.0; w];
    }
    let scaled_in: Vec<f64> = ln_in.iter().map(|l| (l - in_shift).exp()).collect();

    let ln_kernel: Vec<f64> = (0..=hb)
        .map(|j| -(ln_factorial(j as u64) + ln_factorial((hb - j) as u64)))
        .collect();
    let kernel_shift = ln_kernel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled_kernel: Vec<f64> = ln_kernel.iter().map(|l| (l - kernel_shift).exp()).collect();

    // Plain O(B*h) convolution; the contract is agreement, not asymptotics.
    let mut conv = vec![0.0; w];
    for (k, a) in scaled_in.iter().enumerate() {
        if *a > 0.0 {
            for (j, p) in scaled_kernel.iter().enumerate() {
                if k + j < w {
                    conv[k + j] += a * p;
                }
            }
        }
    }

    let ln_cbh = ln_binomial(b as u64, h as u64);
    let mut out = vec![0.0; w];
    let mut partial = 0.0;
    for v in hb..w - 1 {
        let ln_unscale = in_shift + kernel_shift
            - ln_factorial((v - hb) as u64)
            - ln_factorial((w - 1 - v) as u64)
            - ln_cbh;
        out[v] = conv[v] * ln_unscale.exp();
        partial += out[v];
    }
    // Mass is conserved by the transition layer, so the top entry is the
    // complement against the running mass (which is below one once the
    // Poisson mixtures are truncated).
    out[w - 1] = (mass - partial).max(0.0);
    out
}

fn finish_with_stage_zero(params: &ModelParams, acc: Vec<f64>, cap: u32) -> Result<AvailDist> {
    let b = params.blocks;
    // Stage-0 peers contribute nothing; mixing just scales by the truncated
    // occupancy mass.
    let mean0 = params.stage_mean(0);
    let cdf0: f64 = (0..=cap as u64).map(|r| poisson_pmf(mean0, r)).sum();
    let pmf: Vec<f64> = acc.iter().map(|p| p * cdf0).collect();
    let mass: f64 = pmf.iter().sum();
    let trunc = (1.0 - mass).max(0.0);
    Ok(AvailDist::from_pmf(
        b,
        GammaKind::Infinite,
        pmf,
        trunc,
        cap,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avail::avail_distribution;
    use crate::params::Gamma;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rejects_uniform_rates_and_finite_gamma() {
        let p = ModelParams::new(1.0, 1.0, Gamma::Infinite, 4);
        assert!(avail_hetero(&p, None).is_err());
        let p = ModelParams::with_rates(1.0, vec![1.0, 2.0], Gamma::Rate(0.5), 2);
        assert!(avail_hetero(&p, Some(10)).is_err());
    }

    #[test]
    fn zero_arrivals_point_mass() {
        let p = ModelParams::with_rates(0.0, vec![1.0, 2.0], Gamma::Infinite, 2);
        for f in [avail_hetero, avail_hetero_fast] {
            let d = f(&p, Some(8)).unwrap();
            assert!((d.prob(0).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(d.self_sustainability(), 0.0);
        }
    }

    #[test]
    fn equal_rate_vector_reduces_to_uniform_engine() {
        for b in [2u32, 5, 9] {
            let mu = 0.8;
            let lambda = 0.5;
            let uniform = ModelParams::new(lambda, mu, Gamma::Infinite, b);
            let expected = avail_distribution(&uniform, 1e-12).unwrap();
            let vector = ModelParams::with_rates(lambda, vec![mu; b as usize], Gamma::Infinite, b);
            for f in [avail_hetero, avail_hetero_fast] {
                let got = f(&vector, None).unwrap();
                for v in 0..=b {
                    let d = (got.prob(v).unwrap() - expected.prob(v).unwrap()).abs();
                    assert!(d <= 1e-8, "b={b} v={v}: diff {d}");
                }
            }
        }
    }

    #[test]
    fn fast_matches_direct_on_random_instances() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for case in 0..12 {
            let b = rng.random_range(2u32..=12);
            let cap = rng.random_range(6u32..=15);
            let rates: Vec<f64> = (0..b).map(|_| rng.random_range(0.2f64..3.0)).collect();
            let lambda = rng.random_range(0.05f64..1.5);
            let params = ModelParams::with_rates(lambda, rates, Gamma::Infinite, b);
            let direct = avail_hetero(&params, Some(cap)).unwrap();
            let fast = avail_hetero_fast(&params, Some(cap)).unwrap();
            for v in 0..=b {
                let d = (direct.prob(v).unwrap() - fast.prob(v).unwrap()).abs();
                assert!(d <= 1e-8, "case {case} b={b} v={v}: diff {d}");
            }
        }
    }

    #[test]
    fn truncation_bound_accounts_for_missing_mass() {
        let params = ModelParams::with_rates(2.0, vec![0.5, 1.0, 0.7], Gamma::Infinite, 3);
        let d = avail_hetero(&params, Some(4)).unwrap();
        let total: f64 = d.pmf().unwrap().iter().sum();
        assert!(total <= 1.0 + 1e-12);
        assert!((1.0 - total - d.trunc_error()).abs() < 1e-12);
    }
}
