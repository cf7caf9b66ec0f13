//! Monte Carlo sampler of the uniform-allocation law: per sample, stage
//! occupancies drawn Poisson, each peer's blocks drawn uniformly without
//! replacement, and the union size tallied.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::ownership::Signature;
use crate::params::{GammaKind, ModelParams};

/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.575_829_303_548_901;

/// Empirical availability distribution with per-entry 99% confidence
/// half-widths (normal approximation).
#[derive(Clone, Debug)]
pub struct McAvailDist {
    pub b: u32,
    pub samples: u64,
    pub pmf: Vec<f64>,
    pub ci_half_width: Vec<f64>,
}

impl McAvailDist {
    pub fn self_sustainability(&self) -> f64 {
        self.pmf[self.b as usize]
    }

    pub fn self_sustainability_ci(&self) -> (f64, f64) {
        let p = self.self_sustainability();
        let h = self.ci_half_width[self.b as usize];
        (p - h, p + h)
    }

    /// Whether the interval around entry `v` covers `value`.
    pub fn covers(&self, v: u32, value: f64) -> bool {
        let p = self.pmf[v as usize];
        let h = self.ci_half_width[v as usize];
        (p - h..=p + h).contains(&value)
    }
}

/// Sample the availability distribution. Deterministic for a fixed seed.
///
/// Stage occupancies are Poisson with the stage's own mean (lambda over the
/// stage's block rate); with lingering seeds at the block rate, the seed
/// stage carries load rho as well and any seed completes the union.
pub fn mc_avail_dist(params: &ModelParams, samples: u64, seed: u64) -> Result<McAvailDist> {
    params.validate()?;
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let b = params.blocks;
    let seed_stage_mean = match params.gamma_kind() {
        GammaKind::Infinite => None,
        GammaKind::EqualMu => Some(params.stage_mean(0)),
        GammaKind::Finite(_) => {
            return Err(Error::Capability(
                "sampling supports immediate departure or seeds lingering at the block rate"
                    .into(),
            ))
        }
    };
    if seed_stage_mean.is_some() && params.scalar_mu().is_none() {
        return Err(Error::Capability(
            "lingering seeds are only defined for a uniform block rate".into(),
        ));
    }

    let stage_dists: Vec<Option<Poisson<f64>>> = (0..b)
        .map(|h| {
            let mean = params.stage_mean(h);
            (mean > 0.0).then(|| Poisson::new(mean).expect("positive mean"))
        })
        .collect();
    let seed_dist = seed_stage_mean
        .filter(|m| *m > 0.0)
        .map(|m| Poisson::new(m).expect("positive mean"));

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; b as usize + 1];
    let mut union = Signature::empty(b);
    let mut scratch: Vec<u32> = (0..b).collect();
    for _ in 0..samples {
        union.clear();
        let seeds_present = match &seed_dist {
            Some(d) => d.sample(&mut rng) as u64 > 0,
            None => false,
        };
        if seeds_present {
            counts[b as usize] += 1;
            continue;
        }
        // Stage h > 0 peers contribute h uniform blocks each.
        for (h, dist) in stage_dists.iter().enumerate().skip(1) {
            let Some(dist) = dist else { continue };
            let occupants = dist.sample(&mut rng) as u64;
            for _ in 0..occupants {
                draw_uniform_blocks(&mut rng, &mut scratch, h as u32, &mut union);
            }
        }
        counts[union.stage() as usize] += 1;
    }

    let n = samples as f64;
    let pmf: Vec<f64> = counts.iter().map(|c| *c as f64 / n).collect();
    let ci_half_width = pmf
        .iter()
        .map(|p| Z_99 * (p * (1.0 - p) / n).sqrt())
        .collect();
    Ok(McAvailDist {
        b,
        samples,
        pmf,
        ci_half_width,
    })
}

/// Insert `h` distinct uniform block indices via a partial Fisher-Yates
/// shuffle; exactly uniform over the C(B, h) subsets.
fn draw_uniform_blocks(rng: &mut ChaCha12Rng, scratch: &mut [u32], h: u32, union: &mut Signature) {
    let b = scratch.len();
    for (i, v) in scratch.iter_mut().enumerate() {
        *v = i as u32;
    }
    for i in 0..h as usize {
        let j = rng.random_range(i..b);
        scratch.swap(i, j);
        union.insert(scratch[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avail::avail_distribution;
    use crate::params::Gamma;

    #[test]
    fn zero_arrivals_zero_width() {
        let params = ModelParams::new(0.0, 1.0, Gamma::Infinite, 6);
        let d = mc_avail_dist(&params, 1000, 9).unwrap();
        assert_eq!(d.pmf[0], 1.0);
        assert_eq!(d.self_sustainability(), 0.0);
        assert_eq!(d.ci_half_width[0], 0.0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let params = ModelParams::new(0.5, 1.0, Gamma::Infinite, 8);
        let a = mc_avail_dist(&params, 20_000, 1234).unwrap();
        let b = mc_avail_dist(&params, 20_000, 1234).unwrap();
        assert_eq!(a.pmf, b.pmf);
        let c = mc_avail_dist(&params, 20_000, 1235).unwrap();
        assert_ne!(a.pmf, c.pmf);
    }

    #[test]
    fn ci_covers_analytic_value() {
        let params = ModelParams::new(0.5, 1.0, Gamma::Infinite, 8);
        let analytic = avail_distribution(&params, 1e-10).unwrap();
        let mc = mc_avail_dist(&params, 100_000, 42).unwrap();
        assert!(
            mc.covers(8, analytic.self_sustainability()),
            "CI {:?} missed {}",
            mc.self_sustainability_ci(),
            analytic.self_sustainability()
        );
    }

    #[test]
    fn seeded_regime_matches_analytic() {
        let params = ModelParams::new(0.8, 1.0, Gamma::Rate(1.0), 6);
        let analytic = avail_distribution(&params, 1e-10).unwrap();
        let mc = mc_avail_dist(&params, 100_000, 99).unwrap();
        assert!(mc.covers(6, analytic.self_sustainability()));
    }

    #[test]
    fn finite_gamma_rejected() {
        let params = ModelParams::new(0.5, 1.0, Gamma::Rate(0.2), 4);
        assert!(mc_avail_dist(&params, 10, 1).is_err());
    }
}
