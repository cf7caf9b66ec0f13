//! Integrated continuous-time Markov simulation of the swarm model: peer
//! signatures evolve explicitly, arrivals are Poisson, each peer completes
//! a uniformly chosen missing block at total rate mu (rate mu/(B-h) per
//! specific block), transfers are instantaneous, and peers depart on
//! completing their last block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::ownership::Signature;
use crate::params::{GammaKind, ModelParams};

/// Fraction of the horizon discarded before measuring.
const WARMUP_FRACTION: f64 = 0.2;

/// Time averages measured by [`ctmc_simulate`] after warm-up.
#[derive(Clone, Debug)]
pub struct CtmcMetrics {
    pub b: u32,
    pub horizon: f64,
    pub warmup_end: f64,
    /// Fraction of measured time with every block available among peers.
    pub self_sustainability: f64,
    /// Time-average occupancy of each download stage 0..B-1.
    pub stage_occupancy: Vec<f64>,
    /// Time-weighted distribution of the number of available blocks.
    pub v_dist: Vec<f64>,
    /// Periodic post-warm-up snapshots of the stage occupancies, for
    /// distributional checks.
    pub occupancy_snapshots: Vec<Vec<u32>>,
}

/// Run the integrated chain for `horizon_seconds`; deterministic for a
/// fixed seed. Requires a uniform block rate and immediate departure.
pub fn ctmc_simulate(params: &ModelParams, horizon_seconds: f64, seed: u64) -> Result<CtmcMetrics> {
    params.validate()?;
    let Some(mu) = params.scalar_mu() else {
        return Err(Error::Capability(
            "the integrated chain requires a uniform block rate".into(),
        ));
    };
    if params.gamma_kind() != GammaKind::Infinite {
        return Err(Error::Capability(
            "the integrated chain models immediate departure only".into(),
        ));
    }
    if !(horizon_seconds > 0.0 && horizon_seconds.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon_seconds}"
        )));
    }

    let b = params.blocks;
    let lambda = params.lambda;
    let warmup_end = WARMUP_FRACTION * horizon_seconds;
    let snapshot_period = 5.0 / mu;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut users: Vec<Signature> = Vec::new();
    let mut replicas = vec![0u32; b as usize];
    let mut available = 0u32;
    let mut stage_counts = vec![0u32; b as usize];

    let mut sust_time = 0.0;
    let mut occupancy_time = vec![0.0; b as usize];
    let mut v_time = vec![0.0; b as usize + 1];
    let mut snapshots = Vec::new();
    let mut next_snapshot = warmup_end + snapshot_period;

    let mut now = 0.0f64;
    loop {
        let total_rate = lambda + users.len() as f64 * mu;
        let next = if total_rate > 0.0 {
            now + Exp::new(total_rate).expect("positive rate").sample(&mut rng)
        } else {
            horizon_seconds
        };
        let segment_end = next.min(horizon_seconds);

        // Accumulate over [now, segment_end), post warm-up only.
        let measured_from = now.max(warmup_end);
        if segment_end > measured_from {
            let dt = segment_end - measured_from;
            if available == b {
                sust_time += dt;
            }
            v_time[available as usize] += dt;
            for (acc, &c) in occupancy_time.iter_mut().zip(&stage_counts) {
                *acc += c as f64 * dt;
            }
        }
        while next_snapshot <= segment_end {
            snapshots.push(stage_counts.clone());
            next_snapshot += snapshot_period;
        }
        if next >= horizon_seconds {
            break;
        }
        now = next;

        if rng.random_range(0.0..total_rate) < lambda {
            users.push(Signature::empty(b));
            stage_counts[0] += 1;
        } else {
            let idx = rng.random_range(0..users.len());
            let stage = users[idx].stage();
            // Uniformly chosen missing block.
            let pick = rng.random_range(0..b - stage);
            let block = users[idx]
                .missing_blocks()
                .nth(pick as usize)
                .expect("missing block exists");
            stage_counts[stage as usize] -= 1;
            if stage + 1 == b {
                // Last block: the peer departs at the same instant, so its
                // previously held blocks leave the swarm.
                let sig = users.swap_remove(idx);
                for held in sig.iter_blocks() {
                    replicas[held as usize] -= 1;
                    if replicas[held as usize] == 0 {
                        available -= 1;
                    }
                }
            } else {
                users[idx].insert(block);
                stage_counts[stage as usize + 1] += 1;
                replicas[block as usize] += 1;
                if replicas[block as usize] == 1 {
                    available += 1;
                }
            }
        }
    }

    let measured = horizon_seconds - warmup_end;
    Ok(CtmcMetrics {
        b,
        horizon: horizon_seconds,
        warmup_end,
        self_sustainability: sust_time / measured,
        stage_occupancy: occupancy_time.iter().map(|t| t / measured).collect(),
        v_dist: v_time.iter().map(|t| t / measured).collect(),
        occupancy_snapshots: snapshots,
    })
}

/// Mean and standard error of a set of replication means.
pub fn replication_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
