//! Exact block-availability engine: conditional availability tables given a
//! population size, and their Poisson mixture into the steady-state
//! distribution of the number of blocks collectively held by peers.

use crate::error::{Error, Result};
use crate::params::{choose_truncation, poisson_pmf, poisson_upper_tail};
use crate::params::{GammaKind, ModelParams};
use crate::transition::{transition_prob_unchecked, TransitionKernel};

/// Seed-departure regime of a conditional table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaMode {
    /// Completed peers leave immediately; population states span stages
    /// 0..B-1.
    Infinite,
    /// Seeds linger at the block rate; population states span stages 0..B.
    EqualMu,
}

/// Probabilities p_n(v) that `v` blocks are available among peers given `n`
/// users in the system, for n = 0..=n_max and v = 0..=B.
#[derive(Clone, Debug)]
pub struct CondAvailTable {
    b: u32,
    n_max: u32,
    gamma_mode: GammaMode,
    p: Vec<f64>,
}

impl CondAvailTable {
    fn new(b: u32, n_max: u32, gamma_mode: GammaMode, p: Vec<f64>) -> Self {
        debug_assert_eq!(p.len(), (n_max as usize + 1) * (b as usize + 1));
        let t = Self {
            b,
            n_max,
            gamma_mode,
            p,
        };
        #[cfg(debug_assertions)]
        for n in 0..=n_max {
            let sum: f64 = t.row(n).iter().sum();
            debug_assert!(
                (sum - 1.0).abs() <= 1e-10,
                "row {n} sums to {sum}, not a probability vector"
            );
        }
        t
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn gamma_mode(&self) -> GammaMode {
        self.gamma_mode
    }

    pub fn prob(&self, n: u32, v: u32) -> f64 {
        debug_assert!(n <= self.n_max && v <= self.b);
        self.p[n as usize * (self.b as usize + 1) + v as usize]
    }

    pub fn row(&self, n: u32) -> &[f64] {
        let w = self.b as usize + 1;
        &self.p[n as usize * w..(n as usize + 1) * w]
    }
}

/// Reference recursion for the immediate-departure regime, O(n_max * B^3):
/// condition on the stage of a uniformly chosen peer (each stage has
/// probability 1/B) and convolve the previous row with the transition
/// kernel. Oracle-grade; intended for B up to about 64.
pub fn cond_avail_reference(b: u32, n_max: u32) -> CondAvailTable {
    let w = b as usize + 1;
    // Layers h = 0..B-1 are the only contributions a leecher can make.
    let kernel = TransitionKernel::build(b, b.saturating_sub(1));
    let mut p = vec![0.0; (n_max as usize + 1) * w];
    p[0] = 1.0;
    for n in 1..=n_max as usize {
        let (done, cur) = p.split_at_mut(n * w);
        let prev = &done[(n - 1) * w..];
        let cur = &mut cur[..w];
        for v in 0..w {
            let mut acc = 0.0;
            for h in 0..=v.min(b as usize - 1) {
                let layer = kernel.layer(h as u32);
                for k in (v - h)..=v {
                    let pk = prev[k];
                    if pk > 0.0 {
                        acc += pk * layer.prob(k as u32, v as u32);
                    }
                }
            }
            cur[v] = acc / b as f64;
        }
    }
    CondAvailTable::new(b, n_max, GammaMode::Infinite, p)
}

/// O(n_max * B) recursion for the immediate-departure regime:
///
/// ```text
/// p_n(0) = 1 / B^n
/// p_n(v) = p_n(v-1) + p_{n-1}(v) * (B+1) / (B * (B - v + 1)),  0 < v < B
/// p_n(B) = 1 - sum of the rest
/// ```
///
/// The complement entry may round slightly negative; it is clamped after
/// an assertion that the deficit stays below 1e-9.
pub fn cond_avail_fast(b: u32, n_max: u32) -> CondAvailTable {
    let w = b as usize + 1;
    let coeff: Vec<f64> = (0..w)
        .map(|v| (b as f64 + 1.0) / (b as f64 * (b as usize - v + 1) as f64))
        .collect();
    let mut p = vec![0.0; (n_max as usize + 1) * w];
    p[0] = 1.0;
    for n in 1..=n_max as usize {
        let (done, cur) = p.split_at_mut(n * w);
        let prev = &done[(n - 1) * w..];
        let cur = &mut cur[..w];
        cur[0] = prev[0] / b as f64; // 1/B^n
        let mut sum = cur[0];
        for v in 1..b as usize {
            cur[v] = cur[v - 1] + prev[v] * coeff[v];
            sum += cur[v];
        }
        if b > 0 {
            let last = 1.0 - sum;
            assert!(
                last >= -1e-9,
                "complement entry p_{n}({b}) = {last} below tolerance"
            );
            cur[b as usize] = last.clamp(0.0, 1.0);
        }
    }
    CondAvailTable::new(b, n_max, GammaMode::Infinite, p)
}

/// O(n_max * B) recursion for the lingering-seed regime (departure rate
/// equal to the block rate):
///
/// ```text
/// p_n(0) = 1 / (B+1)^n
/// p_n(v) = p_n(v-1) + p_{n-1}(v) / (B - v + 1),  0 < v <= B
/// ```
///
/// Rows sum to one without a complement step.
pub fn cond_avail_fast_seeded(b: u32, n_max: u32) -> CondAvailTable {
    let w = b as usize + 1;
    let mut p = vec![0.0; (n_max as usize + 1) * w];
    p[0] = 1.0;
    for n in 1..=n_max as usize {
        let (done, cur) = p.split_at_mut(n * w);
        let prev = &done[(n - 1) * w..];
        let cur = &mut cur[..w];
        cur[0] = prev[0] / (b as f64 + 1.0); // 1/(B+1)^n
        for v in 1..w {
            cur[v] = cur[v - 1] + prev[v] / (b as usize - v + 1) as f64;
        }
        let sum: f64 = cur.iter().sum();
        assert!(
            (sum - 1.0).abs() <= 1e-10,
            "seeded row {n} sums to {sum}"
        );
    }
    CondAvailTable::new(b, n_max, GammaMode::EqualMu, p)
}

/// Steady-state distribution of the number of blocks available among peers,
/// or, under a general finite seed rate, just its top entry.
#[derive(Clone, Debug)]
pub struct AvailDist {
    b: u32,
    gamma: GammaKind,
    pmf: Option<Vec<f64>>,
    self_sust: f64,
    trunc_error: f64,
    n_trunc: u32,
}

impl AvailDist {
    pub(crate) fn from_pmf(
        b: u32,
        gamma: GammaKind,
        pmf: Vec<f64>,
        trunc_error: f64,
        n_trunc: u32,
    ) -> Self {
        debug_assert_eq!(pmf.len(), b as usize + 1);
        let self_sust = pmf[b as usize];
        Self {
            b,
            gamma,
            pmf: Some(pmf),
            self_sust,
            trunc_error,
            n_trunc,
        }
    }

    fn only_self_sust(b: u32, gamma: GammaKind, a: f64, trunc_error: f64, n_trunc: u32) -> Self {
        Self {
            b,
            gamma,
            pmf: None,
            self_sust: a,
            trunc_error,
            n_trunc,
        }
    }

    pub fn blocks(&self) -> u32 {
        self.b
    }

    pub fn gamma(&self) -> GammaKind {
        self.gamma
    }

    /// Steady-state probability that all blocks are collectively available.
    pub fn self_sustainability(&self) -> f64 {
        self.self_sust
    }

    /// Upper bound on the probability mass lost to truncation.
    pub fn trunc_error(&self) -> f64 {
        self.trunc_error
    }

    /// Population (or per-stage) truncation point used in the computation.
    pub fn truncation(&self) -> u32 {
        self.n_trunc
    }

    /// The full distribution over v = 0..=B. Unavailable under a general
    /// finite seed rate, where only the top entry is defined.
    pub fn pmf(&self) -> Result<&[f64]> {
        self.pmf.as_deref().ok_or_else(|| {
            Error::Capability(
                "full availability distribution is not defined for a finite seed rate other \
                 than the block rate; only self-sustainability is available"
                    .into(),
            )
        })
    }

    pub fn prob(&self, v: u32) -> Result<f64> {
        Ok(self.pmf()?[v as usize])
    }

    /// Mean number of available blocks.
    pub fn mean_blocks(&self) -> Result<f64> {
        Ok(self
            .pmf()?
            .iter()
            .enumerate()
            .map(|(v, p)| v as f64 * p)
            .sum())
    }
}

/// Mix a conditional table with Poisson population weights of the given
/// mean, truncated at `n_trunc`.
pub(crate) fn mix_poisson(table: &CondAvailTable, mean: f64, n_trunc: u32) -> Vec<f64> {
    debug_assert!(n_trunc <= table.n_max());
    let w = table.b() as usize + 1;
    let mut out = vec![0.0; w];
    for n in 0..=n_trunc {
        let weight = poisson_pmf(mean, n as u64);
        if weight == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(table.row(n)) {
            *o += weight * p;
        }
    }
    out
}

/// Steady-state availability distribution for the given parameters.
///
/// * Immediate departure: Poisson(B*rho) mixture of [`cond_avail_fast`].
/// * Seed rate equal to the block rate: Poisson((B+1)*rho) mixture of
///   [`cond_avail_fast_seeded`].
/// * Other finite seed rates: only self-sustainability, obtained from the
///   immediate-departure value `A` as `1 - (1 - A) * exp(-lambda/gamma)`
///   (a block is unavailable iff no leecher holds it and no seed is
///   present).
///
/// `eta` bounds the Poisson truncation error; the reported bound is the
/// exact tail.
pub fn avail_distribution(params: &ModelParams, eta: f64) -> Result<AvailDist> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "truncation tolerance must lie in (0, 1), got {eta}"
        )));
    }
    let profile = params.validate()?;
    if params.scalar_mu().is_none() {
        return Err(Error::InvalidParameter(
            "per-block rates require the heterogeneous engine (avail_hetero)".into(),
        ));
    }
    let b = params.blocks;
    match params.gamma_kind() {
        GammaKind::Infinite => {
            let mean = b as f64 * profile.rho;
            let n = choose_truncation(mean, eta);
            let table = cond_avail_fast(b, n);
            let pmf = mix_poisson(&table, mean, n);
            let tail = poisson_upper_tail(mean, n as u64);
            Ok(AvailDist::from_pmf(b, GammaKind::Infinite, pmf, tail, n))
        }
        GammaKind::EqualMu => {
            let mean = (b as f64 + 1.0) * profile.rho;
            let n = choose_truncation(mean, eta);
            let table = cond_avail_fast_seeded(b, n);
            let pmf = mix_poisson(&table, mean, n);
            let tail = poisson_upper_tail(mean, n as u64);
            Ok(AvailDist::from_pmf(b, GammaKind::EqualMu, pmf, tail, n))
        }
        GammaKind::Finite(g) => {
            let mut inf_params = params.clone();
            inf_params.gamma = crate::params::Gamma::Infinite;
            let base = avail_distribution(&inf_params, eta)?;
            let damp = (-params.lambda / g).exp();
            let a = 1.0 - (1.0 - base.self_sustainability()) * damp;
            Ok(AvailDist::only_self_sust(
                b,
                GammaKind::Finite(g),
                a,
                base.trunc_error() * damp,
                base.truncation(),
            ))
        }
    }
}

/// Conditional availability distribution for an explicit stage occupancy
/// vector (counts of peers owning 0..=B blocks): fold the transition kernel
/// over every peer. Exchangeability makes the fold order irrelevant.
pub fn cond_dist_for_stages(b: u32, stage_counts: &[u32]) -> Result<Vec<f64>> {
    if stage_counts.len() != b as usize + 1 {
        return Err(Error::InvalidParameter(format!(
            "stage vector must have {} entries, got {}",
            b + 1,
            stage_counts.len()
        )));
    }
    let w = b as usize + 1;
    let mut dist = vec![0.0; w];
    dist[0] = 1.0;
    let mut scratch = vec![0.0; w];
    for (h, &count) in stage_counts.iter().enumerate() {
        if count == 0 || h == 0 {
            continue; // stage-0 peers hold nothing
        }
        for _ in 0..count {
            scratch.fill(0.0);
            for (k, pk) in dist.iter().enumerate() {
                if *pk > 0.0 {
                    for (v, s) in scratch.iter_mut().enumerate().skip(k) {
                        *s += pk * transition_prob_unchecked(b, h as u32, k as u32, v as u32);
                    }
                }
            }
            std::mem::swap(&mut dist, &mut scratch);
        }
    }
    Ok(dist)
}
