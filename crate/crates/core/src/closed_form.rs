//! Closed-form expressions for conditional availability, self-sustainability,
//! moments, bracketing bounds, and provisioning formulas.
//!
//! The alternating binomial sums here cancel catastrophically in plain f64
//! once the block count grows, so they are evaluated in double-double
//! arithmetic and refused beyond an empirically determined stable range
//! (see [`stable_block_limit`]); the O(N*B) recursions in [`crate::avail`]
//! remain exact at any size.

use std::sync::OnceLock;

use crate::avail::{
    avail_distribution, cond_avail_fast, cond_avail_fast_seeded, GammaMode,
};
use crate::error::{Error, Result};
use crate::numeric::DoubleDouble;
use crate::params::{Gamma, ModelParams, DEFAULT_ETA};

/// Largest block count for which the closed forms match the recursions to
/// 1e-7, determined once per process by direct comparison on a small grid
/// and cached. Typically lands in the 40-60 range.
pub fn stable_block_limit() -> u32 {
    static LIMIT: OnceLock<u32> = OnceLock::new();
    *LIMIT.get_or_init(find_stable_block_limit)
}

const STABLE_SCAN_CAP: u32 = 120;
const STABLE_SCAN_TOL: f64 = 1e-7;

fn find_stable_block_limit() -> u32 {
    let n_grid: &[u32] = &[1, 2, 3, 5, 9, 17, 30];
    let rho_grid: &[f64] = &[0.25, 1.0, 2.0];
    let mut limit = 3;
    for b in 4..=STABLE_SCAN_CAP {
        let seeded = cond_avail_fast_seeded(b, 30);
        let plain = cond_avail_fast(b, 30);
        let mut ok = true;
        'grid: for &n in n_grid {
            for v in 0..=b {
                let c = closed_seeded_unchecked(b, n, v);
                if (c - seeded.prob(n, v)).abs() > STABLE_SCAN_TOL {
                    ok = false;
                    break 'grid;
                }
                let c = closed_inf_unchecked(b, n, v);
                if (c - plain.prob(n, v)).abs() > STABLE_SCAN_TOL {
                    ok = false;
                    break 'grid;
                }
            }
        }
        if ok {
            for &rho in rho_grid {
                let closed = self_sust_closed_unchecked(b, rho);
                let params = ModelParams::new(rho, 1.0, Gamma::Rate(1.0), b);
                let mixed = avail_distribution(&params, DEFAULT_ETA)
                    .expect("valid parameters")
                    .self_sustainability();
                if (closed - mixed).abs() > STABLE_SCAN_TOL {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        limit = b;
    }
    limit
}

fn check_stable(b: u32, what: &str) -> Result<()> {
    let limit = stable_block_limit();
    if b > limit {
        return Err(Error::Precision(format!(
            "{what} loses precision beyond {limit} blocks (requested {b}); \
             use the recursion-based engine instead"
        )));
    }
    Ok(())
}

/// Alternating sum over l = 0..=v of C(v, l) (-1)^l (b - v + l + 1)^{-n},
/// in double-double arithmetic.
fn alternating_power_sum(b: u32, n: u32, v: u32) -> DoubleDouble {
    let mut sum = DoubleDouble::ZERO;
    let mut binom = DoubleDouble::ONE; // C(v, l)
    for l in 0..=v {
        let base = DoubleDouble::from_f64((b - v + l + 1) as f64);
        let term = binom.mul(base.powi(n as u64).recip());
        sum = if l % 2 == 0 { sum.add(term) } else { sum.sub(term) };
        if l < v {
            binom = binom.mul_f64((v - l) as f64).mul_f64(1.0 / (l + 1) as f64);
        }
    }
    sum
}

fn binomial_dd(n: u32, k: u32) -> DoubleDouble {
    let k = k.min(n - k.min(n));
    let mut acc = DoubleDouble::ONE;
    for i in 0..k {
        acc = acc
            .mul_f64((n - i) as f64)
            .mul_f64(1.0 / (i + 1) as f64);
    }
    acc
}

fn closed_seeded_unchecked(b: u32, n: u32, v: u32) -> f64 {
    if n == 0 {
        return if v == 0 { 1.0 } else { 0.0 };
    }
    let value = binomial_dd(b, v).mul(alternating_power_sum(b, n, v));
    value.to_f64().clamp(0.0, 1.0)
}

fn closed_inf_unchecked(b: u32, n: u32, v: u32) -> f64 {
    if n == 0 {
        return if v == 0 { 1.0 } else { 0.0 };
    }
    if v == b {
        let mut rest = DoubleDouble::ZERO;
        for u in 0..b {
            rest = rest.add(closed_inf_dd(b, n, u));
        }
        return (DoubleDouble::ONE.sub(rest)).to_f64().clamp(0.0, 1.0);
    }
    closed_inf_dd(b, n, v).to_f64().clamp(0.0, 1.0)
}

fn closed_inf_dd(b: u32, n: u32, v: u32) -> DoubleDouble {
    let growth = DoubleDouble::from_f64((b + 1) as f64)
        .div(DoubleDouble::from_f64(b as f64))
        .powi(n as u64);
    binomial_dd(b, v).mul(growth).mul(alternating_power_sum(b, n, v))
}

/// Closed form for p_n(v) in the lingering-seed regime:
/// `C(B,v) * sum_l C(v,l) (-1)^l (B-v+l+1)^{-n}`.
///
/// Matches [`cond_avail_fast_seeded`] to 1e-8 within the stable range and
/// refuses beyond it.
pub fn cond_avail_closed_seeded(b: u32, n: u32, v: u32) -> Result<f64> {
    validate_bnv(b, v)?;
    check_stable(b, "the lingering-seed closed form")?;
    Ok(closed_seeded_unchecked(b, n, v))
}

/// Closed form for p_n(v) in the immediate-departure regime:
/// `C(B,v) ((B+1)/B)^n * sum_l C(v,l) (-1)^l (B-v+l+1)^{-n}` for v < B,
/// complement at v = B.
pub fn cond_avail_closed_inf(b: u32, n: u32, v: u32) -> Result<f64> {
    validate_bnv(b, v)?;
    check_stable(b, "the immediate-departure closed form")?;
    Ok(closed_inf_unchecked(b, n, v))
}

fn validate_bnv(b: u32, v: u32) -> Result<()> {
    if b == 0 {
        return Err(Error::InvalidParameter("block count must be positive".into()));
    }
    if v > b {
        return Err(Error::InvalidParameter(format!(
            "availability {v} exceeds block count {b}"
        )));
    }
    Ok(())
}

fn self_sust_closed_unchecked(b: u32, rho: f64) -> f64 {
    // sum_l C(B,l) (-1)^l exp(-(B+1) rho l / (l+1))
    let mut sum = DoubleDouble::ZERO;
    let mut binom = DoubleDouble::ONE;
    let brho = DoubleDouble::from_f64(rho).mul_f64((b + 1) as f64);
    for l in 0..=b {
        let arg = brho
            .mul_f64(l as f64)
            .mul_f64(1.0 / (l + 1) as f64)
            .neg();
        let term = binom.mul(arg.exp());
        sum = if l % 2 == 0 { sum.add(term) } else { sum.sub(term) };
        if l < b {
            binom = binom.mul_f64((b - l) as f64).mul_f64(1.0 / (l + 1) as f64);
        }
    }
    sum.to_f64().clamp(0.0, 1.0)
}

/// Closed form for self-sustainability in the lingering-seed regime:
/// `sum_l C(B,l) (-1)^l exp(-(B+1) rho l / (l+1))`.
///
/// By inclusion/exclusion, the l-th term aggregates the probability that
/// any l specific blocks are simultaneously unavailable.
pub fn self_sust_closed_seeded(b: u32, rho: f64) -> Result<f64> {
    if b == 0 {
        return Err(Error::InvalidParameter("block count must be positive".into()));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "load must be finite and nonnegative, got {rho}"
        )));
    }
    check_stable(b, "the self-sustainability closed form")?;
    Ok(self_sust_closed_unchecked(b, rho))
}

/// Probability that `tagged` specific blocks are all unavailable among the
/// peers, in the lingering-seed regime.
#[derive(Clone, Copy, Debug)]
pub struct TaggedBlockProb {
    pub b: u32,
    pub rho: f64,
    pub tagged: u32,
    pub prob: f64,
}

/// `exp(-rho * l (B+1) / (l+1))` for `l` tagged blocks; `l = 1` is the
/// single tagged-block probability and `l = B` the probability that the
/// B loaded stages are all empty.
pub fn tagged_unavail_prob(b: u32, rho: f64, tagged: u32) -> Result<TaggedBlockProb> {
    if b == 0 || tagged > b {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= blocks and tagged <= blocks, got blocks={b}, tagged={tagged}"
        )));
    }
    let l = tagged as f64;
    let prob = (-rho * l * (b as f64 + 1.0) / (l + 1.0)).exp();
    Ok(TaggedBlockProb {
        b,
        rho,
        tagged,
        prob,
    })
}

/// Mean number of blocks available among peers, `B (1 - q)` with the
/// tagged-block unavailability `q = exp(-rho (B+1)/2)` under lingering
/// seeds and `q = exp(-rho (B-1)/2)` under immediate departure.
pub fn mean_available(b: u32, rho: f64, mode: GammaMode) -> f64 {
    let q = match mode {
        GammaMode::EqualMu => (-rho * (b as f64 + 1.0) / 2.0).exp(),
        GammaMode::Infinite => (-rho * (b as f64 - 1.0) / 2.0).exp(),
    };
    b as f64 * (1.0 - q)
}

/// Inclusion/exclusion bracketing of self-sustainability in the
/// lingering-seed regime: truncating the alternating series after one and
/// after two terms gives
///
/// ```text
/// 1 - B e^{-(B+1) rho / 2}  <=  A  <=  1 - B e^{-(B+1) rho / 2}
///                                      + (B(B-1)/2) e^{-2(B+1) rho / 3}
/// ```
#[derive(Clone, Copy, Debug)]
pub struct BonferroniBounds {
    pub b: u32,
    pub rho: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BonferroniBounds {
    pub fn brackets(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

pub fn bonferroni_bounds(b: u32, rho: f64) -> BonferroniBounds {
    let bf = b as f64;
    let lower = 1.0 - bf * (-(bf + 1.0) * rho / 2.0).exp();
    let upper = lower + (bf * (bf - 1.0) / 2.0) * (-2.0 * (bf + 1.0) * rho / 3.0).exp();
    BonferroniBounds {
        b,
        rho,
        lower,
        upper,
    }
}

/// Whether the bounds certify that self-sustainability grows from `b` to
/// `b + 1` blocks at this load: the upper bound at `b` sits below the lower
/// bound at `b + 1`. Guaranteed to hold for rho >= 1.6 and b >= 4.
pub fn growth_certified(b: u32, rho: f64) -> bool {
    bonferroni_bounds(b, rho).upper <= bonferroni_bounds(b + 1, rho).lower
}

/// How the minimum load is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinLoadMode {
    /// Tagged-block approximation `2 ln(B / (1 - A*)) / (B - 1)`, accurate
    /// when the target is close to one.
    Approx,
    /// Bisection of the exact immediate-departure engine to |A - A*| <= 1e-6.
    Exact,
}

const MIN_LOAD_A_TOL: f64 = 1e-6;

/// Minimum load `rho*` attaining self-sustainability `target` under
/// immediate departure.
pub fn min_load(b: u32, target: f64, mode: MinLoadMode) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target self-sustainability must lie in (0, 1), got {target}"
        )));
    }
    if b == 0 {
        return Err(Error::InvalidParameter("block count must be positive".into()));
    }
    match mode {
        MinLoadMode::Approx => {
            if b == 1 {
                return Err(Error::Capability(
                    "the closed-form load approximation is undefined for a single block".into(),
                ));
            }
            Ok(2.0 * (b as f64 / (1.0 - target)).ln() / (b as f64 - 1.0))
        }
        MinLoadMode::Exact => {
            let a_of = |rho: f64| -> f64 {
                let params = ModelParams::new(rho, 1.0, Gamma::Infinite, b);
                avail_distribution(&params, DEFAULT_ETA)
                    .expect("valid parameters")
                    .self_sustainability()
            };
            let mut lo = 1e-6;
            let mut hi = 64.0;
            while a_of(hi) < target {
                hi *= 2.0;
                if hi > 1_048_576.0 {
                    return Err(Error::Capability(format!(
                        "self-sustainability {target} is unattainable at {b} blocks \
                         under immediate departure"
                    )));
                }
            }
            if a_of(lo) > target {
                lo = 0.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let a = a_of(mid);
                if (a - target).abs() <= MIN_LOAD_A_TOL {
                    return Ok(mid);
                }
                if a < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Err(Error::Precision(format!(
                "load bisection failed to reach |A - {target}| <= {MIN_LOAD_A_TOL} at {b} blocks"
            )))
        }
    }
}

/// Self-sustainability under a finite seed-departure rate, from the
/// immediate-departure value: `1 - (1 - A_inf) exp(-lambda/gamma)`.
pub fn seeded_from_inf(a_inf: f64, lambda: f64, gamma: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&a_inf));
    debug_assert!(gamma > 0.0 && lambda >= 0.0);
    1.0 - (1.0 - a_inf) * (-lambda / gamma).exp()
}
