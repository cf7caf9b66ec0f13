//! Block availability in peer-to-peer swarms: how often do the peers of a
//! swarm collectively hold every block of the file, without counting the
//! publisher?
//!
//! The crate has three legs:
//!
//! * **Analytical engines** ([`params`], [`transition`], [`avail`],
//!   [`hetero`], [`closed_form`]): a two-layer queueing model — Poisson
//!   population dynamics over download stages on top of uniform block
//!   allocation — solved by O(N*B) recursions, with closed forms, moment
//!   formulas, bracketing bounds, and provisioning helpers.
//! * **Oracles** ([`oracle`]): exact inclusion/exclusion and exhaustive
//!   enumeration for tiny instances, a Monte Carlo sampler of the model's
//!   allocation law, and an integrated continuous-time Markov simulation.
//! * **Protocol simulator** ([`sim`]): a discrete-event BitTorrent-like
//!   swarm (tracker, tit-for-tat rounds, rarest-first, sub-block transfers,
//!   an always-on publisher) measuring the same availability metrics.
//!
//! [`validation`] cross-checks the legs against each other.

pub mod avail;
pub mod closed_form;
pub mod error;
pub mod hetero;
pub mod numeric;
pub mod oracle;
pub mod ownership;
pub mod params;
pub mod sim;
pub mod transition;
pub mod validation;

pub use avail::{
    avail_distribution, cond_avail_fast, cond_avail_fast_seeded, cond_avail_reference, AvailDist,
    CondAvailTable, GammaMode,
};
pub use closed_form::{
    bonferroni_bounds, cond_avail_closed_inf, cond_avail_closed_seeded, growth_certified,
    mean_available, min_load, seeded_from_inf, self_sust_closed_seeded, stable_block_limit,
    tagged_unavail_prob, BonferroniBounds, MinLoadMode, TaggedBlockProb,
};
pub use error::{Error, Result};
pub use hetero::{avail_hetero, avail_hetero_fast};
pub use ownership::Signature;
pub use params::{
    choose_truncation, poisson_pmf, poisson_upper_tail, BlockRates, Gamma, GammaKind, LoadProfile,
    ModelParams, DEFAULT_BLOCK_BYTES, DEFAULT_ETA,
};
pub use transition::{transition_prob, transition_tail_sum, TransitionKernel};
