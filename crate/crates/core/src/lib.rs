//! Robust beamforming for magnetic-induction multi-user downlinks.
//!
//! An above-ground access point with `K` coils drives currents that reach `N`
//! underground single-coil receivers through mutual inductance. Given an
//! estimate of the channel and norm bounds on its error, [`robust`] finds
//! coil currents that keep every receiver's SINR above target for every
//! channel in the error ball while minimizing a bound on transmit power.
//!
//! * [`channel`]: coil impedances, lossy-medium mutual inductance, `H` and `Q`.
//! * [`sdp`]: a primal-dual interior-point solver for block-diagonal SDPs.
//! * [`robust`]: the relaxed robust design and rank-one extraction.
//! * [`baselines`]: perfect-CSI and MMSE designs.
//! * [`montecarlo`]: outage and throughput experiments.
//! * [`cli`]: configuration and result files.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod linalg;
pub mod metrics;
pub mod montecarlo;
pub mod oracle;
pub mod robust;
pub mod sdp;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/sdp.md")]
    mod sdp {}
    #[doc = include_str!("../../../book/src/robust.md")]
    mod robust {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
