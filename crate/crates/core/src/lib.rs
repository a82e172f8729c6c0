//! Transfer-based black-box adversarial attacks.
//!
//! An attacker holds a local *substitute* model with free gradients and may
//! only query a *target* model, a bounded number of times, for class scores.
//! This crate provides:
//!
//! * [`curls`]: Curls iteration, which walks both down and up the
//!   substitute's loss to find boundaries a plain ascent misses;
//! * [`whey`]: Whey optimization, which squeezes an adversarial
//!   perturbation toward the original image;
//! * [`targeted`]: the targeted variant seeded by interpolation;
//! * [`baselines`]: FGSM, I-FGSM, MI-FGSM and VR-IGSM under the same
//!   accounting;
//! * [`models`]: a small classifier zoo with training and a binary format;
//! * [`harness`]: the evaluation matrix, sweeps and reports behind the `cw`
//!   binary.
//!
//! ```
//! use curls_whey::{Image, Shape, Goal, QueryLedger, TargetOracle, SubstituteOracle, Rng};
//! use curls_whey::curls::{curls_attack, CurlsConfig};
//! use curls_whey::toys::Threshold;
//!
//! // class 1 once pixel 0 reaches 0.6
//! let model = Threshold::rising(0.6);
//! let x = Image::new(Shape::flat(1), vec![0.5])?;
//! let sub = SubstituteOracle::new(&model);
//! let mut target = TargetOracle::new(&model, QueryLedger::new(200));
//! let out = curls_attack(&x, 0, &sub, &mut target, &CurlsConfig::default(), &mut Rng::new(7))?;
//! assert!(out.success());
//! assert!(out.adversarial.unwrap().as_slice()[0] >= 0.6);
//! assert!(out.queries <= 200);
//! # Ok::<(), curls_whey::Error>(())
//! ```

pub mod attack;
pub mod baselines;
pub mod curls;
pub mod error;
pub mod harness;
pub mod io;
pub mod models;
pub mod oracles;
pub mod rng;
pub mod targeted;
pub mod tensor;
pub mod toys;
pub mod whey;

pub use attack::{AttackOutcome, Goal};
pub use error::{Error, Result};
pub use oracles::{QueryLedger, Scores, SubstituteOracle, TargetOracle};
pub use rng::Rng;
pub use tensor::{Image, Perturbation, Shape};

/// The README and book chapters, compiled so their snippets run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/quickstart.md")]
    pub struct Quickstart;
    #[doc = include_str!("../../../book/src/oracles.md")]
    pub struct Oracles;
    #[doc = include_str!("../../../book/src/curls.md")]
    pub struct Curls;
    #[doc = include_str!("../../../book/src/whey.md")]
    pub struct Whey;
    #[doc = include_str!("../../../book/src/targeted.md")]
    pub struct Targeted;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
    #[doc = include_str!("../../../book/src/configuration.md")]
    pub struct Configuration;
}
