//! Discrete-event simulation of entanglement-based BBM92 key distribution,
//! with a closed-form rate model, a repeater-chain extension and parameter
//! estimation from recorded time tags.
//!
//! ```
//! use qnet::analytic::full_model;
//! use qnet::bbm92::{analyze, run_protocol_multishot};
//! use qnet::optics::ExperimentParams;
//!
//! let p = ExperimentParams::table1();
//! let model = full_model(&p).unwrap();
//! let run = run_protocol_multishot(&p, 300_000, 1).unwrap();
//! let sim = analyze(&run.alice, &run.bob, p.coincidence_window_ps, &p.detector_delays_ps, p.bell_state).unwrap();
//! assert!((sim.raw_key_rate - model.raw_key_rate).abs() < 5.0 * sim.raw_key_rate_se);
//! ```

pub mod analytic;
pub mod bbm92;
pub mod error;
pub mod estimate;
pub mod events;
pub mod optics;
pub mod repeater;
pub mod rng;
pub mod states;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/events.md")]
    mod events {}
    #[doc = include_str!("../../../book/src/states.md")]
    mod states {}
    #[doc = include_str!("../../../book/src/optics.md")]
    mod optics {}
    #[doc = include_str!("../../../book/src/rate-model.md")]
    mod rate_model {}
    #[doc = include_str!("../../../book/src/bbm92.md")]
    mod bbm92 {}
    #[doc = include_str!("../../../book/src/repeater.md")]
    mod repeater {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
}
