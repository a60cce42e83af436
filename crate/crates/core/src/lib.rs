//! Compatibility analysis for multiparameter quantum estimation.

pub mod dephasing;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod holevo;
pub mod lossy;
pub mod model;
pub mod operator;
pub mod optimize;
pub mod probe_search;
pub mod report;
pub mod selftest;
pub mod spin;
pub mod squeezing;
pub mod tolerance;
pub mod unitary;

pub use error::{Error, Result};
pub use tolerance::Tolerances;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fisher-information.md")]
    mod fisher_information {}
    #[doc = include_str!("../../../book/src/holevo.md")]
    mod holevo {}
    #[doc = include_str!("../../../book/src/unitary.md")]
    mod unitary {}
    #[doc = include_str!("../../../book/src/lossy.md")]
    mod lossy {}
    #[doc = include_str!("../../../book/src/dephasing.md")]
    mod dephasing {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
