//! Spectral gaps of harmonic oscillator networks whose boundary sites are
//! coupled to Langevin heat baths.

pub mod checks;
pub mod cli;
pub mod lattice;
pub mod operators;
pub mod scenarios;
pub mod spectra;
pub mod wigner;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    pub mod configuration {}
    #[doc = include_str!("../../../book/src/output.md")]
    pub mod output {}
    #[doc = include_str!("../../../book/src/library.md")]
    pub mod library {}
    #[doc = include_str!("../../../book/src/resolvent.md")]
    pub mod resolvent {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
}
