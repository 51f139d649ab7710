//! Filter-function analysis of dynamical decoupling sequences under
//! classical dephasing noise.

pub mod chi;
pub mod error;
pub mod filter;
pub mod noise;
pub mod plateau;
pub mod pulse;
pub mod quadrature;
pub mod search;
pub mod sequence;

pub use chi::{chi, chi_during, chi_repeated, ChiConfig, ChiEngine, ErrorBudget};
pub use error::{Error, Result};
pub use filter::{filter_fn, passband_max, suppression_order, y_tilde, FilterKernel};
pub use noise::{NoiseSpectrum, Rolloff};
pub use pulse::{PulseFilter, PulseShape};
pub use quadrature::QuadConfig;
pub use sequence::TimingPattern;
