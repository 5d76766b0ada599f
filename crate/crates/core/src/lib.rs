pub mod checks;
pub mod connecting;
pub mod constants;
pub mod error;
pub mod fedosov;
pub mod forms;
pub mod oracle;
pub mod sample;
pub mod serial;
pub mod symbol;
pub mod trigpoly;
pub mod xcomplex;
pub mod zeta;

pub use error::{Error, Result};
pub use symbol::{Branch, Branches, PolyhomSymbol};
pub use trigpoly::{TrigPoly, C64};
