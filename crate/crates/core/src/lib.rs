pub mod dist;
pub mod error;
pub mod estimate;
pub mod family;
pub mod garch;
pub mod linalg;
pub mod optim;
pub mod par;
pub mod pcc;
pub mod quad;
pub mod risk;
pub mod special;
pub mod taildep;
pub mod transform;

pub use error::{PccError, Result};
