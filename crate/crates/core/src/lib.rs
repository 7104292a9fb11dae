pub mod error;
pub mod fit;
pub mod lns;
pub mod model;
pub mod nested;
pub mod protocols;
pub mod scalar;
pub mod series;
pub mod sim;
pub mod tape;
pub mod trunc;

pub use error::{Error, Result};
pub use lns::{LnsScalar, Sign};
pub use nested::{Forward, Scope, Value};
pub use scalar::Scalar;
pub use series::{ComposeAlgo, TaylorSeries, VarTag};
pub use tape::{record_forward, Tape, Var};
