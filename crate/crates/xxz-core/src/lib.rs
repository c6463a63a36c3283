pub mod asymptotics;
pub mod cache;
pub mod contour;
pub mod dressed;
pub mod error;
pub mod kernels;
pub mod quadrature;
pub mod saddle;
pub mod strings;

pub use num_complex::Complex64;

pub use asymptotics::{AsymptoticTerm, ExcitationConfig, Regime};
pub use contour::{CheckRecord, ContourId, ContourSetup, ContourSpec, Suite, TestFunctionJ};
pub use dressed::{DressedSet, FieldSpec, ModelParams};
pub use error::{Result, XxzError};
pub use quadrature::{GridFunction, Polyline, Quadrature};
pub use saddle::{SaddlePoint, StructureReport};
pub use strings::StringSpec;
