//! Random-intercept linear mixed models: formula parsing, design-matrix
//! construction, REML estimation, diagnostics, and parametric-bootstrap
//! inference.

pub mod bootstrap;
pub mod design;
pub mod formula;
pub mod gvif;
pub mod reml;
pub mod table;

pub use bootstrap::{parametric_bootstrap, BootstrapResult};
pub use design::{build_design, DesignMatrix, TermColumns};
pub use formula::{ModelSpec, Term};
pub use gvif::{gvif, GvifEntry};
pub use reml::{extract_random_intercepts, fit_reml, icc, r2_nakagawa, FitOptions, ModelFit};
pub use table::{Column, Table};
