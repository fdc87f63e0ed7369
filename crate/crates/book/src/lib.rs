//! Compiles the guide's chapters so their code blocks run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/basis.md")]
pub mod basis {}
#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}
#[doc = include_str!("../../../book/src/estimator.md")]
pub mod estimator {}
#[doc = include_str!("../../../book/src/risk.md")]
pub mod risk {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
