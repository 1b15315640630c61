// The book's listings compiled as doc-tests: one module per chapter so a
// failure points at its chapter. mdbook itself cannot run them against a
// workspace crate.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/giets.md")]
pub mod giets {}
#[doc = include_str!("../../../book/src/induction.md")]
pub mod induction {}
#[doc = include_str!("../../../book/src/towers.md")]
pub mod towers {}
#[doc = include_str!("../../../book/src/birkhoff.md")]
pub mod birkhoff {}
#[doc = include_str!("../../../book/src/regularity.md")]
pub mod regularity {}
#[doc = include_str!("../../../book/src/growth.md")]
pub mod growth {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
