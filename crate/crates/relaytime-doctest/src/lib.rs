//! The guide's code samples, compiled and run as doctests.
//!
//! Each module below pulls one chapter of `book/src` in verbatim, so
//! `cargo test` keeps the book honest: a snippet that stops compiling,
//! or whose assertions stop holding, fails the build. The rendered book
//! comes from `mdbook build book` at the repository root.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/quadrature.md")]
pub mod quadrature {}

#[doc = include_str!("../../../book/src/moments.md")]
pub mod moments {}

#[doc = include_str!("../../../book/src/pmf.md")]
pub mod pmf {}

#[doc = include_str!("../../../book/src/montecarlo.md")]
pub mod montecarlo {}

#[doc = include_str!("../../../book/src/speed.md")]
pub mod speed {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
