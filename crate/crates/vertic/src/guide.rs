//! The user guide, one module per chapter.
//!
//! The chapter sources live under `book/` at the workspace root and render
//! with `mdbook build book`. Including them here as module documentation
//! keeps every code snippet in the book compiling and passing under
//! `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/contracts.md")]
pub mod contracts {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}

#[doc = include_str!("../../../book/src/simplex.md")]
pub mod simplex {}

#[doc = include_str!("../../../book/src/platooning.md")]
pub mod platooning {}

#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}
