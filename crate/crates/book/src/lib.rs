//! The guide in `book/`, compiled so its listings run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/indices.md")]
pub mod indices {}

#[doc = include_str!("../../../book/src/restrictions.md")]
pub mod restrictions {}

#[doc = include_str!("../../../book/src/power.md")]
pub mod power {}

#[doc = include_str!("../../../book/src/etl.md")]
pub mod etl {}

#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}

#[doc = include_str!("../../../book/src/analytics.md")]
pub mod analytics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
