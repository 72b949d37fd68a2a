//! REST front door and command-line tooling around [`ztc_core::Engine`].

pub mod api;
pub mod scenario;
