//! Labeling two-qubit states by the hierarchy of steering measurement settings.

pub mod atlas;
pub mod criteria;
pub mod error;
pub mod features;
pub mod linalg;
pub mod mlp;
pub mod protocol;
pub mod sdp;
pub mod state;
pub mod textio;

pub use error::{Error, Result};
