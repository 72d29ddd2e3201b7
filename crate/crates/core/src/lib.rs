pub mod data;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod heterogeneity;
pub mod model;
pub mod structural;
pub mod ted;
pub mod temporal;
pub mod train;
