//! Sparse kernel regressors: ε-insensitive support vector regression and
//! relevance vector machines, single-task and Kronecker multi-task.

mod rvm;
mod svr;

pub use rvm::{fit_mt_rvm, fit_rvm, mt_rvm, rvm, RvmFit, RvmModel, RvmOptions, RvmStop, PRUNE_THRESHOLD};
pub use svr::{fit_mt_svr, fit_svr, mt_svr, svr, SvrDual, SvrModel};
