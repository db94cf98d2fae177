//! Selectors that do not go through univariate tests.

pub mod forest;
pub mod lasso;

pub use forest::{forest_interpret_step, forest_threshold_step, grow_forest, ForestImportance, ForestOptions, InterpretResult};
pub use lasso::{lasso_select, LassoFit, LassoOptions};
