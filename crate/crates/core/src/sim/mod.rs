//! Simulation designs and benchmark harness.

mod bench;
mod design;

pub use bench::{
    bootstrap_scores, compare_pretreatments, roc_points, run_benchmark, run_seed, BenchmarkReport, BootstrapScores, GroupRates,
    PretreatmentComparison, ProcedureCounts, RocCurve, GLOBAL_Q_MAX, METHOD_NAMES, ROC_GRID, TEST_LEVEL,
};

pub use design::{simulate_cluster, simulate_cluster_with, simulate_design, DesignKind, Effect, SimDesign};
