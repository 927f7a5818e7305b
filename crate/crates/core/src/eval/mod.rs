//! Oracle-judged edit metrics, the full-vs-narrowed comparison and
//! figure-style grids.

mod compare;
mod grid;
mod metrics;
mod oracle;

pub use compare::{compare_full_vs_narrowed, config_digest, Comparison, ComparisonRun, GroupDelta};
pub use grid::{render_grid, Grid};
pub use metrics::{edit_success_rate, evaluate, preservation_rate, reconstruction_metrics, AttributeEval, EvalReport};
pub use oracle::{train_oracle, OracleClassifier, OracleConfig};
