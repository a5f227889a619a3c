//! Traditional-pipeline baseline, cost model, ROI and the comparison report.

mod baseline;
mod cost;
mod report;
mod roi;

use thiserror::Error;

pub use baseline::{
    simulate_baseline, simulate_traditional_timeline, BaselineOutcome, BaselineStage, BaselineStagePlan,
    BilateralBooks, BookEntry, Discrepancy, DiscrepancyKind, StageRange, Timeline, DAY_MS,
};
pub use cost::{
    cost_breakdown, fmt_pct, reduction, round_sig, ComponentRates, CostBreakdown, CostComponent, CostModel, Mode,
    Rate,
};
pub use report::{build_comparison_report, BlockchainSummary, Cell, Claim, MetricsReport, ReportRow, Source};
pub use roi::{roi, roi_table, PublishedRow, RoiInput, RoiResult, RoiRow, PUBLISHED_ROI};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconError {
    #[error("invalid baseline plan: {0}")]
    BadPlan(String),
    #[error("invalid cost model: {0}")]
    BadCostModel(String),
    #[error("cannot inject {requested} errors into {available} transactions")]
    TooManyErrors { requested: usize, available: usize },
    #[error("baseline value must be positive")]
    NonPositiveBaseline,
    #[error("annual savings must be positive")]
    ZeroSavings,
    #[error("horizon must be at least one year")]
    BadHorizon,
    #[error("discount rate {0} is out of range")]
    BadDiscountRate(f64),
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error("output: {0}")]
    Output(String),
}
