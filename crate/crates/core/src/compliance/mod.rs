//! Oracle snapshots, sanctions and KYC screening, FX conversion.

mod oracle;
mod screen;

pub use oracle::{
    fx_convert, oracle_snapshot, FxQuote, FxTable, KycRecord, KycStatus, OracleError, OracleFeeds,
    OracleView, SanctionsList, DEFAULT_MAX_AGE_MS, RATE_ONE,
};
pub use screen::{evaluate, screen, ScreenError};
