use serde::{Deserialize, Serialize};

use super::cost::{fmt_pct, Rate};
use super::EconError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiInput {
    pub investment: u64,
    pub annual_savings: u64,
    pub horizon_years: u32,
    pub discount_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiResult {
    pub payback_years: Rate,
    pub npv: f64,
    /// Undiscounted NPV, exact.
    pub npv_r0: i128,
}

pub fn roi(input: &RoiInput) -> Result<RoiResult, EconError> {
    if input.annual_savings == 0 {
        return Err(EconError::ZeroSavings);
    }
    if input.horizon_years == 0 {
        return Err(EconError::BadHorizon);
    }
    if !(input.discount_rate > -1.0 && input.discount_rate.is_finite()) {
        return Err(EconError::BadDiscountRate(input.discount_rate));
    }
    let s = input.annual_savings as f64;
    let npv = (1..=input.horizon_years)
        .map(|t| s / (1.0 + input.discount_rate).powi(t as i32))
        .sum::<f64>()
        - input.investment as f64;
    Ok(RoiResult {
        payback_years: Rate::new(input.investment as i128, input.annual_savings as i128),
        npv,
        npv_r0: input.annual_savings as i128 * input.horizon_years as i128 - input.investment as i128,
    })
}

/// One row of the published investment table, in millions of USD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedRow {
    pub organization_size: &'static str,
    pub volume_musd: u64,
    pub investment_musd: u64,
    pub savings_musd: u64,
    /// Printed payback and its number of decimals.
    pub payback_years: (f64, u32),
    pub npv_musd: u64,
}

pub const PUBLISHED_ROI: [PublishedRow; 4] = [
    PublishedRow {
        organization_size: "Small (< 1B USD)",
        volume_musd: 500,
        investment_musd: 15,
        savings_musd: 8,
        payback_years: (1.9, 1),
        npv_musd: 20,
    },
    PublishedRow {
        organization_size: "Mid-size (1-10B USD)",
        volume_musd: 5_000,
        investment_musd: 50,
        savings_musd: 75,
        payback_years: (0.67, 2),
        npv_musd: 310,
    },
    PublishedRow {
        organization_size: "Large (10-50B USD)",
        volume_musd: 25_000,
        investment_musd: 75,
        savings_musd: 350,
        payback_years: (0.21, 2),
        npv_musd: 1_650,
    },
    PublishedRow {
        organization_size: "Enterprise (50B+ USD)",
        volume_musd: 100_000,
        investment_musd: 100,
        savings_musd: 1_400,
        payback_years: (0.07, 2),
        npv_musd: 6_500,
    },
];

fn musd(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}M USD")
    } else {
        format!("{x:.2}M USD")
    }
}

/// Table row with the published column names, plus computed extras.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiRow {
    #[serde(rename = "Organization Size")]
    pub organization_size: String,
    #[serde(rename = "Annual Settlement Volume")]
    pub annual_settlement_volume: String,
    #[serde(rename = "Infrastructure Investment")]
    pub infrastructure_investment: String,
    #[serde(rename = "Annual Savings")]
    pub annual_savings: String,
    #[serde(rename = "Payback Period")]
    pub payback_period: String,
    #[serde(rename = "5-Year NPV")]
    pub npv: String,
    #[serde(rename = "Payback Years (exact)")]
    pub payback_exact: String,
    #[serde(rename = "Payback Period (paper)")]
    pub payback_paper: String,
    #[serde(rename = "5-Year NPV (r=0)")]
    pub npv_r0: String,
    #[serde(rename = "5-Year NPV (paper-claim)")]
    pub npv_paper: String,
    #[serde(rename = "Rate-Derived Savings")]
    pub rate_derived_savings: String,
    #[serde(rename = "Discount Rate")]
    pub discount_rate: String,
}

/// Recomputes the published table. Savings are taken as given; the
/// savings implied by `fee_rate_delta` are shown beside them.
pub fn roi_table(discount_rate: f64, fee_rate_delta: Rate) -> Result<Vec<RoiRow>, EconError> {
    PUBLISHED_ROI
        .iter()
        .map(|p| {
            let r = roi(&RoiInput {
                investment: p.investment_musd,
                annual_savings: p.savings_musd,
                horizon_years: 5,
                discount_rate,
            })?;
            let pb = *r.payback_years.numer() as f64 / *r.payback_years.denom() as f64;
            let derived = fee_rate_delta * Rate::from_integer(p.volume_musd as i128);
            let (paper_pb, dec) = p.payback_years;
            Ok(RoiRow {
                organization_size: p.organization_size.into(),
                annual_settlement_volume: musd(p.volume_musd as f64),
                infrastructure_investment: musd(p.investment_musd as f64),
                annual_savings: musd(p.savings_musd as f64),
                payback_period: format!("{pb:.prec$} years", prec = dec as usize),
                npv: musd((r.npv * 100.0).round() / 100.0),
                payback_exact: format!("{}/{} = {pb:.4}", r.payback_years.numer(), r.payback_years.denom()),
                payback_paper: format!("{paper_pb:.prec$} years", prec = dec as usize),
                npv_r0: musd(r.npv_r0 as f64),
                npv_paper: musd(p.npv_musd as f64),
                rate_derived_savings: musd(*derived.numer() as f64 / *derived.denom() as f64),
                discount_rate: fmt_pct(Rate::new((discount_rate * 1e6).round() as i128, 1_000_000), 0),
            })
        })
        .collect()
}
