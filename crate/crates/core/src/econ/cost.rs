use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::EconError;

pub type Rate = Ratio<i128>;

const PPM: i128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Traditional,
    Blockchain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostComponent {
    Intermediary,
    Labor,
    Technology,
    Error,
    Infrastructure,
}

/// Cost rates as parts per million of transaction value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub intermediary_ppm: [u32; 2],
    pub labor_ppm: [u32; 2],
    pub technology_ppm: [u32; 2],
    pub error_ppm: [u32; 2],
    /// Share of the traditional cost that remains, in percent.
    pub intermediary_remaining_pct: u32,
    pub labor_remaining_pct: u32,
    pub error_remaining_pct: u32,
    pub infrastructure_ppm: [u32; 2],
    pub headline_traditional_ppm: u32,
    pub headline_blockchain_ppm: u32,
    /// Explicit blockchain rates, replacing the derived ones.
    pub blockchain_override_ppm: Option<ComponentRates>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRates {
    pub intermediary: u32,
    pub labor: u32,
    pub technology: u32,
    pub error: u32,
    pub infrastructure: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            intermediary_ppm: [30_000, 50_000],
            labor_ppm: [20_000, 30_000],
            technology_ppm: [5_000, 10_000],
            error_ppm: [5_000, 20_000],
            intermediary_remaining_pct: 13,
            labor_remaining_pct: 30,
            error_remaining_pct: 12,
            infrastructure_ppm: [500, 2_000],
            headline_traditional_ppm: 50_000,
            headline_blockchain_ppm: 6_500,
            blockchain_override_ppm: None,
        }
    }
}

fn ppm(x: u32) -> Rate {
    Rate::new(x as i128, PPM)
}

fn midpoint(r: [u32; 2]) -> Rate {
    Rate::new(r[0] as i128 + r[1] as i128, 2 * PPM)
}

impl CostModel {
    pub fn validate(&self) -> Result<(), EconError> {
        for r in [
            self.intermediary_ppm,
            self.labor_ppm,
            self.technology_ppm,
            self.error_ppm,
            self.infrastructure_ppm,
        ] {
            if r[0] > r[1] {
                return Err(EconError::BadCostModel("rate range is empty".into()));
            }
        }
        Ok(())
    }

    /// Per-component rates (fractions of value) for `mode`. Traditional
    /// rates are range midpoints; blockchain rates scale those by the
    /// remaining shares, keep technology as is and add infrastructure.
    pub fn rates(&self, mode: Mode) -> Vec<(CostComponent, Rate)> {
        use CostComponent::*;
        match mode {
            Mode::Traditional => vec![
                (Intermediary, midpoint(self.intermediary_ppm)),
                (Labor, midpoint(self.labor_ppm)),
                (Technology, midpoint(self.technology_ppm)),
                (Error, midpoint(self.error_ppm)),
            ],
            Mode::Blockchain => match &self.blockchain_override_ppm {
                Some(o) => vec![
                    (Intermediary, ppm(o.intermediary)),
                    (Labor, ppm(o.labor)),
                    (Technology, ppm(o.technology)),
                    (Error, ppm(o.error)),
                    (Infrastructure, ppm(o.infrastructure)),
                ],
                None => {
                    let pct = |p: u32| Rate::new(p as i128, 100);
                    vec![
                        (Intermediary, midpoint(self.intermediary_ppm) * pct(self.intermediary_remaining_pct)),
                        (Labor, midpoint(self.labor_ppm) * pct(self.labor_remaining_pct)),
                        (Technology, midpoint(self.technology_ppm)),
                        (Error, midpoint(self.error_ppm) * pct(self.error_remaining_pct)),
                        (Infrastructure, midpoint(self.infrastructure_ppm)),
                    ]
                }
            },
        }
    }

    pub fn headline(&self, mode: Mode) -> Rate {
        match mode {
            Mode::Traditional => ppm(self.headline_traditional_ppm),
            Mode::Blockchain => ppm(self.headline_blockchain_ppm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostBreakdown {
    pub mode: Mode,
    pub components: Vec<(CostComponent, Rate)>,
    pub component_total: Rate,
    pub headline_total: Rate,
}

/// Exact costs for moving `value` in the given mode.
pub fn cost_breakdown(value: u64, model: &CostModel, mode: Mode) -> CostBreakdown {
    let v = Rate::from_integer(value as i128);
    let components: Vec<(CostComponent, Rate)> = model.rates(mode).into_iter().map(|(c, r)| (c, r * v)).collect();
    let component_total = components.iter().fold(Rate::from_integer(0), |a, (_, x)| a + x);
    CostBreakdown {
        mode,
        components,
        component_total,
        headline_total: model.headline(mode) * v,
    }
}

/// 1 - new/old, exact.
pub fn reduction(old: Rate, new: Rate) -> Result<Rate, EconError> {
    if old <= Rate::from_integer(0) {
        return Err(EconError::NonPositiveBaseline);
    }
    Ok(Rate::from_integer(1) - new / old)
}

/// Rounds to `n` significant figures (half away from zero) and prints the
/// decimal without exponent.
pub fn round_sig(r: Rate, n: u32) -> String {
    let x = *r.numer() as f64 / *r.denom() as f64;
    if x == 0.0 {
        return "0".into();
    }
    let decimals = |v: f64| (n as i32 - 1 - v.abs().log10().floor() as i32).max(0) as usize;
    let d = decimals(x);
    // rounding can carry into the next power of ten
    let rounded: f64 = format!("{x:.d$}").parse().expect("float");
    let d = decimals(rounded).min(d);
    format!("{rounded:.d$}")
}

/// Percentage of an exact fraction, trailing zeros trimmed down to
/// `min_decimals` places (at most 4 places are shown).
pub fn fmt_pct(r: Rate, min_decimals: usize) -> String {
    let scaled = r * Rate::from_integer(100);
    let mut s = format!("{:.4}", *scaled.numer() as f64 / *scaled.denom() as f64);
    if let Some(dot) = s.find('.') {
        while s.len() > dot + 1 + min_decimals && s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    format!("{s}%")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn int(x: i128) -> Rate {
        Rate::from_integer(x)
    }

    #[test]
    fn headline_totals() {
        let m = CostModel::default();
        assert_eq!(cost_breakdown(1_000_000, &m, Mode::Traditional).headline_total, int(50_000));
        assert_eq!(cost_breakdown(1_000_000, &m, Mode::Blockchain).headline_total, int(6_500));
        let z = cost_breakdown(0, &m, Mode::Blockchain);
        assert_eq!(z.headline_total, int(0));
        assert!(z.components.iter().all(|(_, c)| *c == int(0)));
    }

    #[test]
    fn derived_components() {
        let m = CostModel::default();
        let t = cost_breakdown(1_000_000, &m, Mode::Traditional);
        let b = cost_breakdown(1_000_000, &m, Mode::Blockchain);
        let get = |c: &CostBreakdown, k| c.components.iter().find(|x| x.0 == k).unwrap().1;
        assert_eq!(get(&t, CostComponent::Intermediary), int(40_000));
        assert_eq!(get(&b, CostComponent::Intermediary), int(5_200));
        assert_eq!(get(&b, CostComponent::Labor), int(7_500));
        assert_eq!(get(&b, CostComponent::Error), int(1_500));
        assert_eq!(get(&b, CostComponent::Infrastructure), int(1_250));
        assert_eq!(t.component_total, int(85_000));
        assert_eq!(b.component_total, int(22_950));
        assert_eq!(reduction(get(&t, CostComponent::Intermediary), get(&b, CostComponent::Intermediary)).unwrap(), Rate::new(87, 100));
        assert_eq!(reduction(get(&t, CostComponent::Error), get(&b, CostComponent::Error)).unwrap(), Rate::new(88, 100));
    }

    #[test]
    fn override_replaces_derivation() {
        let m = CostModel {
            blockchain_override_ppm: Some(ComponentRates {
                intermediary: 1,
                labor: 2,
                technology: 3,
                error: 4,
                infrastructure: 5,
            }),
            ..Default::default()
        };
        assert_eq!(cost_breakdown(1_000_000, &m, Mode::Blockchain).component_total, int(15));
    }

    #[test]
    fn reduction_examples() {
        let m = CostModel::default();
        let r = reduction(m.headline(Mode::Traditional), m.headline(Mode::Blockchain)).unwrap();
        assert_eq!(r, Rate::new(87, 100));
        assert_eq!(reduction(int(7), int(7)).unwrap(), int(0));
        let days_ms = int(120 * 86_400_000);
        let cycle = reduction(days_ms, int(180_000)).unwrap();
        assert_eq!(cycle, int(1) - Rate::new(3, 172_800));
        assert_eq!(round_sig(cycle, 4), "1.000");
        assert_eq!(round_sig(Rate::new(87, 100), 4), "0.8700");
        assert_eq!(reduction(int(0), int(1)), Err(EconError::NonPositiveBaseline));
    }

    #[test]
    fn percent_format() {
        assert_eq!(fmt_pct(Rate::new(50_000, PPM), 1), "5.0%");
        assert_eq!(fmt_pct(Rate::new(6_500, PPM), 1), "0.65%");
        assert_eq!(fmt_pct(Rate::new(87, 100), 0), "87%");
        assert_eq!(fmt_pct(int(1) - Rate::new(3, 172_800), 0), "99.9983%");
    }

    proptest! {
        #[test]
        fn reduction_scale_invariant(old in 1i64..1_000_000_000, new in 0i64..1_000_000_000, k in 1i64..1_000_000) {
            let (o, n, k) = (old as i128, new as i128, k as i128);
            prop_assert_eq!(reduction(int(o), int(n)).unwrap(), reduction(int(k * o), int(k * n)).unwrap());
        }
    }
}
