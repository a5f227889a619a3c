//! Integer fee arithmetic. Everything is exact: products are taken in
//! `u128`, rounding is half-up, and apportionment is largest-remainder.

use super::rules::FeeSplit;

pub const BP_DENOM: u128 = 10_000;

/// `round_half_up(value * numer / denom)`.
pub fn mul_div_half_up(value: u64, numer: u64, denom: u64) -> u64 {
    assert!(denom > 0, "zero denominator");
    let n = value as u128 * numer as u128;
    let d = denom as u128;
    ((2 * n + d) / (2 * d)) as u64
}

pub fn compute_fee(amount: u64, fee_rate_bp: u32) -> u64 {
    mul_div_half_up(amount, fee_rate_bp as u64, BP_DENOM as u64)
}

/// Splits `total_fee` across `splits` (weights in parts per 10,000).
/// Floors first; leftover units go one at a time to the largest
/// fractional remainders, earlier splits winning ties.
pub fn distribute_fee(total_fee: u64, splits: &[FeeSplit]) -> Vec<u64> {
    let mut shares = Vec::with_capacity(splits.len());
    let mut remainders = Vec::with_capacity(splits.len());
    for s in splits {
        let p = total_fee as u128 * s.weight as u128;
        shares.push((p / BP_DENOM) as u64);
        remainders.push(p % BP_DENOM);
    }
    let assigned: u64 = shares.iter().sum();
    let mut leftover = total_fee - assigned;
    let mut order: Vec<usize> = (0..splits.len()).collect();
    // stable sort keeps split order among equal remainders
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]));
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        shares[i] += 1;
        leftover -= 1;
    }
    shares
}
