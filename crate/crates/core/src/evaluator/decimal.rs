use alloc::format;
use alloc::string::String;

use num_rational::Ratio;

/// Renders `value` with exactly `decimals` digits, rounding half up.
pub fn fixed(value: Ratio<u64>, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let (n, d) = (u128::from(*value.numer()), u128::from(*value.denom()));
    let scaled = (2 * n * scale + d) / (2 * d);
    let (whole, frac) = (scaled / scale, scaled % scale);
    if decimals == 0 {
        format!("{whole}")
    } else {
        format!("{whole}.{frac:0width$}", width = decimals as usize)
    }
}

/// Parses `12`, `0.5`, `2.50` or `1/3` into an exact non-negative rational.
pub fn parse_decimal(text: &str) -> Option<Ratio<u64>> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let (n, d): (u64, u64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
        return (d != 0).then(|| Ratio::new(n, d));
    }
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 18 {
        return None;
    }
    let whole: u64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
    let denom = 10u64.pow(frac.len() as u32);
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Ratio::new(whole.checked_mul(denom)?.checked_add(frac)?, denom))
}
