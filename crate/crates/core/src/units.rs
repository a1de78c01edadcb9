//! Parsing and formatting of the SI quantities used in scenarios and on the
//! command line: durations, bit rates, frequencies, byte volumes and exact
//! ratios.

use num_rational::Ratio;
use thiserror::Error;

use crate::engine::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {kind} `{text}`")]
pub struct UnitError {
    pub kind: &'static str,
    pub text: String,
}

fn err(kind: &'static str, text: &str) -> UnitError {
    UnitError {
        kind,
        text: text.to_string(),
    }
}

/// Splits `"12.5Mbps"` into `("12.5", "Mbps")`.
fn split_number(text: &str) -> (&str, &str) {
    let end = text
        .char_indices()
        .find(|&(_, c)| !(c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '+' || c == '-'))
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    // An `e` directly followed by a letter belongs to the unit (e.g. "1EB").
    let (mut num, mut unit) = text.split_at(end);
    if let Some(stripped) = num.strip_suffix(['e', 'E']) {
        num = stripped;
        unit = &text[num.len()..];
    }
    (num, unit)
}

/// Exact decimal parse: `"1.536"` → 192/125.
pub fn parse_decimal(text: &str) -> Option<Ratio<u128>> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: u128 = n.trim().parse().ok()?;
        let d: u128 = d.trim().parse().ok()?;
        return (d != 0).then(|| Ratio::new(n, d));
    }
    let (mantissa, exponent) = match text.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: u128 = format!("{int}{frac}").parse().ok()?;
    let scale = exponent - frac.len() as i32;
    let ten = 10u128;
    Some(if scale >= 0 {
        Ratio::from_integer(digits.checked_mul(ten.checked_pow(scale as u32)?)?)
    } else {
        Ratio::new(digits, ten.checked_pow((-scale) as u32)?)
    })
}

fn scaled(text: &str, kind: &'static str, units: &[(&str, u128)]) -> Result<Ratio<u128>, UnitError> {
    let (num, unit) = split_number(text.trim());
    let value = parse_decimal(num).ok_or_else(|| err(kind, text))?;
    let mult = units
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|&(_, m)| m)
        .ok_or_else(|| err(kind, text))?;
    Ok(value * Ratio::from_integer(mult))
}

fn to_integer(r: Ratio<u128>, kind: &'static str, text: &str) -> Result<u64, UnitError> {
    if !r.is_integer() {
        return Err(err(kind, text));
    }
    u64::try_from(r.to_integer()).map_err(|_| err(kind, text))
}

/// `5ms`, `250us`, `1.5s`, or a bare integer of microseconds.
pub fn parse_time(text: &str) -> Result<SimTime, UnitError> {
    const UNITS: &[(&str, u128)] = &[("", 1), ("us", 1), ("ms", 1_000), ("s", 1_000_000)];
    let r = scaled(text, "time", UNITS)?;
    Ok(SimTime::from_micros(to_integer(r, "time", text)?))
}

pub fn format_time(t: SimTime) -> String {
    let us = t.as_micros();
    if us.is_multiple_of(1_000_000) && us > 0 {
        format!("{}s", us / 1_000_000)
    } else if us.is_multiple_of(1_000) && us > 0 {
        format!("{}ms", us / 1_000)
    } else {
        format!("{us}us")
    }
}

const RATE_UNITS: &[(&str, u128)] = &[
    ("", 1),
    ("bps", 1),
    ("b/s", 1),
    ("kbps", 1_000),
    ("kb/s", 1_000),
    ("k", 1_000),
    ("Mbps", 1_000_000),
    ("Mb/s", 1_000_000),
    ("M", 1_000_000),
    ("Gbps", 1_000_000_000),
    ("Gb/s", 1_000_000_000),
    ("G", 1_000_000_000),
    ("Tbps", 1_000_000_000_000),
    ("Tb/s", 1_000_000_000_000),
];

/// Bit rate in bits per second: `10Mbps`, `2.5Gb/s`, `64k`, `1000`.
pub fn parse_rate(text: &str) -> Result<u64, UnitError> {
    let r = scaled(text, "rate", RATE_UNITS)?;
    to_integer(r, "rate", text)
}

pub fn format_rate_compact(bps: u64) -> String {
    for (div, unit) in [(1_000_000_000, "Gbps"), (1_000_000, "Mbps"), (1_000, "kbps")] {
        if bps >= div && bps.is_multiple_of(div) {
            return format!("{}{unit}", bps / div);
        }
    }
    format!("{bps}bps")
}

/// Human-readable rate with up to six decimals: `2.4576 Gb/s`.
pub fn format_rate(bps: f64) -> String {
    let (div, unit) = [(1e12, "Tb/s"), (1e9, "Gb/s"), (1e6, "Mb/s"), (1e3, "kb/s")]
        .into_iter()
        .find(|&(d, _)| bps.abs() >= d)
        .unwrap_or((1.0, "b/s"));
    format!("{} {unit}", trim6(bps / div))
}

/// Frequency in hertz: `20MHz`, `1GHz`.
pub fn parse_frequency(text: &str) -> Result<u64, UnitError> {
    const UNITS: &[(&str, u128)] = &[
        ("", 1),
        ("Hz", 1),
        ("kHz", 1_000),
        ("MHz", 1_000_000),
        ("GHz", 1_000_000_000),
    ];
    let r = scaled(text, "frequency", UNITS)?;
    to_integer(r, "frequency", text)
}

/// Decimal (SI) byte volumes: `1EB` = 10^18 bytes.
pub fn parse_bytes(text: &str) -> Result<f64, UnitError> {
    const UNITS: &[(&str, u128)] = &[
        ("", 1),
        ("B", 1),
        ("kB", 1_000),
        ("KB", 1_000),
        ("MB", 1_000_000),
        ("GB", 1_000_000_000),
        ("TB", 1_000_000_000_000),
        ("PB", 1_000_000_000_000_000),
        ("EB", 1_000_000_000_000_000_000),
        ("ZB", 1_000_000_000_000_000_000_000),
    ];
    let r = scaled(text, "byte volume", UNITS)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

pub fn format_bytes(bytes: f64) -> String {
    let (div, unit) = [
        (1e21, "ZB"),
        (1e18, "EB"),
        (1e15, "PB"),
        (1e12, "TB"),
        (1e9, "GB"),
        (1e6, "MB"),
        (1e3, "kB"),
    ]
    .into_iter()
    .find(|&(d, _)| bytes.abs() >= d)
    .unwrap_or((1.0, "B"));
    format!("{} {unit}", trim6(bytes / div))
}

fn trim6(x: f64) -> String {
    let rounded = (x * 1e6).round() / 1e6;
    format!("{rounded}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times() {
        assert_eq!(parse_time("5ms").unwrap(), SimTime::from_millis(5));
        assert_eq!(parse_time("1.5s").unwrap(), SimTime::from_micros(1_500_000));
        assert_eq!(parse_time("250us").unwrap(), SimTime::from_micros(250));
        assert_eq!(parse_time("0").unwrap(), SimTime::ZERO);
        assert!(parse_time("1.5us").is_err());
        assert!(parse_time("5min").is_err());
        assert_eq!(format_time(SimTime::from_millis(1500)), "1500ms");
        assert_eq!(format_time(SimTime::from_secs(2)), "2s");
    }

    #[test]
    fn rates_and_frequencies() {
        assert_eq!(parse_rate("10Mbps").unwrap(), 10_000_000);
        assert_eq!(parse_rate("2.5Gb/s").unwrap(), 2_500_000_000);
        assert_eq!(parse_rate("64k").unwrap(), 64_000);
        assert_eq!(parse_frequency("20MHz").unwrap(), 20_000_000);
        assert_eq!(parse_frequency("1GHz").unwrap(), 1_000_000_000);
        assert_eq!(format_rate(2_457_600_000.0), "2.4576 Gb/s");
        assert_eq!(format_rate_compact(10_000_000), "10Mbps");
    }

    #[test]
    fn byte_volumes_are_decimal() {
        assert_eq!(parse_bytes("1EB").unwrap(), 1e18);
        assert_eq!(parse_bytes("1ZB").unwrap(), 1e21);
        assert_eq!(parse_bytes("200GB").unwrap(), 2e11);
        assert_eq!(format_bytes(1e21), "1 ZB");
    }

    #[test]
    fn decimals_are_exact() {
        assert_eq!(parse_decimal("1.536"), Some(Ratio::new(192, 125)));
        assert_eq!(parse_decimal("16/15"), Some(Ratio::new(16, 15)));
        assert_eq!(parse_decimal("5e9"), Some(Ratio::from_integer(5_000_000_000)));
        assert_eq!(parse_decimal("x"), None);
    }
}
