use std::f64::consts::TAU;

pub const TEMPORAL_NAMES: [&str; 7] = [
    "hour_sin",
    "hour_cos",
    "dow_sin",
    "dow_cos",
    "month_sin",
    "month_cos",
    "day_index",
];

const DAY: i64 = 86_400;

/// (year, month 1-12, day) of a day count since 1970-01-01.
pub fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

/// Cyclic encodings of time of day, weekday (Monday = 0) and month, plus the
/// raw day index since the epoch. All times are UTC.
pub fn temporal_features(timestamp: i64) -> [f64; 7] {
    let days = timestamp.div_euclid(DAY);
    let secs = timestamp.rem_euclid(DAY);
    let hour_phase = TAU * secs as f64 / DAY as f64;
    // 1970-01-01 was a Thursday.
    let dow = (days + 3).rem_euclid(7);
    let dow_phase = TAU * dow as f64 / 7.0;
    let (_, month, _) = civil_from_days(days);
    let month_phase = TAU * f64::from(month - 1) / 12.0;
    [
        hour_phase.sin(),
        hour_phase.cos(),
        dow_phase.sin(),
        dow_phase.cos(),
        month_phase.sin(),
        month_phase.cos(),
        days as f64,
    ]
}
