//! Forecast issue times: full hours inside the daylight window.

use chrono::{DateTime, Duration, DurationRound, Utc};

use pvcast::clearsky::daylight_window;

/// Why an issue time is not run, or `None` when it is allowed.
pub fn issue_rejection(lat: f64, lon: f64, t: DateTime<Utc>, after_sunrise_h: f64, before_sunset_h: f64) -> Option<String> {
    if t.duration_trunc(Duration::hours(1)).ok() != Some(t) {
        return Some("not a full hour".into());
    }
    let Ok((sunrise, sunset)) = daylight_window(lat, lon, t.date_naive()) else {
        return Some("no sunrise or sunset on this date".into());
    };
    let first = sunrise + Duration::seconds((after_sunrise_h * 3600.0).round() as i64);
    let last = sunset - Duration::seconds((before_sunset_h * 3600.0).round() as i64);
    if t < first || t > last {
        return Some(format!(
            "outside daylight window [{}, {}]",
            first.format("%H:%M"),
            last.format("%H:%M")
        ));
    }
    None
}

/// Every full hour from the first to the last instant.
pub fn full_hours(first: DateTime<Utc>, last: DateTime<Utc>) -> Vec<DateTime<Utc>> {
    let Ok(mut t) = first.duration_trunc(Duration::hours(1)) else {
        return Vec::new();
    };
    if t < first {
        t += Duration::hours(1);
    }
    let mut out = Vec::new();
    while t <= last {
        out.push(t);
        t += Duration::hours(1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn daylight_rule() {
        let at = |h, m| Utc.with_ymd_and_hms(2021, 6, 21, h, m, 0).unwrap();
        // Around 46.5 N, 8.5 E the sun rises near 03:30 UTC and sets near 19:25 UTC.
        assert!(issue_rejection(46.5, 8.5, at(10, 0), 1.0, 3.0).is_none());
        assert!(issue_rejection(46.5, 8.5, at(4, 0), 1.0, 3.0).is_some());
        assert!(issue_rejection(46.5, 8.5, at(17, 0), 1.0, 3.0).is_some());
        assert!(issue_rejection(46.5, 8.5, at(10, 15), 1.0, 3.0).is_some());
        assert_eq!(full_hours(at(9, 10), at(12, 0)), vec![at(10, 0), at(11, 0), at(12, 0)]);
    }
}
