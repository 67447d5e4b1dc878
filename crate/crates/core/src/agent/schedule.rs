//! Wall-clock crawl schedule: cycles fire at fixed local hours.

use chrono::{DateTime, Duration, LocalResult, NaiveDateTime, NaiveTime, TimeZone, Timelike, Utc};

/// Local hours at which scheduled cycles fire.
pub const FIRE_HOURS: [u32; 6] = [0, 4, 8, 12, 16, 20];

/// Delay between process start and the startup cycle.
pub const STARTUP_DELAY: Duration = Duration::seconds(30);

/// Smallest local time strictly after `now` on one of [`FIRE_HOURS`], on the hour.
pub fn next_fire_time(now: NaiveDateTime) -> NaiveDateTime {
    let date = now.date();
    for &h in &FIRE_HOURS {
        let t = date.and_time(NaiveTime::from_hms_opt(h, 0, 0).expect("valid hour"));
        if t > now {
            return t;
        }
    }
    (date + Duration::days(1)).and_time(NaiveTime::MIN)
}

/// Next scheduled instant strictly after `after`, for an agent whose fires
/// are delayed by `stagger` from the wall-clock hour. A fire hour skipped
/// by a DST jump is dropped; a repeated one fires once, at its first occurrence.
pub fn next_fire_instant<Tz: TimeZone>(after: DateTime<Utc>, tz: &Tz, stagger: Duration) -> DateTime<Utc> {
    // Start a little early so a fire inside a repeated hour is not missed.
    let mut local = (after - stagger).with_timezone(tz).naive_local() - Duration::hours(3);
    loop {
        local = next_fire_time(local);
        let instant = match tz.from_local_datetime(&local) {
            LocalResult::Single(t) => t,
            LocalResult::Ambiguous(first, _) => first,
            LocalResult::None => continue,
        };
        let fire = instant.with_timezone(&Utc) + stagger;
        if fire > after {
            return fire;
        }
    }
}

/// Whether `t` falls on a fire hour of the local clock.
pub fn is_fire_time(t: NaiveDateTime) -> bool {
    FIRE_HOURS.contains(&t.hour()) && t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

/// UTC offset of `tz` at `at`, in minutes.
pub fn offset_minutes<Tz: TimeZone>(tz: &Tz, at: DateTime<Utc>) -> i32 {
    use chrono::Offset;
    tz.offset_from_utc_datetime(&at.naive_utc()).fix().local_minus_utc() / 60
}
