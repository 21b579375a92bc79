//! Binning raw events onto a regular time grid.

use super::records::{RawSnapshotRecord, TripRecord};
use super::{DataError, Result};
use crate::graph::Station;
use crate::tensor::Tensor;
use chrono::{DateTime, TimeDelta, Utc};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

/// Station ids order numerically when both are integers, lexically otherwise.
pub fn compare_station_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Wrapper giving station ids the ordering of [`compare_station_ids`].
#[derive(Debug, Clone, PartialEq, Eq)]
struct StationKey(String);

impl Ord for StationKey {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_station_ids(&self.0, &other.0)
    }
}

impl PartialOrd for StationKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn bin_seconds(bin: TimeDelta) -> Result<i64> {
    let s = bin.num_seconds();
    if s <= 0 || bin.subsec_nanos() != 0 || 3600 % s != 0 {
        return Err(DataError::InvalidArgument(format!(
            "bin of {s} s does not divide an hour evenly"
        )));
    }
    Ok(s)
}

fn floor_to_bin(t: DateTime<Utc>, secs: i64) -> i64 {
    t.timestamp().div_euclid(secs) * secs
}

fn grid(start: i64, len: usize, secs: i64) -> Vec<DateTime<Utc>> {
    (0..len)
        .map(|i| DateTime::from_timestamp(start + i as i64 * secs, 0).expect("timestamp in range"))
        .collect()
}

/// Mean availability per station on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Availability {
    pub timestamps: Vec<DateTime<Utc>>,
    pub stations: Vec<Station>,
    /// `T×N`.
    pub values: Tensor,
}

/// Stations whose readings cover less than this share of bins are dropped.
pub const MIN_BIN_COVERAGE: f64 = 0.8;

/// Averages snapshot readings into `bin`-wide bins aligned to the hour.
///
/// Bins without readings are forward-filled (leading gaps back-filled).
/// A station with more than 20% empty bins is excluded with a warning.
/// Stations come out in id order.
pub fn aggregate_availability(records: &[RawSnapshotRecord], bin: TimeDelta) -> Result<Availability> {
    let secs = bin_seconds(bin)?;
    let (first, last) = match (
        records.iter().map(|r| r.timestamp).min(),
        records.iter().map(|r| r.timestamp).max(),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(DataError::Empty("no snapshot records".into())),
    };
    let start = floor_to_bin(first, secs);
    let t_len = ((floor_to_bin(last, secs) - start) / secs) as usize + 1;

    struct Acc {
        sums: Vec<u64>,
        counts: Vec<u32>,
        coord: (DateTime<Utc>, f64, f64),
    }
    let mut per_station: BTreeMap<StationKey, Acc> = BTreeMap::new();
    for r in records {
        let acc = per_station.entry(StationKey(r.station_id.clone())).or_insert_with(|| Acc {
            sums: vec![0; t_len],
            counts: vec![0; t_len],
            coord: (r.timestamp, r.latitude, r.longitude),
        });
        let k = ((floor_to_bin(r.timestamp, secs) - start) / secs) as usize;
        acc.sums[k] += r.available_bikes as u64;
        acc.counts[k] += 1;
        // coordinates from the earliest reading, so record order is irrelevant
        let cand = (r.timestamp, r.latitude, r.longitude);
        let better = cand.0 < acc.coord.0
            || (cand.0 == acc.coord.0 && (cand.1, cand.2).partial_cmp(&(acc.coord.1, acc.coord.2)) == Some(Ordering::Less));
        if better {
            acc.coord = cand;
        }
    }

    let mut stations = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (StationKey(id), acc) in per_station {
        let filled = acc.counts.iter().filter(|&&c| c > 0).count();
        if (filled as f64) < MIN_BIN_COVERAGE * t_len as f64 {
            log::warn!(
                "station {id}: readings in {filled} of {t_len} bins (< {:.0}%), excluded",
                MIN_BIN_COVERAGE * 100.0
            );
            continue;
        }
        let mut col: Vec<Option<f64>> = acc
            .sums
            .iter()
            .zip(&acc.counts)
            .map(|(&s, &c)| (c > 0).then(|| s as f64 / c as f64))
            .collect();
        let first_value = col.iter().flatten().next().copied().expect("at least one filled bin");
        let mut prev = first_value;
        for v in col.iter_mut() {
            match v {
                Some(x) => prev = *x,
                None => *v = Some(prev),
            }
        }
        columns.push(col.into_iter().map(|v| v.expect("filled")).collect());
        stations.push(Station {
            id,
            latitude: acc.coord.1,
            longitude: acc.coord.2,
        });
    }
    if stations.is_empty() {
        return Err(DataError::Empty("every station was excluded for missing data".into()));
    }
    let n = stations.len();
    let values = Tensor::from_fn(vec![t_len, n], |k| columns[k % n][k / n]);
    Ok(Availability {
        timestamps: grid(start, t_len, secs),
        stations,
        values,
    })
}

/// Pick-up and drop-off counts per station on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Demand {
    pub timestamps: Vec<DateTime<Utc>>,
    pub station_ids: Vec<String>,
    /// `T×N×2`: channel 0 pick-ups, channel 1 drop-offs.
    pub values: Tensor,
}

/// Keeps the `top_k` stations with the most orders (pick-ups plus
/// drop-offs, ties by id) and counts pick-ups and drop-offs per bin among
/// trips whose both endpoints were kept.
///
/// With `range = Some((start, end))` the grid spans `[start, end)` and
/// events outside it are ignored; otherwise it spans every counted event.
pub fn trips_to_demand(
    trips: &[TripRecord],
    bin: TimeDelta,
    top_k: usize,
    range: Option<(DateTime<Utc>, DateTime<Utc>)>,
) -> Result<Demand> {
    let secs = bin_seconds(bin)?;
    let mut orders: HashMap<&str, u64> = HashMap::new();
    for t in trips {
        *orders.entry(&t.pickup_station).or_default() += 1;
        *orders.entry(&t.dropoff_station).or_default() += 1;
    }
    if top_k == 0 || top_k > orders.len() {
        return Err(DataError::InvalidArgument(format!(
            "top_k = {top_k} but trips mention {} stations",
            orders.len()
        )));
    }
    let mut ranked: Vec<(&str, u64)> = orders.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| compare_station_ids(a.0, b.0)));
    let mut kept: Vec<String> = ranked[..top_k].iter().map(|(id, _)| id.to_string()).collect();
    kept.sort_by(|a, b| compare_station_ids(a, b));
    let column: HashMap<&str, usize> = kept.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let counted: Vec<(usize, usize, &TripRecord)> = trips
        .iter()
        .filter_map(|t| Some((*column.get(t.pickup_station.as_str())?, *column.get(t.dropoff_station.as_str())?, t)))
        .collect();
    let (start, t_len) = match range {
        Some((a, b)) => {
            if b <= a {
                return Err(DataError::InvalidArgument("empty demand time range".into()));
            }
            let s = floor_to_bin(a, secs);
            (s, ((b.timestamp() - s + secs - 1) / secs) as usize)
        }
        None => {
            let first = counted.iter().map(|c| c.2.pickup_time).min();
            let last = counted.iter().map(|c| c.2.dropoff_time).max();
            match (first, last) {
                (Some(a), Some(b)) => {
                    let s = floor_to_bin(a, secs);
                    (s, ((floor_to_bin(b, secs) - s) / secs) as usize + 1)
                }
                _ => return Err(DataError::Empty("no trips between kept stations".into())),
            }
        }
    };
    let n = kept.len();
    let mut values = Tensor::zeros(vec![t_len, n, 2]);
    let end = start + t_len as i64 * secs;
    let data = values.data_mut();
    for (pu, doff, t) in counted {
        for (station, time, ch) in [(pu, t.pickup_time, 0), (doff, t.dropoff_time, 1)] {
            let ts = time.timestamp();
            if ts < start || ts >= end {
                continue;
            }
            let k = ((floor_to_bin(time, secs) - start) / secs) as usize;
            data[(k * n + station) * 2 + ch] += 1.0;
        }
    }
    Ok(Demand {
        timestamps: grid(start, t_len, secs),
        station_ids: kept,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(h: u32, m: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 7, 1, h, m, 0).unwrap()
    }

    fn snap(t: DateTime<Utc>, id: &str, bikes: u32) -> RawSnapshotRecord {
        RawSnapshotRecord {
            timestamp: t,
            station_id: id.into(),
            available_bikes: bikes,
            latitude: 53.3,
            longitude: -6.2,
        }
    }

    fn trip(pu: &str, doff: &str, t0: DateTime<Utc>, t1: DateTime<Utc>) -> TripRecord {
        TripRecord {
            pickup_station: pu.into(),
            dropoff_station: doff.into(),
            pickup_time: t0,
            dropoff_time: t1,
        }
    }

    #[test]
    fn bin_mean_and_forward_fill() {
        let mut recs = vec![
            snap(at(0, 0), "1", 10),
            snap(at(0, 5), "1", 11),
            snap(at(0, 10), "1", 12),
            snap(at(0, 15), "1", 7),
        ];
        for k in 3..10 {
            recs.push(snap(at(0, 0) + TimeDelta::minutes(15 * k), "1", 5));
        }
        // bin 2 (00:30) left empty: 1 of 10 missing keeps coverage at 90%
        let a = aggregate_availability(&recs, TimeDelta::minutes(15)).unwrap();
        assert_eq!(a.values.shape(), &[10, 1]);
        assert_eq!(a.values.at(&[0, 0]), 11.0);
        assert_eq!(a.values.at(&[1, 0]), 7.0);
        assert_eq!(a.values.at(&[2, 0]), 7.0);
        assert_eq!(a.values.at(&[3, 0]), 5.0);
    }

    #[test]
    fn sparse_station_excluded_and_leading_gap_backfilled() {
        let mut recs = Vec::new();
        for k in 0..10 {
            recs.push(snap(at(1, 0) + TimeDelta::minutes(15 * k), "2", 4));
        }
        recs.push(snap(at(1, 0), "9", 1));
        recs.push(snap(at(1, 30), "10", 6));
        for k in 3..10 {
            recs.push(snap(at(1, 0) + TimeDelta::minutes(15 * k), "10", 3));
        }
        let a = aggregate_availability(&recs, TimeDelta::minutes(15)).unwrap();
        let ids: Vec<_> = a.stations.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["2", "10"]);
        assert_eq!(a.values.at(&[0, 1]), 6.0);
        assert_eq!(a.values.at(&[1, 1]), 6.0);
    }

    #[test]
    fn rejects_uneven_bin() {
        assert!(aggregate_availability(&[snap(at(0, 0), "1", 1)], TimeDelta::minutes(7)).is_err());
    }

    #[test]
    fn demand_counts() {
        let trips = vec![
            trip("a", "b", at(0, 1), at(0, 10)),
            trip("a", "b", at(0, 2), at(0, 40)),
            trip("a", "a", at(0, 3), at(0, 20)),
            trip("b", "a", at(0, 31), at(0, 35)),
        ];
        let d = trips_to_demand(&trips, TimeDelta::minutes(30), 2, None).unwrap();
        assert_eq!(d.station_ids, ["a", "b"]);
        assert_eq!(d.values.shape(), &[2, 2, 2]);
        assert_eq!((d.values.at(&[0, 0, 0]), d.values.at(&[0, 0, 1])), (3.0, 1.0));
        assert_eq!(d.values.at(&[1, 0, 0]), 0.0);
        assert_eq!(d.values.sum(), 8.0);
    }

    #[test]
    fn demand_ranking_and_ties() {
        let trips = vec![
            trip("3", "3", at(0, 0), at(0, 1)),
            trip("20", "20", at(0, 0), at(0, 1)),
            trip("1", "5", at(0, 0), at(0, 1)),
        ];
        // each of 3 and 20 has 2 orders; 1 and 5 have 1; tie between 1 and 5 goes to 1
        let d = trips_to_demand(&trips, TimeDelta::minutes(30), 3, None).unwrap();
        assert_eq!(d.station_ids, ["1", "3", "20"]);
        // the 1 -> 5 trip leaves the kept set
        assert_eq!(d.values.sum(), 4.0);
        assert!(trips_to_demand(&trips, TimeDelta::minutes(30), 5, None).is_err());
    }

    #[test]
    fn station_id_order() {
        let mut ids = vec!["10", "9", "b", "a", "100"];
        ids.sort_by(|a, b| compare_station_ids(a, b));
        assert_eq!(ids, ["9", "10", "100", "a", "b"]);
    }
}
