//! Raw CSV records: bike-availability snapshots, trips and hourly weather.

use super::{DataError, Result};
use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use std::collections::HashMap;
use std::io::Read;

#[derive(Debug, Clone, PartialEq)]
pub struct RawSnapshotRecord {
    pub timestamp: DateTime<Utc>,
    pub station_id: String,
    pub available_bikes: u32,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub pickup_station: String,
    pub dropoff_station: String,
    pub pickup_time: DateTime<Utc>,
    pub dropoff_time: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherRecord {
    pub timestamp: DateTime<Utc>,
    pub condition: Option<String>,
    pub temperature: Option<f64>,
    pub wind_speed: Option<f64>,
    pub cloud_cover: Option<f64>,
    pub humidity: Option<f64>,
}

/// Trips plus whatever station coordinates the trip file carried.
#[derive(Debug, Clone, Default)]
pub struct TripTable {
    pub trips: Vec<TripRecord>,
    pub coordinates: HashMap<String, (f64, f64)>,
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
    "%Y/%m/%d %H:%M:%S",
    "%d/%m/%Y %H:%M:%S",
    "%d/%m/%Y %H:%M",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
];

/// Parses a timestamp as UTC. Offsets in RFC 3339 strings are honored;
/// naive strings are taken to be UTC already.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim().trim_matches('"');
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    let s = s.strip_suffix(" UTC").or_else(|| s.strip_suffix('Z')).unwrap_or(s);
    DATETIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
        .map(|n| n.and_utc())
}

fn normalize_header(h: &str) -> String {
    h.trim()
        .trim_start_matches('\u{feff}')
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

/// Column lookup by normalized header name with aliases.
struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (normalize_header(h), i))
            .collect();
        Self { index }
    }

    fn find(&self, aliases: &[&str]) -> Option<usize> {
        aliases.iter().find_map(|a| self.index.get(*a).copied())
    }

    fn require(&self, aliases: &[&str], file: &str) -> Result<usize> {
        self.find(aliases).ok_or_else(|| {
            DataError::Schema(format!("{file}: missing required column (one of: {})", aliases.join(", ")))
        })
    }
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn str(&self, col: usize) -> &str {
        self.rec.get(col).unwrap_or("").trim()
    }

    fn time(&self, col: usize) -> Result<DateTime<Utc>> {
        let v = self.str(col);
        parse_timestamp(v).ok_or_else(|| DataError::Row {
            line: self.line,
            msg: format!("unparseable timestamp `{v}`"),
        })
    }

    fn num(&self, col: usize, what: &str) -> Result<f64> {
        let v = self.str(col);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| DataError::Row {
                line: self.line,
                msg: format!("invalid {what} `{v}`"),
            })
    }

    fn opt_num(&self, col: Option<usize>, what: &str) -> Result<Option<f64>> {
        match col {
            Some(c) if !self.str(c).is_empty() => self.num(c, what).map(Some),
            _ => Ok(None),
        }
    }
}

fn open<R: Read>(input: R, file: &str) -> Result<(Columns, csv::Reader<R>)> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let headers = rd.headers().map_err(|e| DataError::Schema(format!("{file}: {e}")))?;
    Ok((Columns::new(headers), rd))
}

fn each_row<R: Read>(rd: &mut csv::Reader<R>, mut f: impl FnMut(Row<'_>) -> Result<()>) -> Result<()> {
    let mut rec = csv::StringRecord::new();
    loop {
        match rd.read_record(&mut rec) {
            Ok(false) => return Ok(()),
            Ok(true) => {
                if rec.iter().all(|f| f.is_empty()) {
                    continue;
                }
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                f(Row { rec: &rec, line })?;
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(DataError::Row {
                    line,
                    msg: e.to_string(),
                });
            }
        }
    }
}

const TIMESTAMP: &[&str] = &["timestamp", "time", "last_update", "datetime", "date_time"];
const STATION_ID: &[&str] = &["station_id", "stationid", "number", "id"];
const AVAILABLE_BIKES: &[&str] = &["available_bikes", "availablebikes", "bikes_available", "num_bikes_available"];
const LATITUDE: &[&str] = &["latitude", "lat"];
const LONGITUDE: &[&str] = &["longitude", "lon", "long", "lng"];

/// Reads availability snapshots. Required columns: timestamp, station id,
/// available bikes, latitude, longitude (common aliases accepted). Errors
/// carry the 1-based line number of the offending row.
pub fn read_snapshots(input: impl Read) -> Result<Vec<RawSnapshotRecord>> {
    let (cols, mut rd) = open(input, "snapshots")?;
    let idx = [
        cols.require(TIMESTAMP, "snapshots")?,
        cols.require(STATION_ID, "snapshots")?,
        cols.require(AVAILABLE_BIKES, "snapshots")?,
        cols.require(LATITUDE, "snapshots")?,
        cols.require(LONGITUDE, "snapshots")?,
    ];
    let mut out = Vec::new();
    each_row(&mut rd, |row| {
        let bikes = row.num(idx[2], "available bikes")?;
        if bikes < 0.0 || bikes.fract() != 0.0 {
            return Err(DataError::Row {
                line: row.line,
                msg: format!("available bikes must be a non-negative integer, got {bikes}"),
            });
        }
        let id = row.str(idx[1]);
        if id.is_empty() {
            return Err(DataError::Row {
                line: row.line,
                msg: "empty station id".into(),
            });
        }
        out.push(RawSnapshotRecord {
            timestamp: row.time(idx[0])?,
            station_id: id.to_string(),
            available_bikes: bikes as u32,
            latitude: row.num(idx[3], "latitude")?,
            longitude: row.num(idx[4], "longitude")?,
        });
        Ok(())
    })?;
    Ok(out)
}

const PICKUP_STATION: &[&str] = &["pickup_station", "start_station_id", "start_station", "from_station_id"];
const DROPOFF_STATION: &[&str] = &["dropoff_station", "end_station_id", "end_station", "to_station_id"];
const PICKUP_TIME: &[&str] = &["pickup_time", "starttime", "start_time", "started_at"];
const DROPOFF_TIME: &[&str] = &["dropoff_time", "stoptime", "stop_time", "end_time", "ended_at"];
const PICKUP_LAT: &[&str] = &["pickup_latitude", "start_station_latitude", "start_lat"];
const PICKUP_LON: &[&str] = &["pickup_longitude", "start_station_longitude", "start_lng", "start_lon"];
const DROPOFF_LAT: &[&str] = &["dropoff_latitude", "end_station_latitude", "end_lat"];
const DROPOFF_LON: &[&str] = &["dropoff_longitude", "end_station_longitude", "end_lng", "end_lon"];

/// Reads trip records. Required: pick-up/drop-off station and time; station
/// coordinate columns (Citi Bike naming) are picked up when present.
pub fn read_trips(input: impl Read) -> Result<TripTable> {
    let (cols, mut rd) = open(input, "trips")?;
    let idx = [
        cols.require(PICKUP_STATION, "trips")?,
        cols.require(DROPOFF_STATION, "trips")?,
        cols.require(PICKUP_TIME, "trips")?,
        cols.require(DROPOFF_TIME, "trips")?,
    ];
    let coord_cols = match (
        cols.find(PICKUP_LAT),
        cols.find(PICKUP_LON),
        cols.find(DROPOFF_LAT),
        cols.find(DROPOFF_LON),
    ) {
        (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
        _ => None,
    };
    let mut table = TripTable::default();
    each_row(&mut rd, |row| {
        let (pu, doff) = (row.str(idx[0]), row.str(idx[1]));
        if pu.is_empty() || doff.is_empty() {
            return Err(DataError::Row {
                line: row.line,
                msg: "empty station id".into(),
            });
        }
        let trip = TripRecord {
            pickup_station: pu.to_string(),
            dropoff_station: doff.to_string(),
            pickup_time: row.time(idx[2])?,
            dropoff_time: row.time(idx[3])?,
        };
        if trip.dropoff_time < trip.pickup_time {
            return Err(DataError::Row {
                line: row.line,
                msg: "drop-off time precedes pick-up time".into(),
            });
        }
        if let Some(c) = coord_cols {
            for (id, la, lo) in [(pu, c[0], c[1]), (doff, c[2], c[3])] {
                if !table.coordinates.contains_key(id) {
                    if let (Ok(lat), Ok(lon)) = (row.num(la, "latitude"), row.num(lo, "longitude")) {
                        table.coordinates.insert(id.to_string(), (lat, lon));
                    }
                }
            }
        }
        table.trips.push(trip);
        Ok(())
    })?;
    Ok(table)
}

/// Reads a station list (id, latitude, longitude).
pub fn read_stations(input: impl Read) -> Result<HashMap<String, (f64, f64)>> {
    let (cols, mut rd) = open(input, "stations")?;
    let idx = [
        cols.require(STATION_ID, "stations")?,
        cols.require(LATITUDE, "stations")?,
        cols.require(LONGITUDE, "stations")?,
    ];
    let mut out = HashMap::new();
    each_row(&mut rd, |row| {
        out.insert(
            row.str(idx[0]).to_string(),
            (row.num(idx[1], "latitude")?, row.num(idx[2], "longitude")?),
        );
        Ok(())
    })?;
    Ok(out)
}

const CONDITION: &[&str] = &["condition", "conditions", "weather", "description", "weather_description"];
const TEMPERATURE: &[&str] = &["temperature", "temp", "temperature_c"];
const WIND_SPEED: &[&str] = &["wind_speed", "windspeed", "wind"];
const CLOUD_COVER: &[&str] = &["cloud_cover", "cloudcover", "clouds"];
const HUMIDITY: &[&str] = &["humidity", "relative_humidity"];

/// Which optional weather columns a file provided.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WeatherColumns {
    pub condition: bool,
    pub temperature: bool,
    pub wind_speed: bool,
    pub cloud_cover: bool,
    pub humidity: bool,
}

/// Hourly (or finer) weather observations sorted by time.
#[derive(Debug, Clone, Default)]
pub struct WeatherTable {
    pub records: Vec<WeatherRecord>,
    pub columns: WeatherColumns,
}

impl WeatherTable {
    pub fn new(mut records: Vec<WeatherRecord>, columns: WeatherColumns) -> Self {
        records.sort_by_key(|r| r.timestamp);
        Self { records, columns }
    }

    /// The record closest in time to `t` (earlier record on ties).
    pub fn nearest(&self, t: DateTime<Utc>) -> Option<&WeatherRecord> {
        let i = self.records.partition_point(|r| r.timestamp < t);
        let after = self.records.get(i);
        let before = i.checked_sub(1).and_then(|j| self.records.get(j));
        match (before, after) {
            (Some(b), Some(a)) => {
                if (t - b.timestamp) <= (a.timestamp - t) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (b, a) => b.or(a),
        }
    }
}

/// Reads weather observations: a timestamp column plus any of condition,
/// temperature, wind speed, cloud cover and humidity.
pub fn read_weather(input: impl Read) -> Result<WeatherTable> {
    let (cols, mut rd) = open(input, "weather")?;
    let ts = cols.require(TIMESTAMP, "weather")?;
    let opt = [
        cols.find(CONDITION),
        cols.find(TEMPERATURE),
        cols.find(WIND_SPEED),
        cols.find(CLOUD_COVER),
        cols.find(HUMIDITY),
    ];
    let mut records = Vec::new();
    each_row(&mut rd, |row| {
        records.push(WeatherRecord {
            timestamp: row.time(ts)?,
            condition: opt[0].map(|c| row.str(c).to_string()).filter(|s| !s.is_empty()),
            temperature: row.opt_num(opt[1], "temperature")?,
            wind_speed: row.opt_num(opt[2], "wind speed")?,
            cloud_cover: row.opt_num(opt[3], "cloud cover")?,
            humidity: row.opt_num(opt[4], "humidity")?,
        });
        Ok(())
    })?;
    let columns = WeatherColumns {
        condition: opt[0].is_some(),
        temperature: opt[1].is_some(),
        wind_speed: opt[2].is_some(),
        cloud_cover: opt[3].is_some(),
        humidity: opt[4].is_some(),
    };
    Ok(WeatherTable::new(records, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn timestamp_formats() {
        let want = Utc.with_ymd_and_hms(2020, 7, 1, 8, 15, 0).unwrap();
        for s in [
            "2020-07-01 08:15:00",
            "2020-07-01T08:15:00",
            "2020-07-01T08:15:00Z",
            "2020-07-01T09:15:00+01:00",
            "2020-07-01 08:15",
            "2020-07-01 08:15:00.000",
            "01/07/2020 08:15",
        ] {
            assert_eq!(parse_timestamp(s), Some(want), "{s}");
        }
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn snapshot_aliases_and_errors() {
        let csv = "STATION ID,TIME,AVAILABLE BIKES,LATITUDE,LONGITUDE\n2,2020-07-01 00:00:02,7,53.35,-6.26\n";
        let r = read_snapshots(csv.as_bytes()).unwrap();
        assert_eq!(r[0].station_id, "2");
        assert_eq!(r[0].available_bikes, 7);
        let bad = "station_id,timestamp,available_bikes,lat,lon\n2,2020-07-01 00:00,1,53,-6\n3,not-a-time,1,53,-6\n";
        match read_snapshots(bad.as_bytes()) {
            Err(DataError::Row { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("not-a-time"));
            }
            other => panic!("{other:?}"),
        }
        let missing = "station_id,timestamp,lat,lon\n";
        assert!(matches!(read_snapshots(missing.as_bytes()), Err(DataError::Schema(_))));
    }

    #[test]
    fn citibike_trip_columns() {
        let csv = "tripduration,starttime,stoptime,start station id,start station name,start station latitude,start station longitude,end station id,end station name,end station latitude,end station longitude\n\
                   300,2019-07-01 00:00:00.1310,2019-07-01 00:05:00.0000,72,A,40.76,-73.99,79,B,40.71,-74.00\n";
        let t = read_trips(csv.as_bytes()).unwrap();
        assert_eq!(t.trips.len(), 1);
        assert_eq!(t.trips[0].pickup_station, "72");
        assert_eq!(t.coordinates["79"], (40.71, -74.00));
        let back = "pickup_station,dropoff_station,pickup_time,dropoff_time\n1,2,2019-07-01 01:00,2019-07-01 00:00\n";
        assert!(read_trips(back.as_bytes()).is_err());
    }

    #[test]
    fn weather_nearest() {
        let csv = "datetime,conditions,temp,windspeed,cloudcover,humidity\n\
                   2020-07-01T00:00:00,Clear,14,10,0,80\n\
                   2020-07-01T01:00:00,\"Rain, Overcast\",13,,100,90\n";
        let w = read_weather(csv.as_bytes()).unwrap();
        assert!(w.columns.humidity);
        assert_eq!(w.records[1].wind_speed, None);
        let t = Utc.with_ymd_and_hms(2020, 7, 1, 0, 45, 0).unwrap();
        assert_eq!(w.nearest(t).unwrap().temperature, Some(13.0));
        let t = Utc.with_ymd_and_hms(2020, 7, 1, 0, 30, 0).unwrap();
        assert_eq!(w.nearest(t).unwrap().temperature, Some(14.0));
    }
}
