//! Per-time-step feature encoding.

use super::records::WeatherTable;
use super::{DataError, Result};
use crate::tensor::Tensor;
use chrono::{DateTime, Datelike, TimeDelta, Timelike, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// One input feature group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    /// Available bikes.
    #[serde(rename = "AB")]
    AvailableBikes,
    /// Pick-up and drop-off counts.
    #[serde(rename = "PD")]
    Demand,
    /// Minutes since midnight / 1440.
    #[serde(rename = "TD")]
    TimeOfDay,
    /// Weekday index (Monday = 0) / 6.
    #[serde(rename = "WD")]
    Weekday,
    /// Five-way one-hot weather condition.
    #[serde(rename = "WCD")]
    WeatherCondition,
    #[serde(rename = "T")]
    Temperature,
    #[serde(rename = "WS")]
    WindSpeed,
    #[serde(rename = "CC")]
    CloudCover,
    #[serde(rename = "H")]
    Humidity,
}

pub const WEATHER_CATEGORIES: [&str; 5] = ["clear", "cloudy", "rain", "fog", "other"];

impl Feature {
    pub const ALL: [Feature; 9] = [
        Self::AvailableBikes,
        Self::Demand,
        Self::TimeOfDay,
        Self::Weekday,
        Self::WeatherCondition,
        Self::Temperature,
        Self::WindSpeed,
        Self::CloudCover,
        Self::Humidity,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Self::AvailableBikes => "AB",
            Self::Demand => "PD",
            Self::TimeOfDay => "TD",
            Self::Weekday => "WD",
            Self::WeatherCondition => "WCD",
            Self::Temperature => "T",
            Self::WindSpeed => "WS",
            Self::CloudCover => "CC",
            Self::Humidity => "H",
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            Self::Demand => 2,
            Self::WeatherCondition => WEATHER_CATEGORIES.len(),
            _ => 1,
        }
    }

    /// Station-level signal rather than a covariate shared by all stations.
    pub fn is_base(&self) -> bool {
        matches!(self, Self::AvailableBikes | Self::Demand)
    }

    pub fn column_names(&self) -> Vec<String> {
        match self {
            Self::Demand => vec!["pickups".into(), "dropoffs".into()],
            Self::WeatherCondition => WEATHER_CATEGORIES.iter().map(|c| format!("WCD:{c}")).collect(),
            f => vec![f.code().into()],
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Feature {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DataError::InvalidArgument(format!("unknown feature `{s}`")))
    }
}

/// An ordered feature combination such as `AB+TD+WD+WCD`; the base signal
/// comes first and doubles as the prediction target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSet(Vec<Feature>);

impl FeatureSet {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        match features.first() {
            Some(f) if f.is_base() => {}
            _ => {
                return Err(DataError::InvalidArgument(
                    "a feature set must start with AB or PD".into(),
                ))
            }
        }
        if features.iter().skip(1).any(Feature::is_base) {
            return Err(DataError::InvalidArgument("only one base signal allowed".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if features[..i].contains(f) {
                return Err(DataError::InvalidArgument(format!("duplicate feature {f}")));
            }
        }
        Ok(Self(features))
    }

    pub fn features(&self) -> &[Feature] {
        &self.0
    }

    pub fn base(&self) -> Feature {
        self.0[0]
    }

    pub fn dims(&self) -> usize {
        self.0.iter().map(Feature::dims).sum()
    }

    pub fn target_channels(&self) -> usize {
        self.base().dims()
    }

    pub fn needs_weather(&self) -> bool {
        self.0.iter().any(|f| {
            matches!(
                f,
                Feature::WeatherCondition
                    | Feature::Temperature
                    | Feature::WindSpeed
                    | Feature::CloudCover
                    | Feature::Humidity
            )
        })
    }

    pub fn column_names(&self) -> Vec<String> {
        self.0.iter().flat_map(|f| f.column_names()).collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<_> = self.0.iter().map(|x| x.code()).collect();
        f.write_str(&codes.join("+"))
    }
}

impl FromStr for FeatureSet {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s.split('+').map(str::parse).collect::<Result<_>>()?)
    }
}

impl TryFrom<String> for FeatureSet {
    type Error = DataError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSet> for String {
    fn from(f: FeatureSet) -> String {
        f.to_string()
    }
}

#[derive(Debug, Clone, Deserialize)]
struct CategoryRule {
    keyword: String,
    category: String,
}

#[derive(Debug, Clone, Deserialize)]
struct CategoryFile {
    rule: Vec<CategoryRule>,
}

/// Keyword rules mapping free-text conditions onto [`WEATHER_CATEGORIES`].
#[derive(Debug, Clone)]
pub struct WeatherCategories {
    rules: Vec<(String, usize)>,
}

const DEFAULT_CATEGORIES: &str = include_str!("../../assets/weather_categories.toml");

impl WeatherCategories {
    pub fn from_toml(src: &str) -> Result<Self> {
        let file: CategoryFile =
            toml::from_str(src).map_err(|e| DataError::InvalidArgument(format!("weather categories: {e}")))?;
        let rules = file
            .rule
            .into_iter()
            .map(|r| {
                let idx = WEATHER_CATEGORIES
                    .iter()
                    .position(|c| *c == r.category)
                    .ok_or_else(|| DataError::InvalidArgument(format!("unknown weather category `{}`", r.category)))?;
                Ok((r.keyword.to_lowercase(), idx))
            })
            .collect::<Result<_>>()?;
        Ok(Self { rules })
    }

    /// Index into [`WEATHER_CATEGORIES`]; unmatched text is "other".
    pub fn classify(&self, description: &str) -> usize {
        let d = description.to_lowercase();
        self.rules
            .iter()
            .find(|(k, _)| d.contains(k.as_str()))
            .map(|&(_, i)| i)
            .unwrap_or(WEATHER_CATEGORIES.len() - 1)
    }
}

impl Default for WeatherCategories {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CATEGORIES).expect("bundled weather categories parse")
    }
}

/// Encoded inputs for every station and time step, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePanel {
    /// `T×N×d`.
    pub values: Tensor,
    pub names: Vec<String>,
    pub features: FeatureSet,
}

impl FeaturePanel {
    pub fn num_steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn num_nodes(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn dims(&self) -> usize {
        self.values.shape()[2]
    }

    /// Leading channels that form the prediction target.
    pub fn target_channels(&self) -> usize {
        self.features.target_channels()
    }
}

/// Weather lookups further than this from the requested hour are rejected.
const WEATHER_TOLERANCE: TimeDelta = TimeDelta::minutes(90);

fn nearest_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    let secs = t.timestamp();
    let rounded = (secs + 1800).div_euclid(3600) * 3600;
    DateTime::from_timestamp(rounded, 0).expect("timestamp in range")
}

/// Weather scalar of one kind, forward- then back-filled over missing cells.
fn filled_column(weather: &WeatherTable, get: impl Fn(usize) -> Option<f64>, name: &str) -> Result<Vec<f64>> {
    let raw: Vec<Option<f64>> = (0..weather.records.len()).map(get).collect();
    let first = raw
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or_else(|| DataError::FeatureUnavailable(format!("weather table has no {name} values")))?;
    let mut prev = first;
    Ok(raw
        .into_iter()
        .map(|v| {
            if let Some(x) = v {
                prev = x;
            }
            prev
        })
        .collect())
}

/// Builds the `T×N×d` panel: base signal channels first, then calendar and
/// weather covariates broadcast to every station. Weather is joined on the
/// nearest hour.
///
/// `base` is `T×N` (one channel) or `T×N×c`; its channel count must match
/// the base feature of `set`.
pub fn encode_features(
    base: &Tensor,
    timestamps: &[DateTime<Utc>],
    weather: Option<&WeatherTable>,
    set: &FeatureSet,
    categories: &WeatherCategories,
) -> Result<FeaturePanel> {
    let (t_len, n, c0) = match base.shape() {
        [t, n] => (*t, *n, 1),
        [t, n, c] => (*t, *n, *c),
        s => return Err(DataError::InvalidArgument(format!("base signal must be T×N or T×N×c, got {s:?}"))),
    };
    if c0 != set.target_channels() {
        return Err(DataError::InvalidArgument(format!(
            "{} expects {} channels, base signal has {c0}",
            set.base(),
            set.target_channels()
        )));
    }
    if timestamps.len() != t_len {
        return Err(DataError::InvalidArgument(format!(
            "{} timestamps for {t_len} time steps",
            timestamps.len()
        )));
    }

    // covariates shared by all stations at one time step
    let mut shared: Vec<Vec<f64>> = vec![Vec::new(); t_len];
    let weather_rows: Vec<usize> = if set.needs_weather() {
        let w = weather.ok_or_else(|| DataError::FeatureUnavailable("weather features need a weather table".into()))?;
        timestamps
            .iter()
            .map(|&t| {
                let hour = nearest_hour(t);
                let i = w.nearest(hour).map(|r| r.timestamp).and_then(|ts| {
                    ((ts - hour).abs() <= WEATHER_TOLERANCE)
                        .then(|| w.records.partition_point(|r| r.timestamp < ts))
                });
                i.ok_or_else(|| DataError::FeatureUnavailable(format!("no weather observation near {hour}")))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    for f in &set.features()[1..] {
        match f {
            Feature::TimeOfDay => {
                for (row, t) in shared.iter_mut().zip(timestamps) {
                    row.push((t.hour() * 60 + t.minute()) as f64 / 1440.0);
                }
            }
            Feature::Weekday => {
                for (row, t) in shared.iter_mut().zip(timestamps) {
                    row.push(t.weekday().num_days_from_monday() as f64 / 6.0);
                }
            }
            Feature::WeatherCondition => {
                let w = weather.expect("checked above");
                if !w.columns.condition {
                    return Err(DataError::FeatureUnavailable("weather table has no condition column".into()));
                }
                for (row, &i) in shared.iter_mut().zip(&weather_rows) {
                    let cat = w.records[i]
                        .condition
                        .as_deref()
                        .map(|d| categories.classify(d))
                        .unwrap_or(WEATHER_CATEGORIES.len() - 1);
                    row.extend((0..WEATHER_CATEGORIES.len()).map(|k| if k == cat { 1.0 } else { 0.0 }));
                }
            }
            Feature::Temperature | Feature::WindSpeed | Feature::CloudCover | Feature::Humidity => {
                let w = weather.expect("checked above");
                let (present, name): (bool, &str) = match f {
                    Feature::Temperature => (w.columns.temperature, "temperature"),
                    Feature::WindSpeed => (w.columns.wind_speed, "wind speed"),
                    Feature::CloudCover => (w.columns.cloud_cover, "cloud cover"),
                    _ => (w.columns.humidity, "humidity"),
                };
                if !present {
                    return Err(DataError::FeatureUnavailable(format!("weather table has no {name} column")));
                }
                let col = filled_column(
                    w,
                    |i| {
                        let r = &w.records[i];
                        match f {
                            Feature::Temperature => r.temperature,
                            Feature::WindSpeed => r.wind_speed,
                            Feature::CloudCover => r.cloud_cover,
                            _ => r.humidity,
                        }
                    },
                    name,
                )?;
                for (row, &i) in shared.iter_mut().zip(&weather_rows) {
                    row.push(col[i]);
                }
            }
            Feature::AvailableBikes | Feature::Demand => unreachable!("validated feature set"),
        }
    }

    let d = set.dims();
    let src = base.data();
    let values = Tensor::from_fn(vec![t_len, n, d], |k| {
        let (t, rest) = (k / (n * d), k % (n * d));
        let (node, ch) = (rest / d, rest % d);
        if ch < c0 {
            src[(t * n + node) * c0 + ch]
        } else {
            shared[t][ch - c0]
        }
    });
    Ok(FeaturePanel {
        values,
        names: set.column_names(),
        features: set.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::records::{WeatherColumns, WeatherRecord};
    use chrono::TimeZone;

    fn weather(conditions: &[&str], start: DateTime<Utc>) -> WeatherTable {
        let records = conditions
            .iter()
            .enumerate()
            .map(|(i, c)| WeatherRecord {
                timestamp: start + TimeDelta::hours(i as i64),
                condition: Some(c.to_string()),
                temperature: Some(10.0 + i as f64),
                wind_speed: None,
                cloud_cover: Some(50.0),
                humidity: Some(80.0),
            })
            .collect();
        WeatherTable::new(
            records,
            WeatherColumns {
                condition: true,
                temperature: true,
                wind_speed: true,
                cloud_cover: true,
                humidity: true,
            },
        )
    }

    #[test]
    fn feature_set_parsing() {
        let s: FeatureSet = "AB+TD+WD+WCD".parse().unwrap();
        assert_eq!(s.dims(), 8);
        assert_eq!(s.to_string(), "AB+TD+WD+WCD");
        assert_eq!("AB".parse::<FeatureSet>().unwrap().dims(), 1);
        assert_eq!("PD".parse::<FeatureSet>().unwrap().target_channels(), 2);
        assert!("TD+AB".parse::<FeatureSet>().is_err());
        assert!("AB+TD+TD".parse::<FeatureSet>().is_err());
        assert!("AB+XX".parse::<FeatureSet>().is_err());
    }

    #[test]
    fn category_mapping() {
        let c = WeatherCategories::default();
        assert_eq!(c.classify("Rain, Overcast"), 2);
        assert_eq!(c.classify("Partially cloudy"), 1);
        assert_eq!(c.classify("Clear"), 0);
        assert_eq!(c.classify("Mist"), 3);
        assert_eq!(c.classify("Volcanic ash"), 4);
    }

    #[test]
    fn encodes_calendar_and_weather() {
        // 2020-07-06 is a Monday
        let t0 = Utc.with_ymd_and_hms(2020, 7, 6, 0, 0, 0).unwrap();
        let ts: Vec<_> = (0..3).map(|k| t0 + TimeDelta::minutes(45 * k)).collect();
        let base = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let w = weather(&["Clear", "Rain", "Fog"], t0);
        let set: FeatureSet = "AB+TD+WD+WCD+T".parse().unwrap();
        let p = encode_features(&base, &ts, Some(&w), &set, &WeatherCategories::default()).unwrap();
        assert_eq!(p.values.shape(), &[3, 2, 9]);
        assert_eq!(p.values.at(&[0, 0, 1]), 0.0);
        assert_eq!(p.values.at(&[1, 1, 1]), 45.0 / 1440.0);
        assert_eq!(p.values.at(&[0, 1, 2]), 0.0);
        // 00:45 rounds to 01:00, which is rain
        let wcd: Vec<f64> = (3..8).map(|c| p.values.at(&[1, 0, c])).collect();
        assert_eq!(wcd, [0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(p.values.at(&[1, 0, 8]), 11.0);
        assert_eq!(p.values.at(&[2, 1, 0]), 6.0);
        let sunday = [Utc.with_ymd_and_hms(2020, 7, 12, 23, 45, 0).unwrap()];
        let one = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        let p = encode_features(&one, &sunday, None, &"AB+WD".parse().unwrap(), &WeatherCategories::default()).unwrap();
        assert_eq!(p.values.at(&[0, 0, 1]), 1.0);
    }

    #[test]
    fn missing_weather_is_an_error() {
        let t0 = Utc.with_ymd_and_hms(2020, 7, 6, 0, 0, 0).unwrap();
        let base = Tensor::zeros(vec![1, 1]);
        let cats = WeatherCategories::default();
        let set: FeatureSet = "AB+WS".parse().unwrap();
        let w = weather(&["Clear"], t0);
        assert!(matches!(
            encode_features(&base, &[t0], Some(&w), &set, &cats),
            Err(DataError::FeatureUnavailable(_))
        ));
        let far = [t0 + TimeDelta::hours(5)];
        let set: FeatureSet = "AB+T".parse().unwrap();
        assert!(encode_features(&base, &far, Some(&w), &set, &cats).is_err());
        assert!(encode_features(&base, &[t0], None, &set, &cats).is_err());
    }
}
