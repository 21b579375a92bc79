//! Seeded synthetic data: a clean sinusoid panel for sanity training, and
//! raw CSV files shaped like the real snapshot, trip and weather exports.

use crate::graph::Station;
use crate::tensor::Tensor;
use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub nodes: usize,
    pub steps: usize,
    /// Period in time steps.
    pub period: f64,
    /// Standard deviation of additive Gaussian noise.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 7, 1, 0, 0, 0).unwrap()
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 8,
            steps: 480,
            period: 24.0,
            noise: 0.0,
            seed: 0,
            start: default_start(),
        }
    }
}

fn random_stations(n: usize, rng: &mut impl Rng) -> Vec<Station> {
    (0..n)
        .map(|i| Station {
            id: (i + 1).to_string(),
            latitude: 53.33 + 0.03 * rng.random::<f64>(),
            longitude: -6.30 + 0.07 * rng.random::<f64>(),
        })
        .collect()
}

/// `T×N` panel with `x_i(t) = a_i (1 + sin(2πt/P + φ_i)) + noise`, per-node
/// amplitude `a_i ∈ [0.5, 1)` and phase `φ_i ∈ [0, 2π)`.
pub fn sinusoid_panel(cfg: &SyntheticConfig) -> (Vec<Station>, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stations = random_stations(cfg.nodes, &mut rng);
    let amp: Vec<f64> = (0..cfg.nodes).map(|_| rng.random_range(0.5..1.0)).collect();
    let phase: Vec<f64> = (0..cfg.nodes).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise");
    let n = cfg.nodes;
    let values = Tensor::from_fn(vec![cfg.steps, n], |k| {
        let (t, i) = (k / n, k % n);
        let clean = amp[i] * (1.0 + (2.0 * PI * t as f64 / cfg.period + phase[i]).sin());
        if cfg.noise > 0.0 {
            clean + noise.sample(&mut rng)
        } else {
            clean
        }
    });
    (stations, values)
}

/// Shape of the generated raw CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSynthConfig {
    pub stations: usize,
    pub days: u32,
    pub seed: u64,
    pub start: DateTime<Utc>,
}

impl Default for RawSynthConfig {
    fn default() -> Self {
        Self {
            stations: 12,
            days: 14,
            seed: 0,
            start: default_start(),
        }
    }
}

/// Paths of the files written by [`write_raw`].
#[derive(Debug, Clone, PartialEq)]
pub struct RawFiles {
    pub snapshots: PathBuf,
    pub weather: PathBuf,
    pub trips: PathBuf,
}

const CONDITIONS: [&str; 6] = ["Clear", "Partially cloudy", "Overcast", "Rain, Overcast", "Fog", "Snow"];

/// Writes `snapshots.csv` (5-minute readings), `weather.csv` (hourly) and
/// `trips.csv` (Citi Bike column layout) into `dir`.
pub fn write_raw(dir: &Path, cfg: &RawSynthConfig) -> io::Result<RawFiles> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stations = random_stations(cfg.stations, &mut rng);
    let hours = cfg.days as i64 * 24;
    let fmt = |t: DateTime<Utc>| t.format("%Y-%m-%d %H:%M:%S").to_string();

    // weather: a sticky Markov chain over conditions plus smooth scalars
    let weather = dir.join("weather.csv");
    let mut w = BufWriter::new(File::create(&weather)?);
    writeln!(w, "datetime,conditions,temp,windspeed,cloudcover,humidity")?;
    let mut cond = 0usize;
    let mut rain_by_hour = Vec::with_capacity(hours as usize);
    for h in 0..hours {
        if rng.random::<f64>() < 0.15 {
            cond = rng.random_range(0..CONDITIONS.len());
        }
        rain_by_hour.push(cond == 3);
        let t = cfg.start + TimeDelta::hours(h);
        let day = 2.0 * PI * (h % 24) as f64 / 24.0;
        writeln!(
            w,
            "{},\"{}\",{:.1},{:.1},{:.1},{:.1}",
            t.format("%Y-%m-%dT%H:%M:%S"),
            CONDITIONS[cond],
            13.0 - 4.0 * day.cos() + rng.random_range(-1.0..1.0),
            10.0 + 8.0 * rng.random::<f64>(),
            [5.0, 40.0, 95.0, 90.0, 100.0, 80.0][cond],
            70.0 + 20.0 * rng.random::<f64>(),
        )?;
    }
    w.flush()?;

    // availability: a daily cycle per station, damped when it rains
    let snapshots = dir.join("snapshots.csv");
    let mut s = BufWriter::new(File::create(&snapshots)?);
    writeln!(s, "station_id,timestamp,available_bikes,latitude,longitude")?;
    let capacity: Vec<f64> = (0..cfg.stations).map(|_| rng.random_range(15.0..40.0)).collect();
    let phase: Vec<f64> = (0..cfg.stations).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    for k in 0..hours * 12 {
        let t = cfg.start + TimeDelta::minutes(5 * k);
        let day = 2.0 * PI * (k % 288) as f64 / 288.0;
        let rain = rain_by_hour[(k / 12) as usize];
        for (i, st) in stations.iter().enumerate() {
            let swing = if rain { 0.15 } else { 0.35 };
            let frac = 0.5 + swing * (day + phase[i]).sin() + rng.random_range(-0.05..0.05);
            let bikes = (capacity[i] * frac.clamp(0.0, 1.0)).round();
            writeln!(s, "{},{},{},{},{}", st.id, fmt(t), bikes, st.latitude, st.longitude)?;
        }
    }
    s.flush()?;

    // trips: Poisson pick-ups per half hour, random destinations
    let trips = dir.join("trips.csv");
    let mut tw = BufWriter::new(File::create(&trips)?);
    writeln!(
        tw,
        "tripduration,starttime,stoptime,start station id,start station latitude,start station longitude,end station id,end station latitude,end station longitude"
    )?;
    let popularity: Vec<f64> = (0..cfg.stations).map(|_| rng.random_range(0.2..3.0)).collect();
    for slot in 0..hours * 2 {
        let t0 = cfg.start + TimeDelta::minutes(30 * slot);
        let day = 2.0 * PI * (slot % 48) as f64 / 48.0;
        for (i, from) in stations.iter().enumerate() {
            let rate = popularity[i] * (1.2 - (day + phase[i]).cos()).max(0.05);
            let count = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64;
            for _ in 0..count {
                let to = &stations[rng.random_range(0..cfg.stations)];
                let start = t0 + TimeDelta::seconds(rng.random_range(0..1800));
                let dur = rng.random_range(180..2400);
                let stop = start + TimeDelta::seconds(dur);
                writeln!(
                    tw,
                    "{dur},{},{},{},{},{},{},{},{}",
                    fmt(start),
                    fmt(stop),
                    from.id,
                    from.latitude,
                    from.longitude,
                    to.id,
                    to.latitude,
                    to.longitude
                )?;
            }
        }
    }
    tw.flush()?;

    Ok(RawFiles {
        snapshots,
        weather,
        trips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_is_seeded() {
        let cfg = SyntheticConfig {
            nodes: 3,
            steps: 10,
            ..Default::default()
        };
        let (s1, a) = sinusoid_panel(&cfg);
        let (s2, b) = sinusoid_panel(&cfg);
        assert_eq!((s1, a.clone()), (s2, b));
        assert_eq!(a.shape(), &[10, 3]);
        assert!(a.data().iter().all(|&v| (0.0..2.0).contains(&v)));
    }
}
