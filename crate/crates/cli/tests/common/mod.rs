//! Synthetic archives and helpers shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wxverify_cli::archive::{Archive, ArchiveRecord};

pub const STATIONS: [(&str, f64, f64); 3] = [("BAS", 12.0, -80.0), ("GVE", -5.0, 40.0), ("LUG", 30.0, 150.0)];

/// Summer-like archive: a persistent daily anomaly per station, raw members
/// biased cold by 1 °C and under-dispersed, lead times 1 to 3.
pub fn synthetic_archive(days: u32, members: usize, seed: u64) -> Archive {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2019, 6, 1).unwrap();
    let mut records = Vec::new();
    for (s, _, mhd) in STATIONS {
        let mut anomaly = 0.0f64;
        let mut truth = Vec::new();
        for d in 0..days + 3 {
            anomaly = 0.8 * anomaly + 1.5 * normal(&mut rng);
            truth.push(23.0 + 2.0 * ((d as f64) / 20.0).sin() + anomaly);
        }
        for d in 0..days {
            for lead in 1..=3u32 {
                let obs = truth[(d + lead) as usize];
                let spread = 0.5 + 0.2 * lead as f64;
                let centre = obs - 1.0 - 0.006 * mhd + spread * 1.5 * normal(&mut rng);
                let common = normal(&mut rng);
                let m = (0..members).map(|_| centre + spread * (0.5 * common + normal(&mut rng))).collect();
                records.push(ArchiveRecord {
                    station_id: s.into(),
                    init_date: start + Days::new(u64::from(d)),
                    lead_time: lead,
                    members: m,
                    obs: (obs * 10.0).round() / 10.0,
                });
            }
        }
    }
    Archive::new(records).unwrap()
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    rng.random_range(a..b)
}

pub fn write_stations(path: &Path) {
    let mut text = String::from("station_id,tpi,mhd\n");
    for (s, tpi, mhd) in STATIONS {
        text.push_str(&format!("{s},{tpi},{mhd}\n"));
    }
    fs::write(path, text).unwrap();
}

pub fn wxverify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wxverify")).args(args).output().expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// All files of a directory, sorted by name, with their contents.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .filter(|p| p.is_file())
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&p).unwrap();
            if name == "manifest.json" {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("wall_time_ms");
                // The echoed output directory names where the run wrote.
                v["config"].as_object_mut().unwrap().remove("output");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            (name, bytes)
        })
        .collect()
}
