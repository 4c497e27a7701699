//! Dataset ingestion, synthetic corpus generation and instance sampling.

mod csv_io;
mod manifest;
mod sample;
mod synthetic;

pub use csv_io::{load_csv, write_csv, write_csv_to, Split};
pub use manifest::{write_synthetic_corpus, Manifest, ManifestEntry, MANIFEST_SCHEMA_VERSION};
pub use sample::{sample_instances, train_window_starts};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// Sampling interval in minutes for labels like `10min`, `15min`, `1h`, `1d`.
pub fn frequency_minutes(freq: &str) -> Option<u64> {
    let f = freq.trim().to_ascii_lowercase();
    let split = f.find(|c: char| !c.is_ascii_digit()).unwrap_or(f.len());
    let (num, unit) = f.split_at(split);
    let n: u64 = if num.is_empty() { 1 } else { num.parse().ok()? };
    let per = match unit {
        "min" | "t" | "m" => 1,
        "h" | "hour" => 60,
        "d" | "day" => 1440,
        _ => return None,
    };
    (n > 0).then_some(n * per)
}

/// Horizon covering 24 hours at the given frequency (144 at 10min, 96 at
/// 15min, 24 at 1h), or `None` when 24h is not a whole number of steps.
pub fn horizon_for_frequency(freq: &str) -> Option<usize> {
    let m = frequency_minutes(freq)?;
    (1440 % m == 0).then_some((1440 / m) as usize)
}
