//! Fixed inputs shared by the kernel benchmarks.

use mumimo::channel::{sample_scenario, sample_small_scale};
use mumimo::{FadingProfile, SystemConfig};

/// N = 50, T = 100 with `k` users and `training` pilot symbols at `rho0_db`.
pub fn desk_config(k: usize, training: usize, rho0_db: f64) -> SystemConfig {
    SystemConfig::with_snr_db(50, k, 100, training, rho0_db).expect("valid desk-scale config")
}

/// `k` users dropped over a 100 m disk.
pub fn desk_fading(k: usize, seed: u64) -> FadingProfile {
    sample_scenario(k, 100.0, seed).expect("valid drop")
}

/// Column-major CN(0, 1) matrix as split real and imaginary parts.
pub fn split_gaussian(rows: usize, cols: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let g = sample_small_scale(rows, cols, seed);
    (g.iter().map(|z| z.re).collect(), g.iter().map(|z| z.im).collect())
}

/// Nonnegative test vector with a spread of magnitudes.
pub fn spread_vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 7919) % 97) as f64 / 97.0 + 0.01).collect()
}
