//! Exact synthesis of fractional Brownian motion paths.
//!
//! Increments are stationary fractional Gaussian noise with autocovariance
//! `rho(k) = ((k+1)^{2H} - 2 k^{2H} + (k-1)^{2H}) / 2` and variance `dt^{2H}`
//! per step. The primary generator embeds the covariance in a circulant
//! matrix of size `2n` and synthesizes in O(n log n) with two FFTs; when the
//! embedding is not positive semidefinite it falls back to the O(n^2)
//! Durbin-Levinson recursion, which is exact for every admissible `(H, n)`.
//! The method actually used is recorded on the path.
//!
//! Because fBm is non-Markov, the whole increment sequence is synthesized up
//! front; integrators consume it as a slice.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::stream;

/// How a path's increments were synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisMethod {
    /// Circulant embedding (Davies-Harte), O(n log n).
    CirculantEmbedding,
    /// Durbin-Levinson recursion, O(n^2); used when the embedding fails.
    DurbinLevinson,
}

/// A sampled fractional Brownian motion path on a uniform grid.
#[derive(Debug, Clone)]
pub struct FbmPath {
    /// Hurst exponent in (0, 1).
    pub hurst: f64,
    /// Grid step in seconds.
    pub dt: f64,
    /// Stationary increments; Var = dt^{2H}.
    pub increments: Vec<f64>,
    /// B_H(t_i) for t_i = i * dt; cumulative[0] = 0 and cumulative is the
    /// prefix sum of increments (length n + 1).
    pub cumulative: Vec<f64>,
    /// Which synthesis route produced the increments.
    pub method: SynthesisMethod,
}

/// Autocovariance of unit-step fractional Gaussian noise at integer lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Analytic fBm covariance `Cov(B_H(t), B_H(s)) = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance(hurst: f64, t: f64, s: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (t.abs().powf(h2) + s.abs().powf(h2) - (t - s).abs().powf(h2))
}

/// Generates an fBm path of `n` increments at step `dt`, deterministic in `seed`.
pub fn generate_fbm(hurst: f64, n: usize, dt: f64, seed: u64) -> Result<FbmPath> {
    let mut rng = stream(seed, 0);
    generate_fbm_with(hurst, n, dt, &mut rng)
}

/// Same as [`generate_fbm`] with a caller-supplied RNG (used by the SDE
/// integrator to keep its own stream discipline).
pub fn generate_fbm_with<R: Rng>(hurst: f64, n: usize, dt: f64, rng: &mut R) -> Result<FbmPath> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::Argument(format!("hurst must lie in (0,1), got {hurst}")));
    }
    if n == 0 {
        return Err(Error::Argument("need at least one increment".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    let (mut increments, method) = sample_unit_fgn(hurst, n, rng);
    let scale = dt.powf(hurst);
    for x in &mut increments {
        *x *= scale;
    }
    let mut cumulative = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    cumulative.push(0.0);
    for x in &increments {
        acc += x;
        cumulative.push(acc);
    }
    Ok(FbmPath {
        hurst,
        dt,
        increments,
        cumulative,
        method,
    })
}

/// Unit-step, unit-variance fractional Gaussian noise.
pub(crate) fn sample_unit_fgn<R: Rng>(hurst: f64, n: usize, rng: &mut R) -> (Vec<f64>, SynthesisMethod) {
    match circulant_embedding(hurst, n, rng) {
        Some(xs) => (xs, SynthesisMethod::CirculantEmbedding),
        None => (durbin_levinson(hurst, n, rng), SynthesisMethod::DurbinLevinson),
    }
}

/// Davies-Harte circulant embedding. Returns None when the embedding is not
/// positive semidefinite (then the caller must use the exact recursion).
fn circulant_embedding<R: Rng>(hurst: f64, n: usize, rng: &mut R) -> Option<Vec<f64>> {
    let m = 2 * n;
    // First row of the circulant matrix: rho(0..=n) then mirrored.
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);

    let eigen: Vec<f64> = row.iter().map(|c| c.re).collect();
    let max_ev = eigen.iter().cloned().fold(0.0_f64, f64::max);
    let min_ev = eigen.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_ev < -1e-8 * max_ev.max(1.0) {
        return None;
    }

    // Hermitian-symmetric Gaussian spectrum with E|a_j|^2 = eigen_j / m.
    let za: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let zb: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut a = vec![Complex::new(0.0, 0.0); m];
    let mf = m as f64;
    a[0] = Complex::new((eigen[0].max(0.0) / mf).sqrt() * za[0], 0.0);
    a[n] = Complex::new((eigen[n].max(0.0) / mf).sqrt() * zb[0], 0.0);
    for j in 1..n {
        let amp = (eigen[j].max(0.0) / (2.0 * mf)).sqrt();
        a[j] = Complex::new(amp * za[j], amp * zb[j]);
        a[m - j] = a[j].conj();
    }

    let fft2 = planner.plan_fft_forward(m);
    fft2.process(&mut a);
    Some(a[..n].iter().map(|c| c.re).collect())
}

/// Exact Durbin-Levinson synthesis of stationary Gaussian noise with the fGn
/// autocovariance.
fn durbin_levinson<R: Rng>(hurst: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let rho: Vec<f64> = (0..n).map(|k| fgn_autocovariance(hurst, k)).collect();
    let mut xs = Vec::with_capacity(n);
    let z0: f64 = rng.sample(StandardNormal);
    xs.push(z0); // v_0 = rho(0) = 1
    if n == 1 {
        return xs;
    }

    let mut phi = vec![0.0; n];
    let mut phi_prev = vec![0.0; n];
    let mut v = 1.0;
    for k in 1..n {
        let mut num = rho[k];
        for j in 1..k {
            num -= phi_prev[j - 1] * rho[k - j];
        }
        let pk = num / v;
        phi[k - 1] = pk;
        for j in 1..k {
            phi[j - 1] = phi_prev[j - 1] - pk * phi_prev[k - j - 1];
        }
        v *= 1.0 - pk * pk;
        v = v.max(0.0);

        let mut mu = 0.0;
        for j in 1..=k {
            mu += phi[j - 1] * xs[k - j];
        }
        let z: f64 = rng.sample(StandardNormal);
        xs.push(mu + v.sqrt() * z);
        phi_prev[..k].copy_from_slice(&phi[..k]);
    }
    xs
}
