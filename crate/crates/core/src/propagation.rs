//! Empirical propagation model: the mapping between great-circle distance and
//! round-trip time, its noise structure, and the lower speed bound used by
//! confidence scoring.
//!
//! "Speed" is always distance divided by the *full* round-trip time, in
//! km/ms. The speed curve is `f(d) = v_max * d / (d + d_half)` with the
//! distance floored at [`MIN_FIT_DISTANCE_KM`], which makes the forward time
//! map affine, `d / f(d) = (d + d_half) / v_max`, and gives a closed-form
//! inverse.
//!
//! Per distance bin the model stores a log-normal slowdown distribution
//! (`X = f(d) / s`), a noise weight and the ratio `l(d) / f(d)`.

use std::path::Path;
use std::sync::OnceLock;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, km/ms.
pub const C_KM_PER_MS: f64 = 299.792458;
/// Upper transmission speed bound, (2/3)·c.
pub const MAX_SPEED_KM_PER_MS: f64 = 2.0 / 3.0 * C_KM_PER_MS;
/// Distances below this are evaluated at this value by the speed curve.
pub const MIN_FIT_DISTANCE_KM: f64 = 1.0;
pub const MODEL_VERSION: u32 = 1;

pub const MIN_SAMPLES: usize = 100;
pub const MIN_POPULATED_BINS: usize = 3;

const DEFAULT_MODEL_JSON: &str = include_str!("../data/default_model.json");

/// One calibration observation: distance and minimum RTT over a probe series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSample {
    pub distance_km: f64,
    pub min_rtt_ms: f64,
}

impl PropagationSample {
    pub fn speed(&self) -> f64 {
        self.distance_km / self.min_rtt_ms
    }

    fn is_valid(&self) -> bool {
        self.distance_km.is_finite() && self.min_rtt_ms.is_finite() && self.distance_km >= 0.0 && self.min_rtt_ms > 0.0
    }
}

/// Saturating speed curve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedFit {
    pub v_max_km_per_ms: f64,
    pub d_half_km: f64,
}

impl SpeedFit {
    pub fn speed(&self, d: f64) -> f64 {
        let d = d.max(MIN_FIT_DISTANCE_KM);
        self.v_max_km_per_ms * d / (d + self.d_half_km)
    }

    pub fn time(&self, d: f64) -> f64 {
        let d = d.max(0.0);
        if d >= MIN_FIT_DISTANCE_KM {
            (d + self.d_half_km) / self.v_max_km_per_ms
        } else {
            d * (MIN_FIT_DISTANCE_KM + self.d_half_km) / (MIN_FIT_DISTANCE_KM * self.v_max_km_per_ms)
        }
    }

    pub fn distance(&self, t: f64) -> f64 {
        let t_floor = (MIN_FIT_DISTANCE_KM + self.d_half_km) / self.v_max_km_per_ms;
        if t >= t_floor {
            self.v_max_km_per_ms * t - self.d_half_km
        } else {
            t / t_floor * MIN_FIT_DISTANCE_KM
        }
    }
}

/// How the per-bin lower speed bound is derived from calibration data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LowerBound {
    /// `q`-quantile of the observed speed ratio `s / f(d)` in the bin.
    Percentile { q: f64 },
    /// One-sided confidence bound on the fitted curve: the bin's mean
    /// slowdown plus `z` standard errors, inverted into a speed ratio.
    FitConfidence { z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub bin_count: usize,
    pub min_km: f64,
    pub max_km: f64,
    pub lower_bound: LowerBound,
    /// A bin needs at least this many samples to count as populated.
    pub min_bin_samples: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            bin_count: 10,
            min_km: 10.0,
            max_km: 10_000.0,
            lower_bound: LowerBound::FitConfidence { z: 1.645 },
            min_bin_samples: 5,
        }
    }
}

/// Per-bin statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub center_km: f64,
    /// Samples observed in this bin; zero for bins filled from a neighbor.
    pub samples: usize,
    pub speed_sd: f64,
    pub omega: f64,
    /// `l(center) / f(center)`, in (0, 1].
    pub lower_ratio: f64,
    pub ln_mu: f64,
    pub ln_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationModel {
    pub version: u32,
    pub fit: SpeedFit,
    pub lower_bound: LowerBound,
    pub bin_edges_km: Vec<f64>,
    pub bins: Vec<BinStats>,
}

/// Drops non-finite or non-positive samples and samples faster than light.
/// Returns the kept samples and the number of faster-than-light removals.
pub fn filter_faster_than_light(samples: &[PropagationSample]) -> (Vec<PropagationSample>, usize) {
    let mut removed = 0;
    let kept = samples
        .iter()
        .filter(|s| s.is_valid())
        .filter(|s| {
            let ok = s.speed() <= C_KM_PER_MS;
            if !ok {
                removed += 1;
            }
            ok
        })
        .copied()
        .collect();
    (kept, removed)
}

fn log_edges(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..=n).map(|k| 10f64.powf(a + (b - a) * k as f64 / n as f64)).collect()
}

fn bin_of(edges: &[f64], d: f64) -> usize {
    let n = edges.len() - 1;
    // partition_point gives the first edge > d
    let i = edges.partition_point(|&e| e <= d);
    i.saturating_sub(1).min(n - 1)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Linear-interpolated quantile of an unsorted slice (type 7).
pub(crate) fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Least squares of pace `rtt / d` on `1 / d`, constrained to
/// `v_max <= 2c/3` and `d_half >= 0`.
fn fit_curve(samples: &[PropagationSample]) -> SpeedFit {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            let d = s.distance_km.max(MIN_FIT_DISTANCE_KM);
            (1.0 / d, s.min_rtt_ms / d)
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let mut a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mut b = my - a * mx;
    let b_min = 1.0 / MAX_SPEED_KM_PER_MS;
    if a < 0.0 {
        a = 0.0;
        b = my;
    }
    if b < b_min {
        b = b_min;
        let sx2: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        a = (pts.iter().map(|p| p.0 * (p.1 - b)).sum::<f64>() / sx2).max(0.0);
    }
    SpeedFit { v_max_km_per_ms: 1.0 / b, d_half_km: a / b }
}

fn interp_log(bins: &[BinStats], value: impl Fn(&BinStats) -> f64, d: f64) -> f64 {
    let x = d.max(1e-9).log10();
    if x <= bins[0].center_km.log10() {
        return value(&bins[0]);
    }
    for w in bins.windows(2) {
        let (c0, c1) = (w[0].center_km.log10(), w[1].center_km.log10());
        if x <= c1 {
            let t = (x - c0) / (c1 - c0);
            return value(&w[0]) + t * (value(&w[1]) - value(&w[0]));
        }
    }
    value(bins.last().expect("non-empty"))
}

/// Builds a model from calibration samples.
pub fn build_model(samples: &[PropagationSample], opts: &BuildOptions) -> Result<PropagationModel> {
    if opts.bin_count == 0 || !(opts.min_km > 0.0 && opts.max_km > opts.min_km) {
        return Err(Error::Config("bin layout must have at least one bin over a positive range".into()));
    }
    let (kept, _) = filter_faster_than_light(samples);
    if kept.len() < MIN_SAMPLES {
        return Err(Error::ModelConstruction {
            bin: None,
            reason: format!("{} usable samples, need at least {MIN_SAMPLES}", kept.len()),
        });
    }
    let edges = log_edges(opts.bin_count, opts.min_km, opts.max_km);
    let mut per_bin: Vec<Vec<PropagationSample>> = vec![Vec::new(); opts.bin_count];
    for s in &kept {
        if s.distance_km >= MIN_FIT_DISTANCE_KM {
            per_bin[bin_of(&edges, s.distance_km)].push(*s);
        }
    }
    let min_bin = opts.min_bin_samples.max(2);
    let populated: Vec<bool> = per_bin.iter().map(|b| b.len() >= min_bin).collect();
    let n_populated = populated.iter().filter(|&&p| p).count();
    if n_populated < MIN_POPULATED_BINS.min(opts.bin_count) {
        let first_missing = populated.iter().position(|&p| !p);
        return Err(Error::ModelConstruction {
            bin: first_missing,
            reason: format!(
                "insufficient bin coverage: {n_populated} bins with at least {min_bin} samples, need {MIN_POPULATED_BINS}"
            ),
        });
    }

    let fit = fit_curve(&kept);
    let centers: Vec<f64> = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();

    let mut bins: Vec<Option<BinStats>> = per_bin
        .iter()
        .enumerate()
        .map(|(k, ss)| {
            if !populated[k] {
                return None;
            }
            let speeds: Vec<f64> = ss.iter().map(|s| s.speed()).collect();
            let slow: Vec<f64> = ss.iter().map(|s| fit.speed(s.distance_km) / s.speed()).collect();
            let ln_slow: Vec<f64> = slow.iter().map(|x| x.ln()).collect();
            let (_, speed_sd) = mean_sd(&speeds);
            let (ln_mu, ln_sigma) = mean_sd(&ln_slow);
            let lower_ratio = match opts.lower_bound {
                LowerBound::Percentile { q } => {
                    let ratios: Vec<f64> = slow.iter().map(|x| 1.0 / x).collect();
                    quantile(&ratios, q)
                }
                LowerBound::FitConfidence { z } => {
                    let (m, sd) = mean_sd(&slow);
                    1.0 / (m + z * sd / (ss.len() as f64).sqrt())
                }
            };
            Some(BinStats {
                center_km: centers[k],
                samples: ss.len(),
                speed_sd,
                omega: 0.0,
                lower_ratio: lower_ratio.clamp(1e-6, 1.0),
                ln_mu,
                ln_sigma,
            })
        })
        .collect();

    // fill gaps from the nearest populated bin, preferring the lower one on ties
    let filled: Vec<BinStats> = (0..opts.bin_count)
        .map(|k| {
            if let Some(b) = bins[k] {
                return b;
            }
            let src = (1..opts.bin_count)
                .flat_map(|off| [k.checked_sub(off), Some(k + off)])
                .flatten()
                .find(|&j| j < opts.bin_count && bins[j].is_some())
                .expect("at least one populated bin");
            BinStats { center_km: centers[k], samples: 0, ..bins[src].expect("populated") }
        })
        .collect();
    bins.clear();

    let mut model = PropagationModel {
        version: MODEL_VERSION,
        fit,
        lower_bound: opts.lower_bound,
        bin_edges_km: edges,
        bins: filled,
    };
    model.bins = assign_omega(model.bins);
    Ok(model)
}

/// Inverse per-bin speed standard deviation, made non-decreasing with
/// distance and normalized to mean 1.
fn assign_omega(mut bins: Vec<BinStats>) -> Vec<BinStats> {
    let min_pos = bins.iter().map(|b| b.speed_sd).filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
    if !min_pos.is_finite() {
        for b in &mut bins {
            b.omega = 1.0;
        }
        return bins;
    }
    let mut running = 0.0f64;
    let raw: Vec<f64> = bins
        .iter()
        .map(|b| {
            let sd = if b.speed_sd > 0.0 { b.speed_sd } else { min_pos };
            running = running.max(1.0 / sd);
            running
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    for (b, w) in bins.iter_mut().zip(raw) {
        b.omega = w / mean;
    }
    bins
}

impl PropagationModel {
    /// Constant-speed model without noise: `f = l = speed`, `ω = 1`.
    pub fn constant_speed(speed_km_per_ms: f64) -> Result<Self> {
        if !(speed_km_per_ms > 0.0 && speed_km_per_ms <= MAX_SPEED_KM_PER_MS) {
            return Err(Error::arg(format!("speed {speed_km_per_ms} outside (0, 2c/3]")));
        }
        let opts = BuildOptions::default();
        let edges = log_edges(opts.bin_count, opts.min_km, opts.max_km);
        let bins = edges
            .windows(2)
            .map(|w| BinStats {
                center_km: (w[0] * w[1]).sqrt(),
                samples: 0,
                speed_sd: 0.0,
                omega: 1.0,
                lower_ratio: 1.0,
                ln_mu: 0.0,
                ln_sigma: 0.0,
            })
            .collect();
        Ok(PropagationModel {
            version: MODEL_VERSION,
            fit: SpeedFit { v_max_km_per_ms: speed_km_per_ms, d_half_km: 0.0 },
            lower_bound: opts.lower_bound,
            bin_edges_km: edges,
            bins,
        })
    }

    /// The calibrated model shipped with the crate.
    pub fn default_model() -> &'static PropagationModel {
        static MODEL: OnceLock<PropagationModel> = OnceLock::new();
        MODEL.get_or_init(|| PropagationModel::from_json(DEFAULT_MODEL_JSON).expect("bundled model is valid"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: PropagationModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Resolves `default` or a path to a model file.
    pub fn resolve(id_or_path: &str) -> Result<Self> {
        if id_or_path == "default" {
            return Ok(Self::default_model().clone());
        }
        Self::load(id_or_path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Config(format!("unsupported model version {}", self.version)));
        }
        let f = &self.fit;
        if !(f.v_max_km_per_ms > 0.0 && f.v_max_km_per_ms <= MAX_SPEED_KM_PER_MS * (1.0 + 1e-12)) || !(f.d_half_km >= 0.0) {
            return Err(Error::Config("speed fit parameters out of range".into()));
        }
        if self.bins.is_empty() || self.bin_edges_km.len() != self.bins.len() + 1 {
            return Err(Error::Config("bin edges do not match bins".into()));
        }
        for b in &self.bins {
            if !(b.omega > 0.0) || !(b.lower_ratio > 0.0 && b.lower_ratio <= 1.0) || !(b.ln_sigma >= 0.0) {
                return Err(Error::Config("bin statistics out of range".into()));
            }
        }
        Ok(())
    }

    pub fn bin_index(&self, d: f64) -> usize {
        bin_of(&self.bin_edges_km, d)
    }

    /// f(d), km/ms, within (0, 2c/3].
    pub fn speed_at(&self, d: f64) -> f64 {
        self.fit.speed(d).min(MAX_SPEED_KM_PER_MS)
    }

    /// Expected RTT for a distance, `d / f(d)`.
    pub fn distance_to_time(&self, d: f64) -> f64 {
        self.fit.time(d)
    }

    /// f⁻¹: the distance whose expected RTT equals `rtt`.
    pub fn time_to_distance(&self, rtt: f64) -> Result<f64> {
        if !(rtt > 0.0) || !rtt.is_finite() {
            return Err(Error::arg(format!("rtt must be positive, got {rtt}")));
        }
        Ok(self.fit.distance(rtt))
    }

    /// ω(d), piecewise-linear in log-distance between bin centers.
    pub fn noise_weight(&self, d: f64) -> f64 {
        interp_log(&self.bins, |b| b.omega, d)
    }

    /// l(d): the 95% lower speed bound.
    pub fn lower_bound(&self, d: f64) -> f64 {
        interp_log(&self.bins, |b| b.lower_ratio, d) * self.speed_at(d)
    }

    /// b_l = l(d)·(1 − τ).
    pub fn lower_bound_speed(&self, d: f64, tau: f64) -> f64 {
        self.lower_bound(d) * (1.0 - tau)
    }

    /// One noisy RTT over distance `d`: speed `f(d) / X` with `X` drawn from
    /// the bin's log-normal slowdown, capped at 2c/3.
    pub fn sample_rtt<R: rand::Rng + ?Sized>(&self, d: f64, rng: &mut R) -> f64 {
        let d = d.max(1e-6);
        let b = &self.bins[self.bin_index(d)];
        let z: f64 = StandardNormal.sample(rng);
        let x = (b.ln_mu + b.ln_sigma * z).exp();
        let s = (self.speed_at(d) / x).min(MAX_SPEED_KM_PER_MS);
        d / s
    }
}

/// Generator for synthetic calibration data: log-uniform distances over
/// [10, 10000] km and a log-normal slowdown whose spread shrinks linearly in
/// log-distance from `sigma_near` to `sigma_far`. Pace has mean `1/f(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCurve {
    pub fit: SpeedFit,
    pub sigma_near: f64,
    pub sigma_far: f64,
}

impl Default for SyntheticCurve {
    fn default() -> Self {
        SyntheticCurve {
            fit: SpeedFit { v_max_km_per_ms: 70.0, d_half_km: 150.0 },
            sigma_near: 0.50,
            sigma_far: 0.20,
        }
    }
}

/// Sample count and seed behind the shipped default model.
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 20_000;
pub const DEFAULT_CALIBRATION_SEED: u64 = 0x6765_6f76;

impl SyntheticCurve {
    pub fn sigma_at(&self, d: f64) -> f64 {
        let w = ((d.max(10.0).log10() - 1.0) / 3.0).clamp(0.0, 1.0);
        self.sigma_near + w * (self.sigma_far - self.sigma_near)
    }

    pub fn samples(&self, n: usize, seed: u64) -> Vec<PropagationSample> {
        let mut rng = crate::seed::rng(seed);
        (0..n)
            .map(|_| {
                let d = 10f64.powf(rng.gen_range(1.0..4.0));
                let sigma = self.sigma_at(d);
                let z: f64 = StandardNormal.sample(&mut rng);
                let x = (-0.5 * sigma * sigma + sigma * z).exp();
                let s = (self.fit.speed(d) / x).min(MAX_SPEED_KM_PER_MS);
                PropagationSample { distance_km: d, min_rtt_ms: d / s }
            })
            .collect()
    }

    /// Rebuilds the shipped default model from scratch.
    pub fn default_model() -> Result<PropagationModel> {
        let samples = SyntheticCurve::default().samples(DEFAULT_CALIBRATION_SAMPLES, DEFAULT_CALIBRATION_SEED);
        build_model(&samples, &BuildOptions::default())
    }
}

/// Reads calibration samples from CSV with columns `distance_km,min_rtt_ms`.
pub fn read_samples_csv(path: impl AsRef<Path>) -> Result<Vec<PropagationSample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
