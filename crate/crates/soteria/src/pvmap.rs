//! Process-variation maps: spatially correlated resonance-shift fields over
//! a die, plus per-MR tuning remedies and their power cost.
//!
//! A map is the sum of three components in the VARIUS decomposition:
//! a systematic within-die field (Gaussian random field with spherical
//! covariance, correlation range = `density` x die edge), an independent
//! per-sample random within-die term, and one die-wide D2D offset. The
//! within-die std splits equally between the two WID components, so the
//! per-point marginal std is sqrt(sigma_wid^2 + sigma_d2d^2).
//!
//! The systematic field is drawn by circulant embedding: the covariance is
//! laid out on a 2x-padded torus, diagonalized with an FFT, negative
//! embedding eigenvalues are clipped, and the spectrum is rescaled so the
//! realized marginal variance is exact despite the clipping.

use crate::error::{Error, Result};
use crate::{domains, mix_seed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Carrier-injection (blue-shift) tuning power per nm of correction.
pub const RATE_INJECTION_UW_PER_NM: f64 = 216.0;
/// Thermal (red-shift) tuning power per nm of correction.
pub const RATE_HEATER_UW_PER_NM: f64 = 650.0;

/// Square die geometry and field resolution.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DieSpec {
    pub edge_mm: f64,
    /// Field samples per edge. 128 keeps adjacent in-bank MRs on correlated
    /// samples for a 20 mm die while staying fast; raise it to approach
    /// per-device resolution.
    pub grid_n: usize,
}

impl Default for DieSpec {
    fn default() -> Self {
        Self {
            edge_mm: 20.0,
            grid_n: 128,
        }
    }
}

impl DieSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.edge_mm.is_finite() || self.edge_mm <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "die edge must be positive and finite, got {}",
                self.edge_mm
            )));
        }
        if self.grid_n < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid_n must be at least 2, got {}",
                self.grid_n
            )));
        }
        Ok(())
    }
}

/// Process-variation magnitudes and the DWDM comb they disturb.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct PvParams {
    pub sigma_wid_nm: f64,
    pub sigma_d2d_nm: f64,
    /// Correlation-range fraction: range = density x die edge.
    pub density: f64,
    pub comb_start_nm: f64,
    pub channel_gap_nm: f64,
    pub n_wavelengths: usize,
}

impl Default for PvParams {
    fn default() -> Self {
        Self {
            sigma_wid_nm: 0.61,
            sigma_d2d_nm: 1.01,
            density: 0.5,
            comb_start_nm: 1550.0,
            channel_gap_nm: 0.8,
            n_wavelengths: 64,
        }
    }
}

impl PvParams {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma_wid_nm.is_finite()
            || self.sigma_wid_nm < 0.0
            || !self.sigma_d2d_nm.is_finite()
            || self.sigma_d2d_nm < 0.0
        {
            return Err(Error::InvalidParameter(
                "PV standard deviations must be non-negative".into(),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if !self.channel_gap_nm.is_finite() || self.channel_gap_nm <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "channel gap must be positive, got {}",
                self.channel_gap_nm
            )));
        }
        if self.n_wavelengths == 0 {
            return Err(Error::InvalidParameter(
                "n_wavelengths must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Per-point marginal std of a generated field.
    pub fn marginal_std_nm(&self) -> f64 {
        (self.sigma_wid_nm * self.sigma_wid_nm + self.sigma_d2d_nm * self.sigma_d2d_nm).sqrt()
    }
}

/// One die's resonance-shift field. Same seed + params reproduce the map
/// bit for bit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PvMap {
    pub seed: u64,
    pub die: DieSpec,
    pub params: PvParams,
    pub d2d_offset_nm: f64,
    field: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PvMapFile {
    kind: String,
    version: u32,
    map: PvMap,
}

/// Summary statistics over the total shift (field + D2D offset).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FieldStats {
    pub min_nm: f64,
    pub max_nm: f64,
    pub mean_nm: f64,
    pub std_nm: f64,
}

impl PvMap {
    pub(crate) fn from_parts(
        seed: u64,
        die: DieSpec,
        params: PvParams,
        d2d_offset_nm: f64,
        field: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(field.len(), die.grid_n * die.grid_n);
        Self {
            seed,
            die,
            params,
            d2d_offset_nm,
            field,
        }
    }

    pub fn grid_n(&self) -> usize {
        self.die.grid_n
    }

    /// Row-major field samples (WID components only, no D2D offset).
    pub fn field(&self) -> &[f64] {
        &self.field
    }

    /// Total shift at (x, y) mm: bilinear interpolation of the field plus
    /// the die-wide offset.
    pub fn sample_shift(&self, x_mm: f64, y_mm: f64) -> Result<f64> {
        let edge = self.die.edge_mm;
        if !(0.0..=edge).contains(&x_mm) || !(0.0..=edge).contains(&y_mm) {
            return Err(Error::OutOfDie {
                x: x_mm,
                y: y_mm,
                edge,
            });
        }
        let n = self.die.grid_n;
        let h = edge / (n - 1) as f64;
        let (i0, fx) = cell_of(x_mm, h, n);
        let (j0, fy) = cell_of(y_mm, h, n);
        let at = |i: usize, j: usize| self.field[j * n + i];
        let top = at(i0, j0) * (1.0 - fx) + at(i0 + 1, j0) * fx;
        let bot = at(i0, j0 + 1) * (1.0 - fx) + at(i0 + 1, j0 + 1) * fx;
        Ok(top * (1.0 - fy) + bot * fy + self.d2d_offset_nm)
    }

    pub fn stats(&self) -> FieldStats {
        let n = self.field.len() as f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in &self.field {
            let t = v + self.d2d_offset_nm;
            min = min.min(t);
            max = max.max(t);
            sum += t;
        }
        let mean = sum / n;
        let var = self
            .field
            .iter()
            .map(|&v| {
                let d = v + self.d2d_offset_nm - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        FieldStats {
            min_nm: min,
            max_nm: max,
            mean_nm: mean,
            std_nm: var.sqrt(),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = PvMapFile {
            kind: "pvmap".into(),
            version: 1,
            map: self.clone(),
        };
        let out = serde_json::to_string(&file)?;
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PvMapFile = serde_json::from_str(&text)?;
        if file.kind != "pvmap" || file.version != 1 {
            return Err(Error::InvalidParameter(format!(
                "not a version-1 pvmap artifact: kind {:?} version {}",
                file.kind, file.version
            )));
        }
        Ok(file.map)
    }
}

/// Grid cell and fractional offset for one coordinate; the top edge folds
/// into the last cell so `edge_mm` itself stays in bounds.
fn cell_of(v: f64, h: f64, n: usize) -> (usize, f64) {
    let t = v / h;
    let mut i = t.floor() as usize;
    if i >= n - 1 {
        i = n - 2;
    }
    (i, t - i as f64)
}

/// Re-usable sampler: the spectral decomposition depends only on die and
/// params, so batch generation shares it across seeds.
pub struct FieldSampler {
    die: DieSpec,
    params: PvParams,
    m: usize,
    sqrt_lambda: Vec<f64>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl FieldSampler {
    pub fn new(die: DieSpec, params: PvParams) -> Result<Self> {
        die.validate()?;
        params.validate()?;
        let n = die.grid_n;
        let m = (2 * n).next_power_of_two();
        let sigma_sys = params.sigma_wid_nm / std::f64::consts::SQRT_2;
        let mut planner = FftPlanner::new();
        let fft_forward = planner.plan_fft_forward(m);
        let fft_inverse = planner.plan_fft_inverse(m);

        let sqrt_lambda = if sigma_sys > 0.0 {
            let h = die.edge_mm / (n - 1) as f64;
            let range = params.density * die.edge_mm;
            let var = sigma_sys * sigma_sys;
            let mut cov = vec![Complex::new(0.0, 0.0); m * m];
            for j in 0..m {
                let dy = j.min(m - j) as f64 * h;
                for i in 0..m {
                    let dx = i.min(m - i) as f64 * h;
                    let d = dx.hypot(dy);
                    cov[j * m + i] = Complex::new(var * spherical(d / range), 0.0);
                }
            }
            fft2(&mut cov, m, &fft_forward);
            // Imaginary parts are FFT round-off on a symmetric real input.
            let mut lambda: Vec<f64> = cov.iter().map(|c| c.re.max(0.0)).collect();
            let realized = lambda.iter().sum::<f64>() / (m * m) as f64;
            let scale = var / realized;
            for l in &mut lambda {
                *l = (*l * scale).sqrt();
            }
            lambda
        } else {
            vec![0.0; m * m]
        };

        Ok(Self {
            die,
            params,
            m,
            sqrt_lambda,
            fft_inverse,
        })
    }

    /// Draws one map. RNG order is fixed (offset, spectral noise, random
    /// WID noise) so maps are reproducible per seed.
    pub fn sample(&self, seed: u64) -> PvMap {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, domains::PVMAP));
        let n = self.die.grid_n;
        let m = self.m;
        let sigma_sys = self.params.sigma_wid_nm / std::f64::consts::SQRT_2;
        let sigma_rand = sigma_sys;

        let d2d_offset_nm = self.params.sigma_d2d_nm * rng.sample::<f64, _>(StandardNormal);

        let mut field = vec![0.0f64; n * n];
        if sigma_sys > 0.0 {
            let mut buf = vec![Complex::new(0.0, 0.0); m * m];
            for (slot, &amp) in buf.iter_mut().zip(self.sqrt_lambda.iter()) {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                *slot = Complex::new(a * amp, b * amp);
            }
            fft2(&mut buf, m, &self.fft_inverse);
            let norm = 1.0 / m as f64;
            for j in 0..n {
                for i in 0..n {
                    field[j * n + i] = buf[j * m + i].re * norm;
                }
            }
        }
        if sigma_rand > 0.0 {
            for v in &mut field {
                *v += sigma_rand * rng.sample::<f64, _>(StandardNormal);
            }
        }

        PvMap::from_parts(seed, self.die, self.params, d2d_offset_nm, field)
    }
}

/// Spherical covariance profile, 1 at u=0 falling to 0 at u=1.
fn spherical(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        1.0 - 1.5 * u + 0.5 * u * u * u
    }
}

/// In-place 2D transform: rows, transpose, rows, transpose.
fn fft2(buf: &mut [Complex<f64>], m: usize, fft: &Arc<dyn Fft<f64>>) {
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(m) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(buf, m);
    for row in buf.chunks_exact_mut(m) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(buf, m);
}

fn transpose_square(buf: &mut [Complex<f64>], m: usize) {
    for j in 0..m {
        for i in (j + 1)..m {
            buf.swap(j * m + i, i * m + j);
        }
    }
}

/// One-shot map generation.
pub fn generate_pv_map(seed: u64, die: DieSpec, params: PvParams) -> Result<PvMap> {
    Ok(FieldSampler::new(die, params)?.sample(seed))
}

/// Batch generation over many seeds, sharing one spectral plan. Maps are
/// seed-independent draws, so the parallel and sequential paths return
/// identical results.
#[cfg(feature = "parallel")]
pub fn generate_batch(seeds: &[u64], die: DieSpec, params: PvParams) -> Result<Vec<PvMap>> {
    use rayon::prelude::*;
    let sampler = FieldSampler::new(die, params)?;
    Ok(seeds.par_iter().map(|&s| sampler.sample(s)).collect())
}

#[cfg(not(feature = "parallel"))]
pub fn generate_batch(seeds: &[u64], die: DieSpec, params: PvParams) -> Result<Vec<PvMap>> {
    generate_batch_sequential(seeds, die, params)
}

pub fn generate_batch_sequential(
    seeds: &[u64],
    die: DieSpec,
    params: PvParams,
) -> Result<Vec<PvMap>> {
    let sampler = FieldSampler::new(die, params)?;
    Ok(seeds.iter().map(|&s| sampler.sample(s)).collect())
}

/// How an MR is pulled back onto the nearest comb channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TuningDirection {
    /// Heat the ring to shift its resonance red (toward longer wavelength).
    RedShiftHeater,
    /// Inject carriers to shift the resonance blue.
    BlueShiftInjection,
    /// Already on channel.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningAction {
    pub direction: TuningDirection,
    pub distance_nm: f64,
    pub power_uw: f64,
}

/// Locks an MR to the nearest comb channel. The residual keeps the sign of
/// the shift at exact half-gap ties, so +gap/2 stays an injection remedy
/// and -gap/2 a heater remedy.
pub fn remedy_tuning(shift_nm: f64, params: &PvParams) -> TuningAction {
    let gap = params.channel_gap_nm;
    let t = shift_nm / gap;
    let k = if (t - t.trunc()).abs() == 0.5 {
        t.trunc()
    } else {
        t.round()
    };
    let r = shift_nm - k * gap;
    if r > 0.0 {
        TuningAction {
            direction: TuningDirection::BlueShiftInjection,
            distance_nm: r,
            power_uw: RATE_INJECTION_UW_PER_NM * r,
        }
    } else if r < 0.0 {
        TuningAction {
            direction: TuningDirection::RedShiftHeater,
            distance_nm: -r,
            power_uw: RATE_HEATER_UW_PER_NM * (-r),
        }
    } else {
        TuningAction {
            direction: TuningDirection::None,
            distance_nm: 0.0,
            power_uw: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_params() -> PvParams {
        PvParams {
            sigma_wid_nm: 0.0,
            sigma_d2d_nm: 0.0,
            ..PvParams::default()
        }
    }

    #[test]
    fn zero_variance_gives_zero_field() {
        let map = generate_pv_map(3, DieSpec::default(), zero_params()).unwrap();
        assert!(map.field().iter().all(|&v| v == 0.0));
        assert_eq!(map.d2d_offset_nm, 0.0);
    }

    #[test]
    fn same_seed_reproduces_identical_map() {
        let die = DieSpec {
            edge_mm: 20.0,
            grid_n: 64,
        };
        let a = generate_pv_map(42, die, PvParams::default()).unwrap();
        let b = generate_pv_map(42, die, PvParams::default()).unwrap();
        assert_eq!(a.field(), b.field());
        assert_eq!(a.d2d_offset_nm, b.d2d_offset_nm);
        let c = generate_pv_map(43, die, PvParams::default()).unwrap();
        assert_ne!(a.field(), c.field());
    }

    #[test]
    fn batch_matches_sequential() {
        let die = DieSpec {
            edge_mm: 20.0,
            grid_n: 32,
        };
        let seeds: Vec<u64> = (0..6).collect();
        let par = generate_batch(&seeds, die, PvParams::default()).unwrap();
        let seq = generate_batch_sequential(&seeds, die, PvParams::default()).unwrap();
        for (a, b) in par.iter().zip(&seq) {
            assert_eq!(a.field(), b.field());
            assert_eq!(a.d2d_offset_nm, b.d2d_offset_nm);
        }
    }

    #[test]
    fn sample_shift_interpolates() {
        let die = DieSpec {
            edge_mm: 10.0,
            grid_n: 3,
        };
        // 3x3 grid: flat top row with values 1, 3, 5 at x = 0, 5, 10.
        let field = vec![1.0, 3.0, 5.0, 1.0, 3.0, 5.0, 1.0, 3.0, 5.0];
        let map = PvMap::from_parts(0, die, zero_params(), 0.3, field);
        // Grid node: exact value plus offset.
        assert!((map.sample_shift(5.0, 0.0).unwrap() - 3.3).abs() < 1e-12);
        // Midpoint of a flat row: average of the two nodes plus offset.
        assert!((map.sample_shift(2.5, 5.0).unwrap() - 2.3).abs() < 1e-12);
        // Top boundary is inside the die.
        assert!((map.sample_shift(10.0, 10.0).unwrap() - 5.3).abs() < 1e-12);
        assert!(map.sample_shift(10.01, 0.0).is_err());
        assert!(map.sample_shift(-0.01, 0.0).is_err());
    }

    #[test]
    fn constant_offset_dominates_zero_field() {
        let die = DieSpec {
            edge_mm: 10.0,
            grid_n: 4,
        };
        let map = PvMap::from_parts(0, die, zero_params(), 0.3, vec![0.0; 16]);
        for &(x, y) in &[(0.0, 0.0), (3.3, 7.7), (10.0, 10.0)] {
            assert!((map.sample_shift(x, y).unwrap() - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn pooled_moments_match_configured_marginal() {
        let die = DieSpec {
            edge_mm: 20.0,
            grid_n: 64,
        };
        let params = PvParams::default();
        let maps = generate_batch_sequential(&(0..40).collect::<Vec<_>>(), die, params).unwrap();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut count = 0usize;
        for map in &maps {
            for &v in map.field() {
                let t = v + map.d2d_offset_nm;
                sum += t;
                sumsq += t * t;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let std = (sumsq / count as f64 - mean * mean).sqrt();
        let target = params.marginal_std_nm();
        assert!(mean.abs() < 0.1 * target, "pooled mean {mean} too far from 0");
        assert!(
            (std - target).abs() < 0.10 * target,
            "pooled std {std} vs target {target}"
        );
    }

    #[test]
    fn remedy_pins_published_tuning_powers() {
        let params = PvParams::default();
        let a = remedy_tuning(0.4, &params);
        assert_eq!(a.direction, TuningDirection::BlueShiftInjection);
        assert_eq!(a.power_uw, 86.4);
        let b = remedy_tuning(-0.4, &params);
        assert_eq!(b.direction, TuningDirection::RedShiftHeater);
        assert_eq!(b.power_uw, 260.0);
        let c = remedy_tuning(0.0, &params);
        assert_eq!(c.direction, TuningDirection::None);
        assert_eq!(c.power_uw, 0.0);
        // +1.0 nm is nearest the second channel: residual +0.2 nm, injection.
        let d = remedy_tuning(1.0, &params);
        assert_eq!(d.direction, TuningDirection::BlueShiftInjection);
        assert!((d.distance_nm - 0.2).abs() < 1e-12);
        assert!((d.power_uw - 43.2).abs() < 1e-9);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join("soteria-pvmap-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("map.json");
        let die = DieSpec {
            edge_mm: 20.0,
            grid_n: 16,
        };
        let map = generate_pv_map(9, die, PvParams::default()).unwrap();
        map.save_json(&path).unwrap();
        let back = PvMap::load_json(&path).unwrap();
        assert_eq!(map.field(), back.field());
        assert_eq!(map.d2d_offset_nm, back.d2d_offset_nm);
        assert_eq!(map.seed, back.seed);
    }

    proptest! {
        #[test]
        fn remedy_never_exceeds_half_gap(shift in -3.2f64..=3.2) {
            let params = PvParams::default();
            let act = remedy_tuning(shift, &params);
            prop_assert!(act.distance_nm <= params.channel_gap_nm / 2.0 + 1e-12);
            prop_assert!(act.power_uw >= 0.0);
            prop_assert_eq!(act.distance_nm == 0.0, act.direction == TuningDirection::None);
        }

        #[test]
        fn remedy_power_monotone_in_distance(a in -3.2f64..=3.2, b in -3.2f64..=3.2) {
            let params = PvParams::default();
            let ra = remedy_tuning(a, &params);
            let rb = remedy_tuning(b, &params);
            if ra.direction == rb.direction && ra.distance_nm <= rb.distance_nm {
                prop_assert!(ra.power_uw <= rb.power_uw);
            }
        }
    }
}
