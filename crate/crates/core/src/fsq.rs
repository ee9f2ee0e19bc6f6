//! Finite scalar quantization.
//!
//! Each dimension `d` has `L_d` evenly spaced grid points on `[-1, 1]`:
//! `-1 + 2i / (L_d - 1)` for `i = 0..L_d`. A vector quantizes by clamping
//! each coordinate to `[-1, 1]` and snapping it to the nearest grid point,
//! with exact midpoints going to the lower grid position. The product of
//! the per-dimension grids is the codebook; codes are numbered in
//! little-endian mixed radix (dimension 0 varies fastest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance, in grid units, for treating a coordinate as a midpoint tie
/// or as lying on the grid.
const GRID_EPS: f64 = 1e-9;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 16_000.0;
pub const DEFAULT_DOWNSAMPLE_RATIO: f64 = 320.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsqConfig {
    levels: Vec<u32>,
    sample_rate_hz: f64,
    downsample_ratio: f64,
}

impl Default for FsqConfig {
    /// 8 dimensions at 4 levels each (65536 codes), 16 kHz / 320 = 50 tokens/s.
    fn default() -> Self {
        Self { levels: vec![4; 8], sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ, downsample_ratio: DEFAULT_DOWNSAMPLE_RATIO }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FsqCode {
    pub values: Vec<f64>,
    pub index: u64,
}

impl FsqConfig {
    pub fn new(levels: Vec<u32>) -> Result<Self> {
        Self { levels, ..Self::default() }.validated()
    }

    pub fn with_rate(mut self, sample_rate_hz: f64, downsample_ratio: f64) -> Result<Self> {
        self.sample_rate_hz = sample_rate_hz;
        self.downsample_ratio = downsample_ratio;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        if self.levels.is_empty() {
            return Err(Error::config("FSQ needs at least one dimension"));
        }
        if let Some(l) = self.levels.iter().find(|&&l| l < 2) {
            return Err(Error::config(format!("FSQ level count must be >= 2, got {l}")));
        }
        if self.levels.iter().try_fold(1u64, |acc, &l| acc.checked_mul(l as u64)).is_none() {
            return Err(Error::config("FSQ codebook size overflows u64"));
        }
        if !(self.sample_rate_hz > 0.0 && self.downsample_ratio > 0.0) {
            return Err(Error::config("sample rate and downsample ratio must be positive"));
        }
        Ok(self)
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn codebook_size(&self) -> u64 {
        self.levels.iter().map(|&l| l as u64).product()
    }

    pub fn token_rate_hz(&self) -> f64 {
        self.sample_rate_hz / self.downsample_ratio
    }

    /// Grid value at position `i` of dimension `d`.
    pub fn grid_value(&self, d: usize, i: u32) -> f64 {
        let top = (self.levels[d] - 1) as f64;
        (2.0 * i as f64 - top) / top
    }

    pub fn grid(&self, d: usize) -> Vec<f64> {
        (0..self.levels[d]).map(|i| self.grid_value(d, i)).collect()
    }

    /// Half the distance between adjacent grid points of dimension `d`.
    pub fn half_spacing(&self, d: usize) -> f64 {
        1.0 / (self.levels[d] - 1) as f64
    }

    /// Nearest grid position of a clamped coordinate; midpoints go down.
    fn snap(&self, d: usize, x: f64) -> u32 {
        let top = self.levels[d] - 1;
        let u = (x.clamp(-1.0, 1.0) + 1.0) * top as f64 / 2.0;
        let base = u.floor();
        let pos = if u - base > 0.5 + GRID_EPS { base as u32 + 1 } else { base as u32 };
        pos.min(top)
    }

    pub fn quantize(&self, h: &[f64]) -> Result<FsqCode> {
        self.check_dim(h.len())?;
        if let Some(x) = h.iter().find(|x| !x.is_finite()) {
            return Err(Error::domain(format!("non-finite FSQ input {x}")));
        }
        let positions: Vec<u32> = h.iter().enumerate().map(|(d, &x)| self.snap(d, x)).collect();
        Ok(FsqCode { values: self.values_of(&positions), index: self.positions_to_index(&positions) })
    }

    /// Grid positions of an on-grid vector.
    pub fn positions(&self, values: &[f64]) -> Result<Vec<u32>> {
        self.check_dim(values.len())?;
        values
            .iter()
            .enumerate()
            .map(|(d, &v)| {
                let top = (self.levels[d] - 1) as f64;
                let u = (v + 1.0) * top / 2.0;
                let r = u.round();
                if !v.is_finite() || (u - r).abs() > GRID_EPS || r < 0.0 || r > top {
                    Err(Error::domain(format!("coordinate {v} of dimension {d} is not on the grid")))
                } else {
                    Ok(r as u32)
                }
            })
            .collect()
    }

    pub fn codes_to_index(&self, values: &[f64]) -> Result<u64> {
        Ok(self.positions_to_index(&self.positions(values)?))
    }

    pub fn index_to_codes(&self, index: u64) -> Result<Vec<f64>> {
        Ok(self.values_of(&self.index_to_positions(index)?))
    }

    pub fn positions_to_index(&self, positions: &[u32]) -> u64 {
        positions
            .iter()
            .zip(&self.levels)
            .rev()
            .fold(0u64, |acc, (&p, &l)| acc * l as u64 + p as u64)
    }

    pub fn index_to_positions(&self, index: u64) -> Result<Vec<u32>> {
        if index >= self.codebook_size() {
            return Err(Error::domain(format!("index {index} outside codebook of size {}", self.codebook_size())));
        }
        let mut rest = index;
        Ok(self
            .levels
            .iter()
            .map(|&l| {
                let p = (rest % l as u64) as u32;
                rest /= l as u64;
                p
            })
            .collect())
    }

    fn values_of(&self, positions: &[u32]) -> Vec<f64> {
        positions.iter().enumerate().map(|(d, &p)| self.grid_value(d, p)).collect()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::domain(format!("expected {} coordinates, got {n}", self.dim())));
        }
        Ok(())
    }
}

/// Outcome of the exhaustive index round trip.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BijectionReport {
    pub checked: u64,
    pub mismatches: u64,
}

/// Round-trips every index through `index_to_codes` and `codes_to_index`,
/// and re-quantizes every decoded vector.
pub fn check_bijection(cfg: &FsqConfig) -> BijectionReport {
    let n = cfg.codebook_size();
    let mismatches = (0..n)
        .filter(|&i| {
            let ok = cfg.index_to_codes(i).ok().is_some_and(|v| {
                cfg.codes_to_index(&v).ok() == Some(i) && cfg.quantize(&v).map(|c| c.index).ok() == Some(i)
            });
            !ok
        })
        .count() as u64;
    BijectionReport { checked: n, mismatches }
}

/// Expected fraction of codes hit at least once by `samples` vectors drawn
/// uniformly from `[-1, 1]^dim`. Edge cells are half as wide as interior
/// ones, so corner codes are the rarest.
pub fn expected_uniform_coverage(cfg: &FsqConfig, samples: u64) -> f64 {
    // per-dimension cell probabilities: edges 1/(2(L-1)), interior 1/(L-1)
    let mut total = 0.0;
    let n = cfg.codebook_size();
    for i in 0..n {
        let pos = cfg.index_to_positions(i).expect("in range");
        let p: f64 = pos
            .iter()
            .zip(cfg.levels())
            .map(|(&q, &l)| {
                let w = 1.0 / (l - 1) as f64;
                if q == 0 || q == l - 1 {
                    w / 2.0
                } else {
                    w
                }
            })
            .product();
        total += 1.0 - (samples as f64 * (-p).ln_1p()).exp();
    }
    total / n as f64
}
