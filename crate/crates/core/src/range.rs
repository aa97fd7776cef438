//! UWB range conditioning: moving-average smoothing followed by a RANSAC
//! consensus over a longer window of smoothed samples.
//!
//! Robot indices are zero-based inside the library. Files use one-based ids.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single raw distance sample between robots `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawRange {
    pub i: usize,
    pub j: usize,
    pub step: u64,
    pub distance: f64,
}

impl RawRange {
    pub fn new(i: usize, j: usize, step: u64, distance: f64) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidInput(format!(
                "range pair ({i},{j}) is a self-pair"
            )));
        }
        if !(distance >= 0.0) || !distance.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid range distance {distance}"
            )));
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        Ok(Self {
            i,
            j,
            step,
            distance,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub min_samples: usize,
    /// Meters.
    pub inlier_threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            min_samples: 5,
            inlier_threshold: 0.3,
            iterations: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Consensus {
    pub inliers: Vec<bool>,
    pub value: f64,
}

impl Consensus {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn check_pair(window: &[RawRange]) -> Result<()> {
    let first = window.first().ok_or(Error::EmptyWindow)?;
    if window.iter().any(|r| r.i != first.i || r.j != first.j) {
        return Err(Error::MixedPairs);
    }
    Ok(())
}

/// Arithmetic mean of the window's distances.
pub fn moving_average(window: &[RawRange]) -> Result<f64> {
    check_pair(window)?;
    Ok(mean(window.iter().map(|r| r.distance)).expect("non-empty"))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// RANSAC over RawRange samples of one pair; see [`ransac_values`].
pub fn ransac_filter(window: &[RawRange], params: &RansacParams) -> Result<Consensus> {
    check_pair(window)?;
    let values: Vec<f64> = window.iter().map(|r| r.distance).collect();
    ransac_values(&values, params)
}

/// Constant-model RANSAC. Each hypothesis is a single sample; inliers lie
/// within `inlier_threshold` of it. The largest consensus set wins and the
/// returned value is the mean of its inliers.
///
/// When the window is no longer than `iterations`, every sample is tried
/// once in order instead of drawing randomly, which visits the same
/// hypotheses a random search could and removes the seed dependence.
///
/// Fails with [`Error::NoConsensus`] when the best set has fewer than
/// `ceil(len / 2)` members.
pub fn ransac_values(values: &[f64], params: &RansacParams) -> Result<Consensus> {
    if values.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if values.len() < params.min_samples.max(1) {
        return Err(Error::WindowTooShort {
            got: values.len(),
            need: params.min_samples,
        });
    }
    let thr = params.inlier_threshold;
    let count = |h: f64| values.iter().filter(|&&v| (v - h).abs() <= thr).count();

    let mut best: Option<(usize, f64)> = None;
    let mut consider = |h: f64| {
        let c = count(h);
        if best.is_none_or(|(bc, _)| c > bc) {
            best = Some((c, h));
        }
    };
    if values.len() <= params.iterations {
        values.iter().for_each(|&h| consider(h));
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 0..params.iterations {
            consider(values[rng.random_range(0..values.len())]);
        }
    }
    let (support, hypothesis) = best.expect("at least one hypothesis");
    let needed = values.len().div_ceil(2);
    if support < needed {
        return Err(Error::NoConsensus { support, needed });
    }
    let inliers: Vec<bool> = values
        .iter()
        .map(|&v| (v - hypothesis).abs() <= thr)
        .collect();
    let value = mean(
        values
            .iter()
            .zip(&inliers)
            .filter(|(_, &keep)| keep)
            .map(|(&v, _)| v),
    )
    .expect("support > 0");
    Ok(Consensus { inliers, value })
}

/// Filtered inter-robot distances at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeSet {
    pub step: u64,
    n: usize,
    dist: Vec<f64>,
    valid: Vec<bool>,
}

impl RangeSet {
    /// All pairs masked.
    pub fn empty(step: u64, n: usize) -> Self {
        Self {
            step,
            n,
            dist: vec![0.0; n * n],
            valid: vec![false; n * n],
        }
    }

    /// Fully valid set from a dense symmetric matrix given row-major.
    pub fn from_matrix(step: u64, n: usize, matrix: &[f64]) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::InvalidInput("range matrix has wrong size".into()));
        }
        let mut set = Self::empty(step, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (matrix[i * n + j], matrix[j * n + i]);
                if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "range matrix not symmetric at ({i},{j})"
                    )));
                }
                set.set(i, j, a)?;
            }
        }
        Ok(set)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, i: usize, j: usize, d: f64) -> Result<()> {
        if i == j || i >= self.n || j >= self.n {
            return Err(Error::InvalidInput(format!(
                "bad pair ({i},{j}) for {} robots",
                self.n
            )));
        }
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::InvalidInput(format!("invalid range {d}")));
        }
        for (a, b) in [(i, j), (j, i)] {
            self.dist[a * self.n + b] = d;
            self.valid[a * self.n + b] = true;
        }
        Ok(())
    }

    pub fn invalidate(&mut self, i: usize, j: usize) {
        for (a, b) in [(i, j), (j, i)] {
            self.dist[a * self.n + b] = 0.0;
            self.valid[a * self.n + b] = false;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (i != j && self.valid[i * self.n + j]).then(|| self.dist[i * self.n + j])
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        i != j && self.valid[i * self.n + j]
    }

    pub fn num_pairs(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn num_valid_pairs(&self) -> usize {
        self.valid_pairs().count()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.num_valid_pairs() == self.num_pairs()
    }

    /// Unordered valid pairs `(i, j, r_ij)` with `i < j`.
    pub fn valid_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n).filter_map(move |j| self.get(i, j).map(|d| (i, j, d)))
        })
    }
}

/// Builds a RangeSet from per-pair filter results; `None` masks the pair.
pub fn assemble_range_set(
    step: u64,
    n: usize,
    pairs: &[(usize, usize, Option<f64>)],
) -> Result<RangeSet> {
    let mut set = RangeSet::empty(step, n);
    for &(i, j, d) in pairs {
        match d {
            Some(d) => set.set(i, j, d)?,
            None => {
                if i >= n || j >= n || i == j {
                    return Err(Error::InvalidInput(format!("bad pair ({i},{j})")));
                }
                set.invalidate(i, j)
            }
        }
    }
    Ok(set)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeFilterConfig {
    /// Raw samples per moving-average output.
    pub smoothing_window: usize,
    /// Smoothed samples per RANSAC window.
    pub ransac_window: usize,
    /// Center windows on the step instead of ending them there. A centered
    /// window removes the lag of a constant model at the cost of half a
    /// window of latency.
    pub centered: bool,
    pub ransac: RansacParams,
}

impl Default for RangeFilterConfig {
    fn default() -> Self {
        Self {
            smoothing_window: 5,
            ransac_window: 15,
            centered: true,
            ransac: RansacParams::default(),
        }
    }
}

/// Raw samples for one pair on a uniform sub-step grid. Sample `q` is taken
/// at `(first_index + q) · Δt / rate_multiple`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairStream {
    pub first_index: i64,
    pub values: Vec<f64>,
}

impl PairStream {
    fn get(&self, idx: i64) -> Option<f64> {
        let k = idx - self.first_index;
        (k >= 0)
            .then(|| self.values.get(k as usize).copied())
            .flatten()
    }
}

/// All raw range samples of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeLog {
    pub n: usize,
    /// Raw samples per pipeline step.
    pub rate_multiple: usize,
    pub pairs: BTreeMap<(usize, usize), PairStream>,
}

impl RangeLog {
    pub fn new(n: usize, rate_multiple: usize) -> Self {
        Self {
            n,
            rate_multiple: rate_multiple.max(1),
            pairs: BTreeMap::new(),
        }
    }

    /// Writes `step,i,j,distance` rows (one-based ids). Rows sharing a step
    /// and pair are consecutive sub-step samples in time order. Samples
    /// before step 0 are not written.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,i,j,distance")?;
        let k = self.rate_multiple as i64;
        let max_idx = self
            .pairs
            .values()
            .map(|p| p.first_index + p.values.len() as i64)
            .max()
            .unwrap_or(0);
        let mut idx = 0i64;
        while idx < max_idx {
            for (&(i, j), stream) in &self.pairs {
                if let Some(v) = stream.get(idx) {
                    writeln!(w, "{},{},{},{}", idx / k, i + 1, j + 1, v)?;
                }
            }
            idx += 1;
        }
        Ok(())
    }

    /// Parses the CSV written by [`RangeLog::write_csv`]. The sub-step rate is
    /// the largest number of rows any pair has within one step.
    pub fn read_csv<R: BufRead>(r: R) -> Result<RangeLog> {
        let mut rows: BTreeMap<(usize, usize), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
        let mut n = 0usize;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with("step") || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |what: &str| Error::Parse(format!("ranges line {}: {what}", lineno + 1));
            if f.len() != 4 {
                return Err(bad("expected step,i,j,distance"));
            }
            let step: u64 = f[0].parse().map_err(|_| bad("step"))?;
            let i: usize = f[1].parse().map_err(|_| bad("i"))?;
            let j: usize = f[2].parse().map_err(|_| bad("j"))?;
            let d: f64 = f[3].parse().map_err(|_| bad("distance"))?;
            if i == 0 || j == 0 {
                return Err(bad("robot ids are one-based"));
            }
            let raw = RawRange::new(i - 1, j - 1, step, d)?;
            n = n.max(raw.j + 1);
            rows.entry((raw.i, raw.j))
                .or_default()
                .entry(step)
                .or_default()
                .push(raw.distance);
        }
        let k = rows
            .values()
            .flat_map(|m| m.values().map(Vec::len))
            .max()
            .unwrap_or(1);
        let mut log = RangeLog::new(n, k);
        for (pair, by_step) in rows {
            let first_step = *by_step.keys().next().expect("non-empty");
            let last_step = *by_step.keys().last().expect("non-empty");
            let len = ((last_step - first_step + 1) as usize) * k;
            let mut values = vec![f64::NAN; len];
            for (step, samples) in by_step {
                let base = ((step - first_step) as usize) * k;
                // Pad short steps by repeating the last sample so the grid stays uniform.
                for q in 0..k {
                    values[base + q] = samples[q.min(samples.len() - 1)];
                }
            }
            log.pairs.insert(
                pair,
                PairStream {
                    first_index: first_step as i64 * k as i64,
                    values,
                },
            );
        }
        Ok(log)
    }
}

/// Runs smoothing and RANSAC for every pair at one pipeline step.
pub fn filter_step(log: &RangeLog, step: u64, cfg: &RangeFilterConfig) -> RangeSet {
    let mut set = RangeSet::empty(step, log.n);
    for (&(i, j), stream) in &log.pairs {
        if let Some(d) = filter_pair(stream, log.rate_multiple, step, i, j, cfg) {
            set.set(i, j, d)
                .expect("filtered ranges are finite and non-negative");
        }
    }
    set
}

/// Filtered range for one pair at `step`, or `None` when the window holds too
/// few samples or no majority consensus.
pub fn filter_pair(
    stream: &PairStream,
    rate_multiple: usize,
    step: u64,
    i: usize,
    j: usize,
    cfg: &RangeFilterConfig,
) -> Option<f64> {
    let k = rate_multiple.max(1) as i64;
    let center = step as i64 * k;
    let sw = cfg.smoothing_window.max(1) as i64;
    let rw = cfg.ransac_window.max(1) as i64;
    let (smooth_lo, smooth_back) = if cfg.centered {
        (center - (rw - 1) / 2, (sw - 1) / 2)
    } else {
        (center - (rw - 1), sw - 1)
    };
    let smoothed: Vec<f64> = (smooth_lo..smooth_lo + rw)
        .filter_map(|m| {
            let lo = m - smooth_back;
            let samples = (lo..lo + sw)
                .filter_map(|q| stream.get(q))
                .filter(|v| v.is_finite());
            // Only emit a smoothed value whose own raw sample exists.
            stream.get(m)?;
            mean(samples)
        })
        .collect();
    let mut params = cfg.ransac;
    params.seed = mix_seed(cfg.ransac.seed, &[step, i as u64, j as u64]);
    ransac_values(&smoothed, &params).ok().map(|c| c.value)
}

/// SplitMix-style mixing of a base seed with stream identifiers.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        z = z
            .wrapping_add(p.wrapping_mul(0xBF58_476D_1CE4_E5B9))
            .wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
