//! Count-data experiments: quantile zero insertion, Dirichlet–multinomial
//! simulation, scale-and-ceil quantization and a zero-free generator.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{CensoringMask, CountMatrix, DetectionLimits};
use crate::error::{contract, domain, CodaError, Result};
use crate::impute::ceil_tolerant;

/// Which columns receive zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRule {
    /// 0-based odd indices 1, 3, 5, …
    EverySecond,
    Explicit(Vec<usize>),
}

impl ColumnRule {
    pub fn resolve(&self, ncols: usize) -> Result<Vec<usize>> {
        match self {
            ColumnRule::EverySecond => Ok((1..ncols).step_by(2).collect()),
            ColumnRule::Explicit(cols) => {
                if let Some(c) = cols.iter().find(|c| **c >= ncols) {
                    return contract(format!("column {c} out of range for {ncols} columns"));
                }
                let mut v = cols.clone();
                v.sort_unstable();
                v.dedup();
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroInsertionPlan {
    pub quantile_p: f64,
    pub target_columns: Vec<usize>,
    pub realized_mask: CensoringMask,
    /// Per-column threshold on targeted columns, column minimum elsewhere.
    pub realized_dl: DetectionLimits,
    /// Zeroed cells over cells in targeted columns.
    pub realized_zero_rate: f64,
}

/// Linear-interpolation quantile of sorted data: h = (n−1)p.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Zeroes every cell of a targeted column lying strictly below that column's
/// p-quantile and records the threshold as the detection limit.
pub fn insert_zeros(counts: &CountMatrix, p: f64, columns: &ColumnRule) -> Result<(CountMatrix, ZeroInsertionPlan)> {
    if !(p > 0.0 && p < 1.0) {
        return contract(format!("p must lie in (0, 1), got {p}"));
    }
    let (n, d) = (counts.nrows(), counts.ncols());
    if n == 0 || d == 0 {
        return contract("empty count matrix");
    }
    let c = counts.counts();
    if c.iter().any(|v| *v == 0) {
        return domain("zero insertion needs a zero-free count matrix");
    }
    let targets = columns.resolve(d)?;
    let mut out = c.clone();
    let mut mask = DMatrix::from_element(n, d, false);
    let mut limits = vec![0.0; d];
    let mut zeroed = 0usize;
    for j in 0..d {
        let mut col: Vec<f64> = c.column(j).iter().map(|v| *v as f64).collect();
        col.sort_by(f64::total_cmp);
        if targets.binary_search(&j).is_err() {
            limits[j] = col[0];
            continue;
        }
        let threshold = quantile_sorted(&col, p);
        limits[j] = threshold;
        for i in 0..n {
            if (c[(i, j)] as f64) < threshold {
                out[(i, j)] = 0;
                mask[(i, j)] = true;
                zeroed += 1;
            }
        }
    }
    let rate = if targets.is_empty() { 0.0 } else { zeroed as f64 / (targets.len() * n) as f64 };
    let plan = ZeroInsertionPlan {
        quantile_p: p,
        target_columns: targets,
        realized_mask: mask,
        realized_dl: DetectionLimits::broadcast(&limits, n)?,
        realized_zero_rate: rate,
    };
    Ok((counts.with_counts(out), plan))
}

/// Dirichlet–multinomial design: `n` rows of `depth` reads each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmSpec {
    pub alpha: Vec<f64>,
    pub depth: u64,
    pub n: usize,
}

impl DmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() < 2 || self.alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return contract("alpha needs at least two positive entries");
        }
        if self.depth == 0 || self.n == 0 {
            return contract("depth and n must be at least 1");
        }
        Ok(())
    }
}

/// Dirichlet draw via normalised Gamma variates.
pub fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let gamma = Gamma::new(a, 1.0).map_err(|e| CodaError::Contract(format!("Gamma({a}): {e}")))?;
        g.push(gamma.sample(rng));
    }
    let total: f64 = g.iter().sum();
    if !(total > 0.0) {
        return Err(CodaError::Degenerate("all Gamma draws underflowed".into()));
    }
    Ok(g.into_iter().map(|v| v / total).collect())
}

/// Multinomial draw by sequential binomial splitting.
pub fn multinomial<R: Rng + ?Sized>(trials: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    let mut out = vec![0u64; probs.len()];
    let mut left = trials;
    let mut mass: f64 = probs.iter().sum();
    for (k, &q) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = left;
            break;
        }
        let pr = if mass > 0.0 { (q / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, pr).map_err(|e| CodaError::Contract(e.to_string()))?;
        out[k] = draw.sample(rng);
        left -= out[k];
        mass -= q;
    }
    Ok(out)
}

/// Each row: q ~ Dirichlet(alpha), counts ~ Multinomial(depth, q).
pub fn simulate_dm<R: Rng + ?Sized>(spec: &DmSpec, rng: &mut R) -> Result<CountMatrix> {
    spec.validate()?;
    let d = spec.alpha.len();
    let mut counts = DMatrix::<u64>::zeros(spec.n, d);
    for i in 0..spec.n {
        let q = dirichlet(&spec.alpha, rng)?;
        let row = multinomial(spec.depth, &q, rng)?;
        for (j, v) in row.into_iter().enumerate() {
            counts[(i, j)] = v;
        }
    }
    Ok(CountMatrix::from_counts(counts))
}

/// Each cell becomes ⌈scale·value⌉.
pub fn quantize_scale(counts: &CountMatrix, scale: f64) -> Result<CountMatrix> {
    if !(scale > 0.0) || !scale.is_finite() {
        return contract(format!("scale must be positive, got {scale}"));
    }
    let q = counts.counts().map(|v| ceil_tolerant(scale * v as f64) as u64);
    Ok(counts.with_counts(q))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleSummary {
    pub scale: f64,
    /// log10 of the ratio of the first two column means over kept rows.
    pub mean_lr: Option<f64>,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub scale: f64,
    pub sample_id: usize,
    pub lr_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTable {
    pub summaries: Vec<ScaleSummary>,
    pub shifts: Vec<ShiftRow>,
}

impl ShiftTable {
    pub fn write_shifts<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.shifts {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_means<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["scale", "mean_lr", "kept", "dropped"])?;
        for s in &self.summaries {
            let mean = s.mean_lr.map(|v| format!("{v}")).unwrap_or_default();
            wr.write_record([s.scale.to_string(), mean, s.kept.to_string(), s.dropped.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Simulates one DM matrix, quantizes it at each scale and tracks the log10
/// ratio of the first two parts. Rows with a zero in either part are dropped
/// at that scale; shifts are relative to scale 1 (the raw counts).
pub fn logratio_shift_experiment<R: Rng + ?Sized>(spec: &DmSpec, scales: &[f64], rng: &mut R) -> Result<ShiftTable> {
    if scales.is_empty() {
        return contract("at least one scale is required");
    }
    let counts = simulate_dm(spec, rng)?;
    let ratio = |m: &CountMatrix, i: usize| {
        let c = m.counts();
        (c[(i, 0)] > 0 && c[(i, 1)] > 0).then(|| (c[(i, 0)] as f64 / c[(i, 1)] as f64).log10())
    };
    let base: Vec<Option<f64>> = (0..spec.n).map(|i| ratio(&counts, i)).collect();
    let mut summaries = Vec::new();
    let mut shifts = Vec::new();
    for &scale in scales {
        let q = quantize_scale(&counts, scale)?;
        let (mut s1, mut s2, mut kept) = (0.0, 0.0, 0usize);
        for (i, b) in base.iter().enumerate() {
            let Some(lr) = ratio(&q, i) else { continue };
            kept += 1;
            s1 += q.counts()[(i, 0)] as f64;
            s2 += q.counts()[(i, 1)] as f64;
            if let Some(b) = b {
                shifts.push(ShiftRow { scale, sample_id: i, lr_shift: lr - b });
            }
        }
        summaries.push(ScaleSummary {
            scale,
            mean_lr: (kept > 0).then(|| (s1 / s2).log10()),
            kept,
            dropped: spec.n - kept,
        });
    }
    Ok(ShiftTable { summaries, shifts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroFree {
    pub counts: CountMatrix,
    /// Depth actually used after any doublings.
    pub depth: u64,
    pub doublings: u32,
}

const MAX_DOUBLINGS: u32 = 10;

/// Bayesian smoothing: row i gets p_i ~ Dirichlet(n_i + ½), then
/// round-half-up(p_i·depth). The depth is doubled (same draws) while any zero
/// remains, at most ten times.
pub fn make_zero_free<R: Rng + ?Sized>(counts: &CountMatrix, depth_full: u64, rng: &mut R) -> Result<ZeroFree> {
    if depth_full == 0 {
        return contract("depth_full must be positive");
    }
    let (n, d) = (counts.nrows(), counts.ncols());
    let mut post = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        let alpha: Vec<f64> = counts.counts().row(i).iter().map(|c| *c as f64 + 0.5).collect();
        let p = dirichlet(&alpha, rng)?;
        for (j, v) in p.into_iter().enumerate() {
            post[(i, j)] = v;
        }
    }
    let mut depth = depth_full;
    for doublings in 0..=MAX_DOUBLINGS {
        let rounded = post.map(|p| (p * depth as f64 + 0.5).floor() as u64);
        if rounded.iter().all(|v| *v > 0) {
            return Ok(ZeroFree {
                counts: counts.with_counts(rounded),
                depth,
                doublings,
            });
        }
        if doublings < MAX_DOUBLINGS {
            depth = depth
                .checked_mul(2)
                .ok_or_else(|| CodaError::Degenerate("depth overflow while doubling".into()))?;
        }
    }
    Err(CodaError::Degenerate(format!(
        "zeros remain after {MAX_DOUBLINGS} doublings (depth {depth})"
    )))
}
