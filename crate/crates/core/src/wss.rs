//! Two-segment stationarity battery: rank-sum test on location,
//! Brown–Forsythe on spread, and an autocorrelation comparison with a
//! Monte-Carlo calibrated threshold.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::stats;
use crate::trace::Trace;

/// Replicates used to calibrate the acf threshold.
pub const ACF_NULL_REPLICATES: usize = 2000;
/// Above this combined length the large-sample null is used instead of
/// simulation.
pub const ACF_MC_MAX_LEN: usize = 200_000;
pub const DEFAULT_MAX_LAG: usize = 512;
const ACF_NULL_SEED: u64 = 0x5eed_acf0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// Set when the inputs carried no information (all tied, zero spread).
    pub degenerate: bool,
}

fn check_sizes(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::invalid(
            "samples",
            "each group needs at least 3 values",
        ));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples", "non-finite value"));
    }
    Ok(())
}

/// Midranks of the pooled sample plus the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = pooled.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[idx[j]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Counts of rank-sum values for subsets of size m drawn from 1..=n.
fn rank_sum_counts(m: usize, n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    // c[k][s]: subsets of size k with sum s
    let mut c = vec![vec![0.0; max + 1]; m + 1];
    c[0][0] = 1.0;
    for r in 1..=n {
        for k in (1..=m.min(r)).rev() {
            for s in (r..=max).rev() {
                c[k][s] += c[k - 1][s - r];
            }
        }
    }
    c.swap_remove(m)
}

/// Two-sided Wilcoxon rank-sum test; the statistic is the rank sum of `a`.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    check_sizes(a, b)?;
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let w: f64 = ranks[..na].iter().sum();

    if ties.len() == 1 && ties[0] == n {
        return Ok(TestOutcome {
            statistic: w,
            p_value: 1.0,
            degenerate: true,
        });
    }

    if n <= 20 && ties.is_empty() {
        let counts = rank_sum_counts(na, n);
        let total: f64 = counts.iter().sum();
        let wi = w.round() as usize;
        let lower: f64 = counts[..=wi].iter().sum::<f64>() / total;
        let upper: f64 = counts[wi..].iter().sum::<f64>() / total;
        return Ok(TestOutcome {
            statistic: w,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            degenerate: false,
        });
    }

    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let mu = naf * (nf + 1.0) / 2.0;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / (nf * (nf - 1.0));
    let var = naf * nbf / 12.0 * ((nf + 1.0) - tie_term);
    // continuity correction of one half
    let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(TestOutcome {
        statistic: w,
        p_value: (2.0 * stats::normal_sf(z)).min(1.0),
        degenerate: false,
    })
}

/// Brown–Forsythe test for equal spread: one-way F on absolute deviations
/// from each group's median.
pub fn brown_forsythe(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    check_sizes(a, b)?;
    let za: Vec<f64> = {
        let m = stats::median(a);
        a.iter().map(|x| (x - m).abs()).collect()
    };
    let zb: Vec<f64> = {
        let m = stats::median(b);
        b.iter().map(|x| (x - m).abs()).collect()
    };
    let (na, nb) = (za.len() as f64, zb.len() as f64);
    let n = na + nb;
    let (ma, mb) = (stats::mean(&za), stats::mean(&zb));
    let grand = (na * ma + nb * mb) / n;
    let between = na * (ma - grand).powi(2) + nb * (mb - grand).powi(2);
    let within: f64 = za.iter().map(|z| (z - ma).powi(2)).sum::<f64>()
        + zb.iter().map(|z| (z - mb).powi(2)).sum::<f64>();
    if within == 0.0 {
        return Ok(TestOutcome {
            statistic: if between == 0.0 { 0.0 } else { f64::INFINITY },
            p_value: 1.0,
            degenerate: true,
        });
    }
    let f = (n - 2.0) * between / within;
    let dist = FisherSnedecor::new(1.0, n - 2.0).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(TestOutcome {
        statistic: f,
        p_value: dist.sf(f).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Normalised autocorrelation at lags 0..=max_lag via zero-padded FFT.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let m = stats::mean(x);
    let len = (2 * x.len()).next_power_of_two();
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|v| Complex64::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 0.0) {
        return Err(Error::Assumption(
            "segment has zero variance, autocorrelation undefined".into(),
        ));
    }
    Ok(buf[..=max_lag].iter().map(|c| c.re / c0).collect())
}

fn acf_distance(a: &[f64], b: &[f64], max_lag: usize) -> Result<f64> {
    let ra = autocorrelation(a, max_lag)?;
    let rb = autocorrelation(b, max_lag)?;
    Ok((1..=max_lag)
        .map(|l| (ra[l] - rb[l]).abs())
        .fold(0.0, f64::max))
}

type NullKey = (usize, usize, usize);

fn null_cache() -> &'static Mutex<HashMap<NullKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<NullKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Sorted null statistics for white Gaussian pairs of these lengths.
fn acf_null(na: usize, nb: usize, max_lag: usize) -> Result<Arc<Vec<f64>>> {
    let key = (na, nb, max_lag);
    if let Some(v) = null_cache().lock().unwrap().get(&key) {
        return Ok(v.clone());
    }
    let mut stat: Vec<f64> = (0..ACF_NULL_REPLICATES)
        .into_par_iter()
        .map(|r| {
            let seed = ACF_NULL_SEED
                ^ (na as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
                ^ (nb as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
                ^ ((max_lag as u64) << 40)
                ^ (r as u64);
            let mut g = crate::synth::rng(seed);
            let a: Vec<f64> = (0..na).map(|_| g.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..nb).map(|_| g.sample(StandardNormal)).collect();
            acf_distance(&a, &b, max_lag)
        })
        .collect::<Result<_>>()?;
    stat.sort_by(f64::total_cmp);
    let stat = Arc::new(stat);
    null_cache().lock().unwrap().insert(key, stat.clone());
    Ok(stat)
}

/// Threshold on the acf distance with false-rejection probability `alpha`
/// for white Gaussian segments of lengths `na` and `nb`.
///
/// Short segments use simulated null statistics. Long ones use the
/// large-sample null where each lag difference is N(0, 1/na + 1/nb) and
/// lags are independent.
pub fn acf_threshold(na: usize, nb: usize, max_lag: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1)"));
    }
    if na + nb <= ACF_MC_MAX_LEN {
        let null = acf_null(na, nb, max_lag)?;
        Ok(stats::quantile_sorted(&null, 1.0 - alpha))
    } else {
        let per_lag = 1.0 - (1.0 - alpha).powf(1.0 / max_lag as f64);
        let z = stats::normal_quantile(1.0 - per_lag / 2.0);
        Ok(z * (1.0 / na as f64 + 1.0 / nb as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcfComparison {
    pub statistic: f64,
    pub max_lag: usize,
}

/// Largest absolute difference of normalised autocorrelations over lags
/// 1..=max_lag. Pair with [`acf_threshold`] for a decision.
pub fn acf_compare(a: &[f64], b: &[f64], max_lag: usize) -> Result<AcfComparison> {
    if max_lag == 0 || 4 * max_lag >= a.len().min(b.len()) {
        return Err(Error::invalid(
            "max_lag",
            "must be >= 1 and below min(|a|,|b|)/4",
        ));
    }
    Ok(AcfComparison {
        statistic: acf_distance(a, b, max_lag)?,
        max_lag,
    })
}

/// α-free part of the battery, so several α can share one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WssStatistics {
    pub wilcoxon: TestOutcome,
    pub brown_forsythe: TestOutcome,
    pub acf: AcfComparison,
    pub segment_lengths: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WssVerdict {
    pub wilcoxon_p: f64,
    pub brown_forsythe_p: f64,
    pub acf_stat: f64,
    pub acf_threshold: f64,
    pub alpha: f64,
    pub passed: bool,
    pub degenerate: bool,
}

pub fn default_max_lag(segment_len: usize) -> usize {
    (segment_len / 8).clamp(1, DEFAULT_MAX_LAG)
}

pub fn wss_statistics(trace: &Trace) -> Result<WssStatistics> {
    if trace.len() < 64 {
        return Err(Error::invalid("trace", "needs at least 64 samples"));
    }
    let (a, b) = trace.samples.split_at(trace.len() / 2);
    let lag = default_max_lag(a.len().min(b.len()));
    Ok(WssStatistics {
        wilcoxon: wilcoxon_rank_sum(a, b)?,
        brown_forsythe: brown_forsythe(a, b)?,
        acf: acf_compare(a, b, lag)?,
        segment_lengths: (a.len(), b.len()),
    })
}

impl WssStatistics {
    pub fn verdict(&self, alpha: f64) -> Result<WssVerdict> {
        let (na, nb) = self.segment_lengths;
        let thr = acf_threshold(na, nb, self.acf.max_lag, alpha)?;
        let wilcoxon_p = self.wilcoxon.p_value;
        let brown_forsythe_p = self.brown_forsythe.p_value;
        Ok(WssVerdict {
            wilcoxon_p,
            brown_forsythe_p,
            acf_stat: self.acf.statistic,
            acf_threshold: thr,
            alpha,
            passed: wilcoxon_p > alpha && brown_forsythe_p > alpha && self.acf.statistic < thr,
            degenerate: self.wilcoxon.degenerate || self.brown_forsythe.degenerate,
        })
    }
}

/// Splits the trace at its midpoint and runs all three tests.
pub fn wss_verdict(trace: &Trace, alpha: f64) -> Result<WssVerdict> {
    wss_statistics(trace)?.verdict(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockScanReport {
    pub block_count: usize,
    pub alphas: Vec<f64>,
    /// cumulative[a][i]: blocks 0..=i passing at alphas[a].
    pub cumulative: Vec<Vec<usize>>,
    pub pass_fraction: Vec<f64>,
    /// verdicts[i][a] for block i at alphas[a].
    pub verdicts: Vec<Vec<WssVerdict>>,
}

impl BlockScanReport {
    pub fn blocks_csv(&self, alpha_index: usize) -> String {
        let mut s = String::from("block_index,wilcoxon_p,bf_p,acf_stat,passed\n");
        for (i, v) in self.verdicts.iter().enumerate() {
            let v = &v[alpha_index];
            s.push_str(&format!(
                "{i},{:e},{:e},{:e},{}\n",
                v.wilcoxon_p, v.brown_forsythe_p, v.acf_stat, v.passed
            ));
        }
        s
    }

    pub fn cumulative_csv(&self) -> String {
        let mut s = String::from("block_index");
        for a in &self.alphas {
            s.push_str(&format!(",cum_pass_alpha_{a}"));
        }
        s.push('\n');
        for i in 0..self.block_count {
            s.push_str(&i.to_string());
            for c in &self.cumulative {
                s.push_str(&format!(",{}", c[i]));
            }
            s.push('\n');
        }
        s
    }
}

/// Runs the battery on every block, in parallel, at each α.
pub fn block_scan(blocks: &[Trace], alphas: &[f64]) -> Result<BlockScanReport> {
    if blocks.is_empty() {
        return Err(Error::invalid("blocks", "need at least one block"));
    }
    if alphas.is_empty() {
        return Err(Error::invalid(
            "alphas",
            "need at least one significance level",
        ));
    }
    let verdicts: Vec<Vec<WssVerdict>> = blocks
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let st = wss_statistics(b).map_err(|e| match e {
                Error::Validation { field, reason } => Error::Validation {
                    field: format!("block {i}: {field}"),
                    reason,
                },
                other => other,
            })?;
            alphas.iter().map(|&a| st.verdict(a)).collect()
        })
        .collect::<Result<_>>()?;
    let cumulative: Vec<Vec<usize>> = (0..alphas.len())
        .map(|a| {
            verdicts
                .iter()
                .scan(0, |acc, v| {
                    *acc += v[a].passed as usize;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let n = blocks.len();
    let pass_fraction = cumulative
        .iter()
        .map(|c| c[n - 1] as f64 / n as f64)
        .collect();
    Ok(BlockScanReport {
        block_count: n,
        alphas: alphas.to_vec(),
        cumulative,
        pass_fraction,
        verdicts,
    })
}
