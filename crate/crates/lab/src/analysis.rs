//! Closed-form overflow bounds and the Monte Carlo experiments checked
//! against them.
//!
//! Binomial bounds come in two independent evaluations: exact big rationals
//! (for moderate `r`) and floating point through logarithms. Both are kept so
//! they can be compared.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use pyramid_oram::prn::route;
use pyramid_oram::{
    oblivious_build, HashFamily, PathSource, PyramidConfig, Region, Rng, RoutingSlot, Slot, Table, TraceRecorder, Zht,
    ZhtParams,
};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{LabError, Result};

/// Largest binomial lower index evaluated exactly.
pub const EXACT_MAX_R: u64 = 4096;
/// Largest lower index summed term by term in log space; beyond it `ln C`
/// comes from log-gamma.
pub const LOG_SUM_MAX_R: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Bound {
    pub exact: Option<BigRational>,
    pub float: f64,
}

impl Bound {
    /// The exact value rounded to `f64` when available.
    pub fn value(&self) -> f64 {
        self.exact.as_ref().and_then(|q| q.to_f64()).unwrap_or(self.float)
    }

    /// Relative difference between the two evaluations, if both exist.
    pub fn disagreement(&self) -> Option<f64> {
        let exact = self.exact.as_ref()?.to_f64()?;
        if exact == 0.0 && self.float == 0.0 {
            return Some(0.0);
        }
        Some(((exact - self.float) / exact).abs())
    }

    pub fn exact_string(&self) -> Option<String> {
        self.exact.as_ref().map(|q| q.to_string())
    }
}

pub fn binomial_exact(m: u64, r: u64) -> BigUint {
    if r > m {
        return BigUint::zero();
    }
    let r = r.min(m - r);
    let mut acc = BigUint::one();
    for i in 0..r {
        acc *= m - i;
        acc /= i + 1;
    }
    acc
}

/// `ln C(m, r)`; `-inf` when `r > m`.
pub fn ln_binomial(m: u64, r: u64) -> f64 {
    if r > m {
        return f64::NEG_INFINITY;
    }
    let r = r.min(m - r);
    if r <= LOG_SUM_MAX_R {
        (0..r).map(|i| ((m - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
    } else {
        ln_gamma(m as f64 + 1.0) - ln_gamma(r as f64 + 1.0) - ln_gamma((m - r) as f64 + 1.0)
    }
}

/// `C(m, r) / n^c`.
fn binomial_over_power(m: u64, r: u64, n: u64, c: u64) -> Bound {
    let float = if r > m { 0.0 } else { (ln_binomial(m, r) - c as f64 * (n as f64).ln()).exp() };
    let exact = (r <= EXACT_MAX_R).then(|| {
        let num = BigInt::from(binomial_exact(m, r));
        let den = BigInt::from(BigUint::from(n).pow(c as u32));
        BigRational::new(num, den)
    });
    Bound { exact, float }
}

/// Probability that a given bucket receives `c` or more of `m` uniformly
/// thrown elements is at most `C(m, c) / n^c`.
pub fn bucket_overflow_prob_bound(m: u64, n: u64, c: u64) -> Bound {
    binomial_over_power(m, c, n, c)
}

/// Expected number of elements that find no room: at most
/// `C(m, c + 1) / n^c`.
pub fn expected_spill_bound(m: u64, n: u64, c: u64) -> Bound {
    binomial_over_power(m, c + 1, n, c)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpillStats {
    pub trials: u64,
    pub mean: f64,
    pub variance: f64,
    pub max: f64,
}

impl SpillStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let trials = xs.len() as u64;
        if trials == 0 {
            return SpillStats::default();
        }
        let mean = xs.iter().sum::<f64>() / trials as f64;
        let variance =
            if trials > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64 } else { 0.0 };
        let max = xs.iter().copied().fold(0.0, f64::max);
        SpillStats { trials, mean, variance, max }
    }

    pub fn stderr(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            (self.variance / self.trials as f64).sqrt()
        }
    }

    /// Mean at most `bound` within `sigmas` standard errors.
    pub fn within(&self, bound: f64, sigmas: f64) -> bool {
        self.mean <= bound + sigmas * self.stderr()
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(LabError::Invalid("trials must be at least 1".into()));
    }
    Ok(())
}

/// Elements of `m` left over after throwing them into `n` buckets of `c`.
fn throw_once(m: usize, n: usize, c: usize, rng: &mut Rng) -> Result<usize> {
    let params = ZhtParams { n, k: 1, c };
    let mut z: Zht<0> = Zht::new(params, 1, &HashFamily::new(0))?;
    let elems = (0..m as u32).map(|k| Slot::real(k, [])).collect::<Result<Vec<_>, _>>()?;
    Ok(z.throw(&elems, PathSource::Random, false, rng, &mut TraceRecorder::counting()).unplaced)
}

/// Spill of a single uniform throw of `m` elements into `n` buckets of `c`.
pub fn mc_throw_spill(m: usize, n: usize, c: usize, trials: u64, seed: u64) -> Result<SpillStats> {
    check_trials(trials)?;
    let samples = (0..trials)
        .into_par_iter()
        .map(|i| throw_once(m, n, c, &mut Rng::substream(seed, i)).map(|s| s as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpillStats::from_samples(&samples))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrnSpill {
    pub n: usize,
    pub c: usize,
    /// Live elements entering the network.
    pub live: usize,
    pub per_stage: Vec<SpillStats>,
    pub total: SpillStats,
    /// A single throw of `live` elements, paired trial by trial.
    pub throw: SpillStats,
    pub repartitions: u64,
}

impl PrnSpill {
    /// Every stage's mean spill at most the throw's mean spill, within
    /// `sigmas` standard errors of their difference.
    pub fn stages_below_throw(&self, sigmas: f64) -> bool {
        self.per_stage.iter().all(|s| {
            let se = (s.stderr().powi(2) + self.throw.stderr().powi(2)).sqrt();
            s.mean <= self.throw.mean + sigmas * se
        })
    }
}

/// Routes `load * n` elements with uniform destinations, scattered over a
/// table of `n` buckets of `c`, and records the spill of every stage.
pub fn mc_prn_stage_spill(n: usize, c: usize, load: f64, trials: u64, seed: u64) -> Result<PrnSpill> {
    check_trials(trials)?;
    if !n.is_power_of_two() || c == 0 || !(0.0..=c as f64).contains(&load) {
        return Err(LabError::Invalid("need n a power of two, c >= 1 and 0 <= load <= c".into()));
    }
    let live = (load * n as f64).round() as usize;
    let stages = n.trailing_zeros() as usize;
    let runs = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<(Vec<usize>, usize, u64)> {
            let mut rng = Rng::substream(seed, i);
            let mut table = Table::new(n, c, RoutingSlot::new(Slot::<0>::empty(), 0))?;
            for (key, cell) in sample(&mut rng, n * c, live).into_iter().enumerate() {
                let dest = rng.random_bucket(n)? as u32;
                table.cells_mut()[cell] = RoutingSlot::new(Slot::real(key as u32, [])?, dest);
            }
            let stats = route(&mut table, &mut rng, &mut TraceRecorder::counting(), Region::L0)?;
            let thrown = throw_once(live, n, c, &mut rng)?;
            Ok((stats.spills_per_stage, thrown, stats.repartitions))
        })
        .collect::<Result<Vec<_>>>()?;

    let per_stage = (0..stages)
        .map(|s| SpillStats::from_samples(&runs.iter().map(|r| r.0[s] as f64).collect::<Vec<_>>()))
        .collect();
    let total = SpillStats::from_samples(&runs.iter().map(|r| r.0.iter().sum::<usize>() as f64).collect::<Vec<_>>());
    let throw = SpillStats::from_samples(&runs.iter().map(|r| r.1 as f64).collect::<Vec<_>>());
    Ok(PrnSpill { n, c, live, per_stage, total, throw, repartitions: runs[0].2 })
}

/// Outcomes of repeated full-load oblivious builds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildTrials {
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub trials: u64,
    pub failures: u64,
    pub mean_arrivals: Vec<f64>,
    pub max_arrivals: Vec<usize>,
    pub max_occupancy: Vec<usize>,
    /// Trials whose arrivals were non-increasing across tables.
    pub monotone_trials: u64,
}

pub fn build_trials(n: usize, k: usize, c: usize, trials: u64, seed: u64) -> Result<BuildTrials> {
    check_trials(trials)?;
    let params = ZhtParams { n, k, c };
    params.validate()?;
    let reports = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::substream(seed, i);
            let fam = HashFamily::new(seed ^ i.rotate_left(32));
            let elems = (0..n as u32).map(|key| Slot::<0>::real(key, [])).collect::<Result<Vec<_>, _>>()?;
            let (_, report) = oblivious_build(&elems, params, 1, &fam, &mut rng, &mut TraceRecorder::counting())?;
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = BuildTrials {
        n,
        k,
        c,
        trials,
        failures: 0,
        mean_arrivals: vec![0.0; k],
        max_arrivals: vec![0; k],
        max_occupancy: vec![0; k],
        monotone_trials: 0,
    };
    for r in &reports {
        out.failures += !r.success as u64;
        out.monotone_trials += r.arrivals_per_table.windows(2).all(|w| w[1] <= w[0]) as u64;
        for j in 0..k {
            out.mean_arrivals[j] += r.arrivals_per_table[j] as f64;
            out.max_arrivals[j] = out.max_arrivals[j].max(r.arrivals_per_table[j]);
            out.max_occupancy[j] = out.max_occupancy[j].max(r.occupancy_per_table[j]);
        }
    }
    for a in &mut out.mean_arrivals {
        *a /= trials.max(1) as f64;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub trials: BuildTrials,
    /// `n / (2e)`.
    pub table3_bound: f64,
    pub table3_ok: bool,
    /// `ceil(log2 log2 n)`: tables past this one should see no arrivals.
    pub last_busy_table: usize,
    pub beyond_ok: bool,
    pub monotone_ok: bool,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.table3_ok && self.beyond_ok && self.monotone_ok
    }
}

/// Smallest table size at which the arrival decay is expected to hold.
pub const DECAY_MIN_N: usize = 1 << 10;

pub fn decay_check(n: usize, c: usize, k: usize, trials: u64, seed: u64) -> Result<DecayReport> {
    if n < DECAY_MIN_N {
        return Err(LabError::Invalid(format!("decay check needs n >= {DECAY_MIN_N}")));
    }
    let t = build_trials(n, k, c, trials, seed)?;
    let table3_bound = n as f64 / (2.0 * std::f64::consts::E);
    let table3_ok = t.mean_arrivals.get(2).is_none_or(|&a| a <= table3_bound);
    let log_n = n.trailing_zeros() as usize;
    let last_busy_table = log_n.next_power_of_two().trailing_zeros() as usize;
    let beyond_ok = t.max_arrivals.iter().skip(last_busy_table).all(|&a| a == 0);
    let monotone_ok = t.monotone_trials == t.trials;
    Ok(DecayReport { trials: t, table3_bound, table3_ok, last_busy_table, beyond_ok, monotone_ok })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostModel {
    pub levels: usize,
    /// Online accesses with only the last level present.
    pub online_min: u64,
    /// Online accesses with every level present.
    pub online_max: u64,
    pub online_mean: f64,
    pub amortized: f64,
    pub period_total: u128,
}

/// Predicted bucket accesses. `k = None` uses the per-level default.
pub fn cost_model(capacity: usize, p: usize, k: Option<usize>, c: usize) -> Result<CostModel> {
    let mut cfg = PyramidConfig::new(capacity, p, 0);
    cfg.k_override = k;
    cfg.c = c;
    cfg.validate()?;
    let levels = cfg.levels();
    let l = levels.len();
    let online_min = p as u64 + levels[l - 1].k as u64;
    let online_max = p as u64 + levels.iter().map(|lp| lp.k as u64).sum::<u64>();
    let online_mean = (0..capacity as u64).map(|t| cfg.online_cost(t) as f64).sum::<f64>() / capacity as f64;
    Ok(CostModel {
        levels: l,
        online_min,
        online_max,
        online_mean,
        amortized: cfg.amortized_cost(),
        period_total: cfg.period_cost(),
    })
}
