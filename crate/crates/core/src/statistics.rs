//! Correlation estimates and the CHSH combination.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::correlations::AngleSettings;
use crate::error::{Error, Result};
use crate::simulation::CountsTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub e_hat: f64,
    /// Plug-in binomial standard error √((1 − ê²)/N); zero when |ê| = 1.
    pub se: f64,
    pub n: u64,
}

impl CorrelationEstimate {
    /// Exact value with no sampling error, for closed-form CHSH evaluation.
    pub fn exact(e: f64) -> Self {
        Self { e_hat: e, se: 0.0, n: 0 }
    }
}

pub fn estimate_correlation(counts: &CountsTable) -> Result<CorrelationEstimate> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::EmptyCounts);
    }
    let same = (counts.n_pp + counts.n_mm) as f64;
    let diff = (counts.n_pm + counts.n_mp) as f64;
    let nf = n as f64;
    let e_hat = ((same - diff) / nf).clamp(-1.0, 1.0);
    let se = ((1.0 - e_hat * e_hat).max(0.0) / nf).sqrt();
    Ok(CorrelationEstimate { e_hat, se, n })
}

/// Frequency of `+1` on side 1 and on side 2.
pub fn marginal_plus_frequencies(counts: &CountsTable) -> Result<(f64, f64)> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::EmptyCounts);
    }
    let nf = n as f64;
    Ok(((counts.n_pp + counts.n_pm) as f64 / nf, (counts.n_pp + counts.n_mp) as f64 / nf))
}

/// Exact (Clopper–Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::EmptyCounts);
    }
    if successes > trials || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need successes <= trials and confidence in (0, 1), got {successes}/{trials} at {confidence}"
        )));
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lower, upper))
}

/// The four analyzer settings `(a, a′, b, b′)` of a CHSH run, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// Settings at which the entangled prediction reaches 2√2 under the
    /// `E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)` sign convention.
    pub const OPTIMAL: ChshSettings = ChshSettings {
        a: FRAC_PI_8,
        a_prime: -FRAC_PI_8,
        b: 0.0,
        b_prime: FRAC_PI_4,
    };

    /// Angle pairs in argument order of [`chsh`]: `(a,b), (a,b′), (a′,b), (a′,b′)`.
    pub fn pairs(&self) -> [AngleSettings; 4] {
        [
            AngleSettings { alpha: self.a, beta: self.b },
            AngleSettings { alpha: self.a, beta: self.b_prime },
            AngleSettings { alpha: self.a_prime, beta: self.b },
            AngleSettings { alpha: self.a_prime, beta: self.b_prime },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshResult {
    pub s: f64,
    pub se: f64,
    pub settings: ChshSettings,
}

/// S = E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′), errors added in quadrature.
pub fn chsh(
    e_ab: &CorrelationEstimate,
    e_ab_prime: &CorrelationEstimate,
    e_a_prime_b: &CorrelationEstimate,
    e_a_prime_b_prime: &CorrelationEstimate,
    settings: ChshSettings,
) -> ChshResult {
    let s = e_ab.e_hat - e_ab_prime.e_hat + e_a_prime_b.e_hat + e_a_prime_b_prime.e_hat;
    let se = [e_ab, e_ab_prime, e_a_prime_b, e_a_prime_b_prime]
        .iter()
        .map(|e| e.se * e.se)
        .sum::<f64>()
        .sqrt();
    ChshResult { s, se, settings }
}

/// CHSH value of a closed-form correlation function at `settings`.
pub fn chsh_closed_form(correlation: impl Fn(&AngleSettings) -> f64, settings: ChshSettings) -> ChshResult {
    let [ab, abp, apb, apbp] = settings.pairs().map(|p| CorrelationEstimate::exact(correlation(&p)));
    chsh(&ab, &abp, &apb, &apbp, settings)
}

/// Largest |S| of `correlation` over all settings on a uniform grid of
/// `steps` angles spanning `[0, π)` on each of the four axes.
///
/// S splits into `[E(a,b) − E(a,b′)] + [E(a′,b) + E(a′,b′)]`, so for each
/// `(b, b′)` the two brackets are optimized independently. The result is the
/// exact grid optimum in O(steps³).
pub fn max_abs_chsh_on_grid(correlation: impl Fn(f64, f64) -> f64, steps: usize) -> (f64, ChshSettings) {
    let step = std::f64::consts::PI / steps as f64;
    let grid: Vec<f64> = (0..steps).map(|k| k as f64 * step).collect();
    let table: Vec<Vec<f64>> = grid.iter().map(|&a| grid.iter().map(|&b| correlation(a, b)).collect()).collect();

    let mut best = (f64::NEG_INFINITY, ChshSettings::OPTIMAL);
    for (jb, &b) in grid.iter().enumerate() {
        for (jbp, &bp) in grid.iter().enumerate() {
            let mut dmax = (f64::NEG_INFINITY, 0);
            let mut dmin = (f64::INFINITY, 0);
            let mut smax = (f64::NEG_INFINITY, 0);
            let mut smin = (f64::INFINITY, 0);
            for (ia, row) in table.iter().enumerate() {
                let d = row[jb] - row[jbp];
                let s = row[jb] + row[jbp];
                if d > dmax.0 {
                    dmax = (d, ia);
                }
                if d < dmin.0 {
                    dmin = (d, ia);
                }
                if s > smax.0 {
                    smax = (s, ia);
                }
                if s < smin.0 {
                    smin = (s, ia);
                }
            }
            for (value, ia, iap) in [(dmax.0 + smax.0, dmax.1, smax.1), (-(dmin.0 + smin.0), dmin.1, smin.1)] {
                if value > best.0 {
                    best = (
                        value,
                        ChshSettings {
                            a: grid[ia],
                            a_prime: grid[iap],
                            b,
                            b_prime: bp,
                        },
                    );
                }
            }
        }
    }
    best
}
