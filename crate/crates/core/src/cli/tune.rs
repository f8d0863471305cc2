//! Coarse-to-fine logarithmic grid search over `(lambda, sigma)`.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneBounds {
    pub lambda: (f64, f64),
    pub sigma: (f64, f64),
    /// Points per axis in each round.
    pub grid: usize,
    /// Refinement rounds after the initial grid.
    pub rounds: usize,
}

impl TuneBounds {
    pub fn new(lambda: (f64, f64), sigma: (f64, f64)) -> Self {
        Self { lambda, sigma, grid: 4, rounds: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lambda", self.lambda), ("sigma", self.sigma)] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        if self.grid == 0 {
            return Err(Error::InvalidArgument("grid must have at least one point".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunePoint {
    pub round: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: TunePoint,
    /// Every evaluated point in evaluation order.
    pub history: Vec<TunePoint>,
}

impl TuneResult {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "round,lambda,sigma,score")?;
        for p in &self.history {
            writeln!(out, "{},{:e},{:e},{}", p.round, p.lambda, p.sigma, p.score)?;
        }
        Ok(())
    }
}

/// `n` points evenly spaced in `[lo, hi]` (log coordinates).
fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || hi == lo {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Window of width `span` centered at `c`, shifted to stay inside `[lo, hi]`.
fn window(c: f64, span: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = (c - 0.5 * span).max(lo);
    let b = (a + span).min(hi);
    ((b - span).max(lo), b)
}

/// `a` beats `b`: higher score, ties to smaller lambda then smaller sigma.
fn better(a: &TunePoint, b: &TunePoint) -> bool {
    if a.score != b.score {
        return a.score > b.score || b.score.is_nan() && !a.score.is_nan();
    }
    (a.lambda, a.sigma) < (b.lambda, b.sigma)
}

/// Maximizes `score(lambda, sigma)`. Each round evaluates a `grid x grid`
/// log-spaced grid (in parallel); every refinement halves the log-span
/// around the incumbent.
pub fn coarse_to_fine<F>(bounds: &TuneBounds, score: F) -> Result<TuneResult>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    bounds.validate()?;
    let (llo, lhi) = (bounds.lambda.0.ln(), bounds.lambda.1.ln());
    let (slo, shi) = (bounds.sigma.0.ln(), bounds.sigma.1.ln());
    let (mut lspan, mut sspan) = (lhi - llo, shi - slo);
    let (mut lwin, mut swin) = ((llo, lhi), (slo, shi));
    let mut history: Vec<TunePoint> = Vec::new();
    let mut best: Option<TunePoint> = None;
    for round in 0..=bounds.rounds {
        let pts: Vec<(f64, f64)> = axis(lwin.0, lwin.1, bounds.grid)
            .into_iter()
            .flat_map(|l| axis(swin.0, swin.1, bounds.grid).into_iter().map(move |s| (l.exp(), s.exp())))
            .collect();
        let scored: Vec<TunePoint> = pts
            .par_iter()
            .map(|&(lambda, sigma)| {
                let known = history.iter().find(|p| p.lambda == lambda && p.sigma == sigma);
                let score = known.map_or_else(|| score(lambda, sigma), |p| p.score);
                TunePoint { round, lambda, sigma, score }
            })
            .collect();
        for p in scored {
            if best.as_ref().is_none_or(|b| better(&p, b)) {
                best = Some(p);
            }
            history.push(p);
        }
        let inc = best.expect("grid is non-empty");
        lspan *= 0.5;
        sspan *= 0.5;
        lwin = window(inc.lambda.ln(), lspan, llo, lhi);
        swin = window(inc.sigma.ln(), sspan, slo, shi);
    }
    Ok(TuneResult { best: best.expect("grid is non-empty"), history })
}
