//! Least-squares fitters for sector-size statistics and scaling data.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::FitError;

type FitResult<T> = std::result::Result<T, FitError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the residuals.
    pub residual: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`. Both coordinates are
/// shifted by their first sample, so a constant series gives a slope of
/// exactly zero.
pub fn fit_line(x: &[f64], y: &[f64]) -> FitResult<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(FitError::TooFewPoints { need: 2, got: n.min(y.len()) });
    }
    let (x0, y0) = (x[0], y[0]);
    let xs: Vec<f64> = x.iter().map(|v| v - x0).collect();
    let ys: Vec<f64> = y.iter().map(|v| v - y0).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(FitError::Unidentifiable("abscissa has zero spread".into()));
    }
    let slope = sxy / sxx;
    let shifted_intercept = my - slope * mx;
    let intercept = y0 + shifted_intercept - slope * x0;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| (b - shifted_intercept - slope * a).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(LineFit { slope, intercept, residual })
}

fn require(n: usize, need: usize) -> FitResult<()> {
    if n < need {
        Err(FitError::TooFewPoints { need, got: n })
    } else {
        Ok(())
    }
}

fn positive_logs(v: &[f64]) -> FitResult<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(index, &value)| if value > 0.0 { Ok(value.ln()) } else { Err(FitError::NonPositive { index, value }) })
        .collect()
}

fn strictly_increasing(x: &[f64]) -> FitResult<()> {
    match x.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(FitError::NonMonotonic(i + 1)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub c: f64,
    pub alpha: f64,
    pub residual: f64,
    pub points: usize,
}

/// `χ_q ≈ C e^{−αq}` with `q = 0, 1, …` the position in `series`.
pub fn fit_exponential(series: &[f64]) -> FitResult<ExponentialFit> {
    require(series.len(), 3)?;
    let y = positive_logs(series)?;
    let x: Vec<f64> = (0..series.len()).map(|i| i as f64).collect();
    let l = fit_line(&x, &y)?;
    Ok(ExponentialFit { c: l.intercept.exp(), alpha: -l.slope, residual: l.residual, points: series.len() })
}

/// Empirical complementary distribution `P(X ≥ x)` at each distinct value,
/// ascending in `x`.
pub fn ccdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &x) in v.iter().enumerate() {
        if out.last().map(|p| p.0) != Some(x) {
            out.push((x, (v.len() - k) as f64 / n));
        }
    }
    out
}

/// Two decades centred (in log scale) on the value range, clipped to it.
pub fn default_ccdf_window(values: &[f64]) -> Option<(f64, f64)> {
    let lo = values.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    let centre = 0.5 * (lo.log10() + hi.log10());
    Some((10f64.powf(centre - 1.0).max(lo), 10f64.powf(centre + 1.0).min(hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub gamma: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub residual: f64,
}

/// `P(χ ≥ x) ≈ A x^{−γ}` over the CCDF samples with `x` inside `window`
/// (default: [`default_ccdf_window`]).
pub fn fit_ccdf_power_law(values: &[f64], window: Option<(f64, f64)>) -> FitResult<PowerLawFit> {
    require(values.len(), 3)?;
    positive_logs(values)?;
    let (lo, hi) = window.or_else(|| default_ccdf_window(values)).expect("positive values");
    // Relative slack keeps the endpoints of a window derived from the data.
    let slack = 1e-12;
    let pts: Vec<(f64, f64)> = ccdf(values)
        .into_iter()
        .filter(|&(x, _)| x >= lo * (1.0 - slack) && x <= hi * (1.0 + slack))
        .collect();
    if pts.len() < 2 {
        return Err(FitError::EmptyWindow { lo, hi });
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let l = fit_line(&x, &y)?;
    Ok(PowerLawFit { a: l.intercept.exp(), gamma: -l.slope, window: (lo, hi), points: pts.len(), residual: l.residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmdahlFit {
    /// Parallel fraction.
    pub f: f64,
    pub t1: f64,
    pub residual: f64,
}

/// `T(P) = T(1)·((1 − f) + f/P)`, linear in `(1, 1/P)`.
pub fn fit_amdahl(ranks: &[f64], times: &[f64]) -> FitResult<AmdahlFit> {
    require(ranks.len().min(times.len()), 3)?;
    strictly_increasing(ranks)?;
    let inv: Vec<f64> = ranks.iter().map(|p| 1.0 / p).collect();
    let l = fit_line(&inv, times)?;
    let t1 = l.intercept + l.slope;
    Ok(AmdahlFit { f: l.slope / t1, t1, residual: l.residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupPowerFit {
    pub k: f64,
    pub t1: f64,
    pub residual: f64,
}

/// `T(P) ∝ P^{−k}`.
pub fn fit_speedup_power(ranks: &[f64], times: &[f64]) -> FitResult<SpeedupPowerFit> {
    require(ranks.len().min(times.len()), 3)?;
    strictly_increasing(ranks)?;
    let l = fit_line(&positive_logs(ranks)?, &positive_logs(times)?)?;
    Ok(SpeedupPowerFit { k: -l.slope, t1: l.intercept.exp(), residual: l.residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual: f64,
}

/// Linear least squares for `(a, B)` in `y ≈ a − B·u`, plus the residual.
fn linear_ab(u: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let l = fit_line(u, y).ok()?;
    Some((l.intercept, -l.slope, l.residual))
}

/// `R(χ) ≈ a − b·χ^c`: grid search on `c` with `(a, b)` solved linearly,
/// refined by Levenberg–Marquardt on all three parameters. Internally `χ` is
/// scaled by its geometric mean to decorrelate `b` and `c`.
pub fn fit_ratio_model(chi: &[f64], ratio: &[f64]) -> FitResult<RatioFit> {
    require(chi.len().min(ratio.len()), 3)?;
    strictly_increasing(chi)?;
    positive_logs(chi)?;
    let n = chi.len();
    let reference = (chi.iter().map(|x| x.ln()).sum::<f64>() / n as f64).exp();
    let lx: Vec<f64> = chi.iter().map(|x| (x / reference).ln()).collect();

    let mut best: Option<(f64, f64, f64, f64)> = None;
    for i in 1..=400 {
        let c = 0.01 * i as f64;
        let u: Vec<f64> = lx.iter().map(|l| (c * l).exp()).collect();
        if let Some((a, bb, res)) = linear_ab(&u, ratio) {
            if best.is_none_or(|b| res < b.3) {
                best = Some((a, bb, c, res));
            }
        }
    }
    let (mut a, mut bb, mut c, _) =
        best.ok_or_else(|| FitError::Unidentifiable("no grid point admits a linear fit".into()))?;

    let residuals = |a: f64, bb: f64, c: f64| -> DVector<f64> {
        DVector::from_iterator(n, lx.iter().zip(ratio).map(|(l, y)| y - (a - bb * (c * l).exp())))
    };
    let mut r = residuals(a, bb, c);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut j = DMatrix::zeros(n, 3);
        for (i, l) in lx.iter().enumerate() {
            let e = (c * l).exp();
            // Derivatives of the model a − B·e^{c·l}.
            j[(i, 0)] = 1.0;
            j[(i, 1)] = -e;
            j[(i, 2)] = -bb * e * l;
        }
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let mut improved = false;
        for _ in 0..40 {
            let mut m = jtj.clone();
            for d in 0..3 {
                m[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Ok(step) = m.svd(true, true).solve(&jtr, 1e-300) else { break };
            let (na, nb, nc) = (a + step[0], bb + step[1], c + step[2]);
            let nr = residuals(na, nb, nc);
            let ncost = nr.norm_squared();
            if ncost <= cost {
                let small = step[0].abs() <= 1e-15 * a.abs().max(1e-300)
                    && step[1].abs() <= 1e-15 * bb.abs().max(1e-300)
                    && step[2].abs() <= 1e-15 * c.abs().max(1e-300);
                a = na;
                bb = nb;
                c = nc;
                r = nr;
                cost = ncost;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !small;
                break;
            }
            lambda *= 10.0;
        }
        if !improved || cost == 0.0 {
            break;
        }
    }
    Ok(RatioFit { a, b: bb * reference.powf(-c), c, residual: cost.sqrt() })
}

/// Inverse participation ratio of the normalized sizes.
pub fn n_eff(chi: &[f64]) -> f64 {
    let total: f64 = chi.iter().sum();
    let sq: f64 = chi.iter().map(|x| (x / total).powi(2)).sum();
    1.0 / sq
}

/// `q* = (m/α)·ln(C^{1/m}/Π)`.
pub fn q_star(c: f64, alpha: f64, pi: f64, m: f64) -> f64 {
    (m / alpha) * (c.powf(1.0 / m) / pi).ln()
}

/// Inverts `c = 1 − D + m(D − 3)`; undefined at `m = 1`.
pub fn fractal_dimension(c: f64, m: f64) -> Option<f64> {
    if (m - 1.0).abs() < 1e-12 {
        None
    } else {
        Some((c - 1.0 + 3.0 * m) / (m - 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_round_trip() {
        let s: Vec<f64> = (0..=20).map(|q| 100.0 * (-0.5 * q as f64).exp()).collect();
        let f = fit_exponential(&s).unwrap();
        assert!((f.alpha - 0.5).abs() < 1e-9);
        assert!((f.c - 100.0).abs() < 1e-7);
    }

    #[test]
    fn constant_series_has_zero_decay() {
        let f = fit_exponential(&[7.0; 9]).unwrap();
        assert_eq!(f.alpha, 0.0);
        assert!(matches!(fit_exponential(&[1.0, 2.0]), Err(FitError::TooFewPoints { .. })));
        assert!(matches!(fit_exponential(&[1.0, 0.0, 2.0]), Err(FitError::NonPositive { index: 1, .. })));
    }

    #[test]
    fn ccdf_counts_ties() {
        assert_eq!(ccdf(&[2.0, 1.0, 2.0, 5.0]), vec![(1.0, 1.0), (2.0, 0.75), (5.0, 0.25)]);
    }

    #[test]
    fn power_law_round_trip() {
        let (a, g, n) = (3.0, 0.2, 400);
        let xs: Vec<f64> = (0..n).map(|k| (a * n as f64 / (n - k) as f64).powf(1.0 / g)).collect();
        let f = fit_ccdf_power_law(&xs, Some((xs[0], xs[n - 1]))).unwrap();
        assert!((f.gamma - g).abs() < 1e-9);
        assert!((f.a - a).abs() < 1e-8);
        assert!(matches!(fit_ccdf_power_law(&[4.0; 5], None), Err(FitError::EmptyWindow { .. })));
    }

    #[test]
    fn amdahl_and_power() {
        let p: Vec<f64> = (1..=64).map(f64::from).collect();
        let t: Vec<f64> = p.iter().map(|p| 100.0 * (0.05 + 0.95 / p)).collect();
        assert!((fit_amdahl(&p, &t).unwrap().f - 0.95).abs() < 1e-9);
        let lin: Vec<f64> = p.iter().map(|p| 10.0 / p).collect();
        assert!((fit_amdahl(&p, &lin).unwrap().f - 1.0).abs() < 1e-12);
        assert!((fit_speedup_power(&p, &lin).unwrap().k - 1.0).abs() < 1e-12);
        assert!(matches!(fit_amdahl(&[1.0, 4.0, 2.0], &[1.0, 1.0, 1.0]), Err(FitError::NonMonotonic(2))));
    }

    #[test]
    fn ratio_model_round_trips() {
        for (a, b, c) in [(1.53, 0.0045, 0.17), (0.77, 7.1e-6, 1.1)] {
            let chi: Vec<f64> = (0..40).map(|i| 100.0 + 100.0 * i as f64).collect();
            let r: Vec<f64> = chi.iter().map(|x| a - b * x.powf(c)).collect();
            let f = fit_ratio_model(&chi, &r).unwrap();
            for (got, want) in [(f.a, a), (f.b, b), (f.c, c)] {
                assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn scalars() {
        assert!((n_eff(&[3.0; 7]) - 7.0).abs() < 1e-12);
        assert_eq!(n_eff(&[5.0]), 1.0);
        assert_eq!(fractal_dimension(0.5, 1.0), None);
        let d = fractal_dimension(0.17, 2.0).unwrap();
        assert!((1.0 - d + 2.0 * (d - 3.0) - 0.17).abs() < 1e-12);
        // χ_{q*} = Π^m at the crossover.
        let (c, alpha, m, pi) = (500.0, 0.4, 2.0, 3.0);
        let q = q_star(c, alpha, pi, m);
        assert!((c * (-alpha * q).exp() - pi.powf(m)).abs() < 1e-9);
    }
}
