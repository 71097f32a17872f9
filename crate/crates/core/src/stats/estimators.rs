//! Named estimators over an ensemble and the exact Gaussian values they
//! reduce to at zero coupling.

use serde::{Deserialize, Serialize};

use super::accumulator::{EnsembleAccumulator, Estimate};
use super::observables::Observable;
use super::report::{Check, MomentReport, Rule};
use crate::error::{Error, Result};
use crate::grid::{inner_product, GridSpec, ScalarField};
use crate::mollifier::{covariance_field, make_mollifier, MollifierSpec};
use crate::propagate::heat_propagate;
use crate::spectral::with_spectral;

fn index(acc: &EnsembleAccumulator, obs: Observable) -> Result<usize> {
    acc.index_of(&obs.name())
}

/// `||p_t * rho * phi||^2`, the variance of `<u(t), phi>` for the free field.
pub fn free_pairing_variance(grid: &GridSpec, moll: &MollifierSpec, t: f64, phi: &ScalarField) -> Result<f64> {
    let rho = make_mollifier(moll, grid)?;
    let g = with_spectral(grid, |ws| ws.convolve(&rho, phi))?;
    let g = if t > 0.0 { heat_propagate(&g, t)? } else { g };
    inner_product(&g, &g)
}

/// `(p_{2t} * rho * rho~)(x)`, the free-field covariance `E[X(t,0) X(t,x)]`.
pub fn free_point_covariance(grid: &GridSpec, moll: &MollifierSpec, t: f64, offset: &[i64]) -> Result<f64> {
    let c = covariance_field(moll, grid)?;
    let c = if t > 0.0 { heat_propagate(&c, 2.0 * t)? } else { c };
    Ok(c.values()[grid.offset_index(offset)])
}

/// `Var(A_s)`, the integrated covariance at microscopic time `s`.
pub fn sigma_lambda_estimate(acc: &EnsembleAccumulator, s: usize) -> Result<Estimate> {
    let i = index(acc, Observable::SpatialAverage { s })?;
    Ok(acc.estimate(|m| m.variance(i)))
}

/// `E[<u(t), phi>^2] / ||p_t * rho * phi||^2` for a nonnegative `phi`.
pub fn variance_two_sided(
    acc: &EnsembleAccumulator,
    t: f64,
    phi: &ScalarField,
    moll: &MollifierSpec,
) -> Result<Estimate> {
    if phi.min() < 0.0 {
        return Err(Error::NegativeTestFunction);
    }
    let i = index(acc, Observable::Pairing { t })?;
    let norm = free_pairing_variance(phi.grid(), moll, t, phi)?;
    Ok(acc.estimate(|m| m.raw(i, 2) / norm))
}

/// `E[u(t,0)^2] <= 1 / (2 λ_ε t) + 3 SE`.
pub fn coming_down_check(acc: &EnsembleAccumulator, t: f64, lambda_eps: f64) -> Result<Check> {
    let i = index(acc, Observable::SecondMoment { t })?;
    let bound = if lambda_eps > 0.0 { 1.0 / (2.0 * lambda_eps * t) } else { f64::INFINITY };
    let est = acc.estimate(|m| m.mean(i));
    Ok(Check::new(format!("coming_down@t={t}"), est, Rule::AtMost { bound, z: 3.0 }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationProfile {
    pub t: f64,
    pub p: u32,
    pub offsets: Vec<f64>,
    pub covariances: Vec<Estimate>,
    /// Least-squares slope of `ln |Cov|` against squared offset over the
    /// significant points.
    pub slope: Option<f64>,
    /// `-1 / (slope t)`.
    pub fitted_c: Option<f64>,
    /// Every covariance at offset `>= 6 sqrt(t)` is within 3 SE of zero.
    pub far_field_null: bool,
    /// Number of offsets at or beyond `6 sqrt(t)`.
    pub far_points: usize,
}

/// `Cov(u(t,0)^p, u(t,r e_1)^p)` for lattice offsets `r = lag h`.
pub fn decorrelation_test(acc: &EnsembleAccumulator, t: f64, p: u32, lags: &[usize], spacing: f64) -> Result<DecorrelationProfile> {
    let mean = index(acc, Observable::PowerMean { t, p })?;
    let mut offsets = Vec::new();
    let mut covariances = Vec::new();
    for &lag in lags {
        let prod = index(acc, Observable::LagProduct { t, p, lag })?;
        offsets.push(lag as f64 * spacing);
        covariances.push(acc.estimate(|m| m.mean(prod) - m.mean(mean).powi(2)));
    }
    let pts: Vec<(f64, f64)> = offsets
        .iter()
        .zip(&covariances)
        .filter(|(_, c)| c.se.is_some_and(|se| c.value.abs() > 3.0 * se))
        .map(|(r, c)| (r * r, c.value.abs().ln()))
        .collect();
    let slope = least_squares_slope(&pts);
    let fitted_c = slope.filter(|s| *s < 0.0).map(|s| -1.0 / (s * t));
    let far = 6.0 * t.sqrt();
    let far_cov: Vec<Estimate> = offsets.iter().zip(&covariances).filter(|(r, _)| **r >= far).map(|(_, c)| *c).collect();
    let far_field_null = far_cov.iter().all(|c| c.within(0.0, 3.0));
    Ok(DecorrelationProfile {
        t,
        p,
        offsets,
        covariances,
        slope,
        fitted_c,
        far_field_null,
        far_points: far_cov.len(),
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Targets of the standardized moments of a centred Gaussian, orders 3..=8.
pub const GAUSSIAN_STANDARDIZED: [(usize, f64); 6] = [(3, 0.0), (4, 3.0), (5, 0.0), (6, 15.0), (7, 0.0), (8, 105.0)];

/// Standardized moments of `<u(t), phi>` checked against `0/3/0/15/0/105`.
pub fn gaussianity_report(acc: &EnsembleAccumulator, t: f64, z: f64) -> Result<MomentReport> {
    let i = index(acc, Observable::Pairing { t })?;
    let mut report = MomentReport::summarize(format!("gaussianity@t={t}"), acc, z);
    for (k, target) in GAUSSIAN_STANDARDIZED {
        let est = acc.estimate(|m| m.standardized(i, k));
        report.push(Check::new(format!("standardized_moment_{k}@t={t}"), est, Rule::Near { target, z }));
    }
    Ok(report)
}

/// Pearson correlation of `<u(t), phi>` and `<p_t * u(0), phi>`.
pub fn cross_correlation(acc: &EnsembleAccumulator, t: f64) -> Result<Estimate> {
    let a = index(acc, Observable::Pairing { t })?;
    let b = index(acc, Observable::FreePairing { t })?;
    Ok(acc.estimate(|m| m.correlation(a, b)))
}

/// `Cov(<u(t), phi>, <p_t * u(0), phi>)`.
pub fn cross_covariance(acc: &EnsembleAccumulator, t: f64) -> Result<Estimate> {
    let a = index(acc, Observable::Pairing { t })?;
    let b = index(acc, Observable::FreePairing { t })?;
    Ok(acc.estimate(|m| m.covariance(a, b)))
}

/// Pointwise `E[u(t,x) (p_t * u(0))(x)]`, averaged over `x`.
pub fn pointwise_cross_moment(acc: &EnsembleAccumulator, t: f64) -> Result<Estimate> {
    let i = index(acc, Observable::FreeCross { t })?;
    Ok(acc.estimate(|m| m.mean(i)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub lambdas: Vec<f64>,
    pub sigma_sq: Vec<Estimate>,
    /// `σ²(λ_k) - σ²(λ_{k+1})` with paired error bars.
    pub drops: Vec<Estimate>,
    pub strictly_decreasing: bool,
    /// `σ²(last) < σ²(second) / 2`.
    pub halved: bool,
}

impl MonotonicityVerdict {
    pub fn pass(&self) -> bool {
        self.strictly_decreasing && self.halved
    }
}

/// Checks that `σ²(λ)` falls along the ladder by more than 3 paired SEs per
/// step. The ensembles must share seeds and batch layout.
pub fn lambda_monotonicity(ladder: &[(f64, &EnsembleAccumulator)], s: usize) -> Result<MonotonicityVerdict> {
    if ladder.len() < 2 {
        return Err(Error::InvalidParam("a λ ladder needs at least two points".into()));
    }
    let mut sigma_sq = Vec::new();
    for (_, acc) in ladder {
        sigma_sq.push(sigma_lambda_estimate(acc, s)?);
    }
    let mut drops = Vec::new();
    for w in ladder.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        let (ia, ib) = (index(a, Observable::SpatialAverage { s })?, index(b, Observable::SpatialAverage { s })?);
        drops.push(a.paired_estimate(b, |x, y| x.variance(ia) - y.variance(ib))?);
    }
    let strictly_decreasing = drops.iter().all(|d| Rule::Above { bound: 0.0, z: 3.0 }.verdict(d));
    let halved = ladder.len() >= 2 && sigma_sq[sigma_sq.len() - 1].value < sigma_sq[1.min(sigma_sq.len() - 1)].value / 2.0;
    Ok(MonotonicityVerdict {
        lambdas: ladder.iter().map(|(l, _)| *l).collect(),
        sigma_sq,
        drops,
        strictly_decreasing,
        halved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rescale::TestFunction;

    #[test]
    fn free_variance_matches_direct_quadrature() {
        // Without heat, Var <rho * xi, phi> = h^d sum_z (h^d sum_x rho(x - z) phi(x))^2.
        let g = GridSpec::new(2, 16, 4.0).unwrap();
        let moll = MollifierSpec::bump(0.6);
        let phi = TestFunction::gaussian_bump(&g, &[1.0, 2.0], 0.5).unwrap();
        let rho = make_mollifier(&moll, &g).unwrap();
        let dv = g.cell_volume();
        let mut direct = 0.0;
        for z in 0..g.len() {
            let mut s = 0.0;
            for x in 0..g.len() {
                let cz = g.signed_coords(z);
                let cx = g.signed_coords(x);
                let off = [cx[0] - cz[0], cx[1] - cz[1]];
                s += rho.values()[g.offset_index(&off)] * phi.field().values()[x];
            }
            direct += (dv * s).powi(2);
        }
        direct *= dv;
        let got = free_pairing_variance(&g, &moll, 0.0, phi.field()).unwrap();
        assert!((got - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn free_point_covariance_at_time_zero_is_the_initial_covariance() {
        let g = GridSpec::new(3, 16, 4.0).unwrap();
        let moll = MollifierSpec::bump(0.75);
        for off in [[0, 0, 0], [1, 0, 0], [2, 1, 0], [7, 0, 0]] {
            let a = free_point_covariance(&g, &moll, 0.0, &off).unwrap();
            let b = crate::mollifier::covariance_init(&moll, &g, &off).unwrap();
            assert!((a - b).abs() < 1e-12, "{off:?}");
        }
        let later = free_point_covariance(&g, &moll, 0.5, &[0, 0, 0]).unwrap();
        assert!(later < free_point_covariance(&g, &moll, 0.0, &[0, 0, 0]).unwrap());
    }

    #[test]
    fn slope_of_a_gaussian_profile() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, -0.7 * i as f64 + 2.0)).collect();
        assert!((least_squares_slope(&pts).unwrap() + 0.7).abs() < 1e-12);
        assert!(least_squares_slope(&pts[..1]).is_none());
    }

    #[test]
    fn negative_test_function_is_rejected() {
        let g = GridSpec::new(1, 16, 4.0).unwrap();
        let phi = ScalarField::from_fn(g, |x| x[0] - 1.0);
        let acc = EnsembleAccumulator::new(vec![Observable::Pairing { t: 1.0 }.name()], vec![], 32).unwrap();
        assert!(matches!(
            variance_two_sided(&acc, 1.0, &phi, &MollifierSpec::bump(0.5)),
            Err(Error::NegativeTestFunction)
        ));
    }
}
