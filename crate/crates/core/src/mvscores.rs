//! Multivariate scores for ensembles: energy and variogram scores and their
//! threshold-weighted, outcome-weighted and vertically re-scaled versions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::MvEnsemble;
use crate::uniscores::{EnsembleEstimator, ScoreParams, ScoreValue};
use crate::weight::{ChainingFunction, WeightFunction};
use crate::WEIGHTED_MASS_FLOOR;

/// Order and pair weights of the variogram score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramSpec {
    #[serde(default = "VariogramSpec::default_order")]
    pub order: f64,
    /// Symmetric `d × d` pair weights in `[0, 1]`; all ones when absent.
    #[serde(default)]
    pub weights: Option<Vec<Vec<f64>>>,
    /// Reference point of the re-scaled variogram score; the origin when absent.
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
}

impl Default for VariogramSpec {
    fn default() -> Self {
        Self { order: 0.5, weights: None, reference: None }
    }
}

impl VariogramSpec {
    fn default_order() -> f64 {
        0.5
    }

    pub fn with_order(order: f64) -> Self {
        Self { order, ..Self::default() }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.order > 0.0 && self.order.is_finite()) {
            return Err(Error::contract(format!("variogram order must be positive, got {}", self.order)));
        }
        if let Some(h) = &self.weights {
            if h.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: h.len() });
            }
            for (i, row) in h.iter().enumerate() {
                if row.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: row.len() });
                }
                for (j, &v) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) || v != h[j][i] {
                        return Err(Error::contract("variogram weights must be symmetric with entries in [0, 1]"));
                    }
                }
            }
        }
        if let Some(r) = &self.reference {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
        }
        Ok(())
    }

    fn h(&self, i: usize, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |h| h[i][j])
    }

    /// Pair features `|x_i - x_j|^p` for `i < j`, scaled by `sqrt(2 h_ij)` so
    /// that the score is a squared Euclidean distance between feature means.
    fn features(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut out = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in i + 1..d {
                out.push((2.0 * self.h(i, j)).sqrt() * (x[i] - x[j]).abs().powf(self.order));
            }
        }
        out
    }
}

fn check_obs(ens: &MvEnsemble, y: &[f64]) -> Result<()> {
    ens.check_dim(y)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("observation must be finite"));
    }
    Ok(())
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Kernel score `Σ ŵ_i ρ(x_i, y) - ½ Σ Σ ŵ_i ŵ_j ρ(x_i, x_j)` with member
/// weights `ŵ` summing to one.
fn weighted_kernel(points: &[&[f64]], probs: &[f64], y: &[f64], rho: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let first: f64 = points.iter().zip(probs).map(|(x, p)| p * rho(x, y)).sum();
    let mut pair = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            pair += probs[i] * probs[j] * rho(points[i], points[j]);
        }
    }
    first - pair
}

fn energy_kernel(points: &[&[f64]], y: &[f64], estimator: EnsembleEstimator) -> f64 {
    let m = points.len();
    let first = points.iter().map(|x| norm(x, y)).sum::<f64>() / m as f64;
    if m == 1 {
        return first;
    }
    let mut pair = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            pair += norm(points[i], points[j]);
        }
    }
    let denom = match estimator {
        EnsembleEstimator::Plain => (m * m) as f64,
        EnsembleEstimator::Fair => (m * (m - 1)) as f64,
    };
    // The double sum over ordered pairs is twice the sum over i < j.
    first - pair / denom
}

fn params_for(fair: bool) -> ScoreParams {
    ScoreParams { fair, ..Default::default() }
}

/// Energy score `mean‖x_i - y‖ - Σ Σ ‖x_i - x_j‖ / (2m²)`.
pub fn energy_score(ens: &MvEnsemble, y: &[f64]) -> Result<ScoreValue> {
    energy_score_with(ens, y, EnsembleEstimator::Plain)
}

pub fn energy_score_with(ens: &MvEnsemble, y: &[f64], estimator: EnsembleEstimator) -> Result<ScoreValue> {
    check_obs(ens, y)?;
    let points: Vec<&[f64]> = ens.members().collect();
    let value = energy_kernel(&points, y, estimator);
    ScoreValue::new("es", value, params_for(estimator == EnsembleEstimator::Fair))
}

fn variogram_value(points: &[&[f64]], y: &[f64], spec: &VariogramSpec, estimator: EnsembleEstimator) -> f64 {
    let m = points.len() as f64;
    let feats: Vec<Vec<f64>> = points.iter().map(|x| spec.features(x)).collect();
    let fy = spec.features(y);
    // Σ_i Σ_j h_ij (E|X_i - X_j|^p - |y_i - y_j|^p)², counting both (i, j) and (j, i).
    (0..fy.len())
        .map(|k| {
            let sum = feats.iter().map(|f| f[k]).sum::<f64>();
            let mean = sum / m;
            match estimator {
                EnsembleEstimator::Fair if points.len() > 1 => {
                    // The squared mean is replaced by its unbiased U-statistic.
                    let squares = feats.iter().map(|f| f[k] * f[k]).sum::<f64>();
                    (sum * sum - squares) / (m * (m - 1.0)) - 2.0 * fy[k] * mean + fy[k] * fy[k]
                }
                _ => (mean - fy[k]).powi(2),
            }
        })
        .sum()
}

/// Variogram score `Σ_i Σ_j h_ij (Ê|X_i - X_j|^p - |y_i - y_j|^p)²`.
pub fn variogram_score(ens: &MvEnsemble, y: &[f64], spec: &VariogramSpec) -> Result<ScoreValue> {
    variogram_score_with(ens, y, spec, EnsembleEstimator::Plain)
}

/// With [`EnsembleEstimator::Fair`] the squared ensemble mean of each pair
/// feature is estimated without bias, so the expected score of an ensemble
/// drawn from `F` equals the score of `F`.
pub fn variogram_score_with(ens: &MvEnsemble, y: &[f64], spec: &VariogramSpec, estimator: EnsembleEstimator) -> Result<ScoreValue> {
    check_obs(ens, y)?;
    spec.validate(ens.dim())?;
    let points: Vec<&[f64]> = ens.members().collect();
    let value = variogram_value(&points, y, spec, estimator);
    ScoreValue::new("vs", value, ScoreParams { order: Some(spec.order), fair: estimator == EnsembleEstimator::Fair, ..Default::default() })
}

fn chained(ens: &MvEnsemble, y: &[f64], v: &ChainingFunction) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_obs(ens, y)?;
    let members = ens.members().map(|x| v.eval(x)).collect::<Result<Vec<_>>>()?;
    Ok((members, v.eval(y)?))
}

/// Threshold-weighted energy score: the energy score of the chained members
/// `v(x_i)` against `v(y)`.
pub fn tw_energy_score(ens: &MvEnsemble, y: &[f64], v: &ChainingFunction) -> Result<ScoreValue> {
    tw_energy_score_with(ens, y, v, EnsembleEstimator::Plain)
}

pub fn tw_energy_score_with(ens: &MvEnsemble, y: &[f64], v: &ChainingFunction, estimator: EnsembleEstimator) -> Result<ScoreValue> {
    let (members, vy) = chained(ens, y, v)?;
    let points: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
    let value = energy_kernel(&points, &vy, estimator);
    ScoreValue::new("twes", value, ScoreParams { chaining: Some(v.name()), fair: estimator == EnsembleEstimator::Fair, ..Default::default() })
}

/// Threshold-weighted variogram score: the variogram score of the chained
/// members against `v(y)`.
pub fn tw_variogram_score(ens: &MvEnsemble, y: &[f64], v: &ChainingFunction, spec: &VariogramSpec) -> Result<ScoreValue> {
    tw_variogram_score_with(ens, y, v, spec, EnsembleEstimator::Plain)
}

pub fn tw_variogram_score_with(
    ens: &MvEnsemble,
    y: &[f64],
    v: &ChainingFunction,
    spec: &VariogramSpec,
    estimator: EnsembleEstimator,
) -> Result<ScoreValue> {
    spec.validate(ens.dim())?;
    let (members, vy) = chained(ens, y, v)?;
    let points: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
    let value = variogram_value(&points, &vy, spec, estimator);
    ScoreValue::new(
        "twvs",
        value,
        ScoreParams { chaining: Some(v.name()), order: Some(spec.order), fair: estimator == EnsembleEstimator::Fair, ..Default::default() },
    )
}

fn member_weights(ens: &MvEnsemble, w: &WeightFunction) -> Result<Vec<f64>> {
    w.validate()?;
    ens.members().map(|x| w.eval(x)).collect()
}

/// Outcome-weighted energy score `w(y) · ES(F_w, y)`, where `F_w` puts
/// probability `w(x_i) / Σ_j w(x_j)` on member `i`.
pub fn ow_energy_score(ens: &MvEnsemble, y: &[f64], w: &WeightFunction) -> Result<ScoreValue> {
    check_obs(ens, y)?;
    let ws = member_weights(ens, w)?;
    let params = ScoreParams { weight: Some(w.name()), ..Default::default() };
    let wy = w.eval(y)?;
    if wy == 0.0 {
        return ScoreValue::new("owes", 0.0, params);
    }
    let total: f64 = ws.iter().sum();
    if total / ws.len() as f64 <= WEIGHTED_MASS_FLOOR {
        return Err(Error::WeightedMassZero { mass: total / ws.len() as f64 });
    }
    let probs: Vec<f64> = ws.iter().map(|v| v / total).collect();
    let points: Vec<&[f64]> = ens.members().collect();
    let value = wy * weighted_kernel(&points, &probs, y, norm);
    ScoreValue::new("owes", value, params)
}

/// Vertically re-scaled kernel score with kernel `ρ`:
/// `Ê[ρ(X,y)w(X)w(y)] - ½Ê[ρ(X,X')w(X)w(X')] + (Ê[ρ(X,x₀)w(X)] - ρ(y,x₀)w(y))(Ê[w(X)] - w(y))`.
///
/// The fair estimator uses `m(m-1)` for the pair term and replaces the
/// product of the two ensemble means by its unbiased U-statistic.
fn vr_kernel(
    points: &[&[f64]],
    ws: &[f64],
    y: &[f64],
    wy: f64,
    x0: &[f64],
    estimator: EnsembleEstimator,
    rho: impl Fn(&[f64], &[f64]) -> f64,
) -> f64 {
    let m = points.len() as f64;
    let first = points.iter().zip(ws).map(|(x, w)| rho(x, y) * w).sum::<f64>() / m * wy;
    let mut pair = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            pair += rho(points[i], points[j]) * ws[i] * ws[j];
        }
    }
    let refs: Vec<f64> = points.iter().zip(ws).map(|(x, w)| rho(x, x0) * w).collect();
    let ref_sum: f64 = refs.iter().sum();
    let w_sum: f64 = ws.iter().sum();
    let ry = rho(y, x0) * wy;
    if estimator == EnsembleEstimator::Fair && points.len() > 1 {
        let cross: f64 = refs.iter().zip(ws).map(|(r, w)| r * w).sum();
        let product = (ref_sum * w_sum - cross) / (m * (m - 1.0));
        return first - pair / (m * (m - 1.0)) + product - ref_sum / m * wy - ry * w_sum / m + ry * wy;
    }
    first - pair / (m * m) + (ref_sum / m - ry) * (w_sum / m - wy)
}

/// Vertically re-scaled energy score.
pub fn vr_energy_score(ens: &MvEnsemble, y: &[f64], w: &WeightFunction, x0: &[f64]) -> Result<ScoreValue> {
    vr_energy_score_with(ens, y, w, x0, EnsembleEstimator::Plain)
}

pub fn vr_energy_score_with(ens: &MvEnsemble, y: &[f64], w: &WeightFunction, x0: &[f64], estimator: EnsembleEstimator) -> Result<ScoreValue> {
    check_obs(ens, y)?;
    ens.check_dim(x0)?;
    let ws = member_weights(ens, w)?;
    let wy = w.eval(y)?;
    let points: Vec<&[f64]> = ens.members().collect();
    let value = vr_kernel(&points, &ws, y, wy, x0, estimator, norm);
    let fair = estimator == EnsembleEstimator::Fair;
    ScoreValue::new("vres", value, ScoreParams { weight: Some(w.name()), reference: Some(x0.to_vec()), fair, ..Default::default() })
}

/// Vertically re-scaled variogram score.
///
/// The variogram score is the kernel score of the squared distance between
/// pair-feature vectors `γ(x) = (√(2h_ij)|x_i - x_j|^p)_{i<j}`:
/// `VS = Ê‖γ(X) - γ(y)‖² - ½Ê‖γ(X) - γ(X')‖²`. This extension re-scales that
/// kernel exactly as the vrCRPS re-scales `|x - y|`, with reference point
/// `spec.reference` (the origin by default).
pub fn vr_variogram_score(ens: &MvEnsemble, y: &[f64], w: &WeightFunction, spec: &VariogramSpec) -> Result<ScoreValue> {
    vr_variogram_score_with(ens, y, w, spec, EnsembleEstimator::Plain)
}

pub fn vr_variogram_score_with(
    ens: &MvEnsemble,
    y: &[f64],
    w: &WeightFunction,
    spec: &VariogramSpec,
    estimator: EnsembleEstimator,
) -> Result<ScoreValue> {
    check_obs(ens, y)?;
    spec.validate(ens.dim())?;
    let ws = member_weights(ens, w)?;
    let wy = w.eval(y)?;
    let x0 = spec.reference.clone().unwrap_or_else(|| vec![0.0; ens.dim()]);
    let feats: Vec<Vec<f64>> = ens.members().map(|x| spec.features(x)).collect();
    let points: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
    let value = vr_kernel(&points, &ws, &spec.features(y), wy, &spec.features(&x0), estimator, sq_dist);
    ScoreValue::new(
        "vrvs",
        value,
        ScoreParams {
            weight: Some(w.name()),
            reference: Some(x0),
            order: Some(spec.order),
            fair: estimator == EnsembleEstimator::Fair,
            ..Default::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::HeatLevel;
    use crate::uniscores::crps_ensemble;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ens(members: &[&[f64]]) -> MvEnsemble {
        MvEnsemble::from_members(&members.iter().map(|m| m.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_ens(rng: &mut ChaCha8Rng, m: usize, d: usize) -> MvEnsemble {
        let members: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(20.0..30.0)).collect()).collect();
        MvEnsemble::from_members(&members).unwrap()
    }

    /// Energy score by the literal double sum over ordered pairs.
    fn es_brute(members: &[Vec<f64>], y: &[f64]) -> f64 {
        let m = members.len() as f64;
        let first: f64 = members.iter().map(|x| norm(x, y)).sum::<f64>() / m;
        let pair: f64 = members.iter().flat_map(|a| members.iter().map(move |b| norm(a, b))).sum();
        first - pair / (2.0 * m * m)
    }

    /// Variogram score by the literal double sum over (i, j).
    fn vs_brute(members: &[Vec<f64>], y: &[f64], p: f64) -> f64 {
        let d = y.len();
        let m = members.len() as f64;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let e = members.iter().map(|x| (x[i] - x[j]).abs().powf(p)).sum::<f64>() / m;
                s += (e - (y[i] - y[j]).abs().powf(p)).powi(2);
            }
        }
        s
    }

    #[test]
    fn energy_score_examples() {
        let one_d = [0.3, -1.2, 2.5, 0.9];
        let e = MvEnsemble::from_rows(&[one_d.to_vec()]).unwrap();
        assert_abs_diff_eq!(energy_score(&e, &[0.4]).unwrap().value, crps_ensemble(&one_d, 0.4).unwrap().value, epsilon = 1e-12);
        assert_eq!(energy_score(&ens(&[&[1.0, 2.0]]), &[1.0, 2.0]).unwrap().value, 0.0);
        assert_abs_diff_eq!(energy_score(&ens(&[&[0.0, 0.0], &[2.0, 0.0]]), &[1.0, 0.0]).unwrap().value, 0.5, epsilon = 1e-15);
        assert!(matches!(energy_score(&ens(&[&[0.0, 0.0]]), &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn variogram_score_examples() {
        let spec = VariogramSpec::default();
        let e = MvEnsemble::from_rows(&[vec![0.3, -1.2, 2.5]]).unwrap();
        assert_eq!(variogram_score(&e, &[7.0], &spec).unwrap().value, 0.0);
        assert_eq!(variogram_score(&ens(&[&[1.0, 2.0]]), &[1.0, 2.0], &spec).unwrap().value, 0.0);
        assert_abs_diff_eq!(variogram_score(&ens(&[&[0.0, 1.0]]), &[0.0, 0.0], &spec).unwrap().value, 2.0, epsilon = 1e-15);
        assert!(variogram_score(&ens(&[&[0.0, 1.0]]), &[0.0, 0.0], &VariogramSpec::with_order(0.0)).is_err());
    }

    #[test]
    fn scores_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let e = random_ens(&mut rng, 7, 3);
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(20.0..30.0)).collect();
            let members: Vec<Vec<f64>> = e.members().map(<[f64]>::to_vec).collect();
            assert_abs_diff_eq!(energy_score(&e, &y).unwrap().value, es_brute(&members, &y), epsilon = 1e-12);
            assert_abs_diff_eq!(
                variogram_score(&e, &y, &VariogramSpec::default()).unwrap().value,
                vs_brute(&members, &y, 0.5),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn collapse_examples() {
        let v = ChainingFunction::collapse_outside(WeightFunction::heat_level(HeatLevel::new(3).unwrap()), vec![25.0; 3]).unwrap();
        let cold = ens(&[&[20.0, 21.0, 22.0], &[24.0, 24.0, 24.0]]);
        assert_eq!(tw_energy_score(&cold, &[23.0, 22.0, 21.0], &v).unwrap().value, 0.0);
        assert_eq!(tw_variogram_score(&cold, &[23.0, 22.0, 21.0], &v, &VariogramSpec::default()).unwrap().value, 0.0);

        // Only y satisfies level 3: members collapse to z₀ = (25, 25, 25).
        let e = ens(&[&[24.0, 24.0, 24.0], &[28.0, 28.0, 28.0]]);
        let y = [26.0, 26.0, 26.0];
        let expected = norm(&[25.0; 3], &y);
        assert_abs_diff_eq!(tw_energy_score(&e, &y, &v).unwrap().value, expected, epsilon = 1e-12);
    }

    #[test]
    fn ow_energy_examples() {
        let e = ens(&[&[0.0, 1.0], &[2.0, 3.0], &[5.0, 4.0]]);
        let y = [1.0, 2.0];
        assert_abs_diff_eq!(
            ow_energy_score(&e, &y, &WeightFunction::Constant).unwrap().value,
            energy_score(&e, &y).unwrap().value,
            epsilon = 1e-12
        );
        let b = WeightFunction::BoxIndicator { lower: vec![-1.0, 0.0], upper: vec![3.0, 3.5] };
        assert_eq!(ow_energy_score(&e, &[9.0, 9.0], &b).unwrap().value, 0.0);
        // Binary weight keeping the first two members: ES of the sub-ensemble.
        let kept = ens(&[&[0.0, 1.0], &[2.0, 3.0]]);
        assert_abs_diff_eq!(ow_energy_score(&e, &y, &b).unwrap().value, energy_score(&kept, &y).unwrap().value, epsilon = 1e-12);
        let none = WeightFunction::BoxIndicator { lower: vec![0.5, 1.5], upper: vec![1.5, 2.5] };
        assert!(matches!(ow_energy_score(&e, &y, &none), Err(Error::WeightedMassZero { .. })));
    }

    #[test]
    fn vr_energy_examples() {
        let e = ens(&[&[0.0, 1.0], &[2.0, 3.0], &[5.0, 4.0]]);
        let y = [1.0, 2.0];
        assert_abs_diff_eq!(
            vr_energy_score(&e, &y, &WeightFunction::Constant, &[3.0, -1.0]).unwrap().value,
            energy_score(&e, &y).unwrap().value,
            epsilon = 1e-12
        );
        let b = WeightFunction::BoxIndicator { lower: vec![10.0, 10.0], upper: vec![11.0, 11.0] };
        assert_eq!(vr_energy_score(&e, &y, &b, &[0.0, 0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn vr_energy_with_collapse_point_equals_tw() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = WeightFunction::heat_level(HeatLevel::new(2).unwrap());
        let z0 = vec![25.0, 25.0, 25.0];
        let v = ChainingFunction::collapse_outside(w.clone(), z0.clone()).unwrap();
        for _ in 0..200 {
            let e = random_ens(&mut rng, 6, 3);
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(20.0..30.0)).collect();
            let vr = vr_energy_score(&e, &y, &w, &z0).unwrap().value;
            let tw = tw_energy_score(&e, &y, &v).unwrap().value;
            assert_abs_diff_eq!(vr, tw, epsilon = 1e-12);
        }
    }

    /// vrVS by the literal expansion over all ordered member pairs.
    fn vrvs_brute(members: &[Vec<f64>], y: &[f64], w: &WeightFunction, x0: &[f64], p: f64) -> f64 {
        let rho = |a: &[f64], b: &[f64]| {
            let d = a.len();
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += ((a[i] - a[j]).abs().powf(p) - (b[i] - b[j]).abs().powf(p)).powi(2);
                }
            }
            s
        };
        let m = members.len() as f64;
        let ws: Vec<f64> = members.iter().map(|x| w.eval(x).unwrap()).collect();
        let wy = w.eval(y).unwrap();
        let mut first = 0.0;
        let mut pair = 0.0;
        let mut reference = 0.0;
        for (a, wa) in members.iter().zip(&ws) {
            first += rho(a, y) * wa * wy / m;
            reference += rho(a, x0) * wa / m;
            for (b, wb) in members.iter().zip(&ws) {
                pair += rho(a, b) * wa * wb / (m * m);
            }
        }
        first - 0.5 * pair + (reference - rho(y, x0) * wy) * (ws.iter().sum::<f64>() / m - wy)
    }

    #[test]
    fn vr_variogram_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = VariogramSpec { reference: Some(vec![25.0, 26.0, 24.0]), ..Default::default() };
        for _ in 0..20 {
            let e = random_ens(&mut rng, 8, 3);
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(20.0..30.0)).collect();
            assert_abs_diff_eq!(
                vr_variogram_score(&e, &y, &WeightFunction::Constant, &spec).unwrap().value,
                variogram_score(&e, &y, &spec).unwrap().value,
                epsilon = 1e-10
            );
            let w = WeightFunction::MvGaussCdf { mu: vec![25.0; 3], variances: vec![4.0; 3] };
            let members: Vec<Vec<f64>> = e.members().map(<[f64]>::to_vec).collect();
            let brute = vrvs_brute(&members, &y, &w, &[25.0, 26.0, 24.0], 0.5);
            assert_abs_diff_eq!(vr_variogram_score(&e, &y, &w, &spec).unwrap().value, brute, epsilon = 1e-12);
        }
        let zero = WeightFunction::BoxIndicator { lower: vec![0.0; 3], upper: vec![1.0; 3] };
        let e = random_ens(&mut rng, 5, 3);
        assert_eq!(vr_variogram_score(&e, &[22.0, 23.0, 24.0], &zero, &spec).unwrap().value, 0.0);
    }

    #[test]
    fn fair_energy_score() {
        let e = ens(&[&[0.0, 0.0], &[2.0, 0.0]]);
        let fair = energy_score_with(&e, &[1.0, 0.0], EnsembleEstimator::Fair).unwrap();
        assert_abs_diff_eq!(fair.value, 0.0, epsilon = 1e-15);
    }

    /// Averaging a fair score over every ordered 3-member ensemble drawn from
    /// a uniform law on three atoms gives the score of that law, which the
    /// plain estimator evaluates exactly on the atoms themselves.
    #[test]
    fn fair_estimators_are_unbiased() {
        let atoms = [vec![20.0, 22.5, 21.0], vec![24.0, 21.0, 26.5], vec![18.5, 19.0, 23.0]];
        let y = [21.0, 23.0, 22.0];
        let law = MvEnsemble::from_members(&atoms).unwrap();
        let w = WeightFunction::MvGaussCdf { mu: vec![21.0; 3], variances: vec![4.0; 3] };
        let spec = VariogramSpec { reference: Some(vec![20.0, 20.0, 20.0]), ..VariogramSpec::with_order(0.5) };
        let x0 = [20.0, 21.0, 22.0];
        type Scorer<'a> = Box<dyn Fn(&MvEnsemble, EnsembleEstimator) -> f64 + 'a>;
        let scorers: Vec<Scorer> = vec![
            Box::new(|e, est| energy_score_with(e, &y, est).unwrap().value),
            Box::new(|e, est| variogram_score_with(e, &y, &spec, est).unwrap().value),
            Box::new(|e, est| vr_energy_score_with(e, &y, &w, &x0, est).unwrap().value),
            Box::new(|e, est| vr_variogram_score_with(e, &y, &w, &spec, est).unwrap().value),
        ];
        for score in &scorers {
            let mut mean = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        let e = MvEnsemble::from_members(&[atoms[a].clone(), atoms[b].clone(), atoms[c].clone()]).unwrap();
                        mean += score(&e, EnsembleEstimator::Fair) / 27.0;
                    }
                }
            }
            assert_abs_diff_eq!(mean, score(&law, EnsembleEstimator::Plain), epsilon = 1e-10);
        }
    }

    #[test]
    fn variogram_pair_weights() {
        let e = ens(&[&[0.0, 1.0, 4.0]]);
        let y = [0.0, 0.0, 0.0];
        let h = vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]];
        let spec = VariogramSpec { weights: Some(h), ..Default::default() };
        // Only the (1,3) and (3,1) pairs count: 2 · (√4)² = 8.
        assert_abs_diff_eq!(variogram_score(&e, &y, &spec).unwrap().value, 8.0, epsilon = 1e-12);
        let asym = VariogramSpec { weights: Some(vec![vec![1.0, 0.5], vec![0.4, 1.0]]), ..Default::default() };
        assert!(variogram_score(&ens(&[&[0.0, 1.0]]), &[0.0, 0.0], &asym).is_err());
    }

    proptest! {
        #[test]
        fn identity_chaining_recovers_unweighted(
            flat in prop::collection::vec(-10.0f64..10.0, 6..30),
            y in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let members: Vec<Vec<f64>> = flat.chunks_exact(3).map(<[f64]>::to_vec).collect();
            let e = MvEnsemble::from_members(&members).unwrap();
            let spec = VariogramSpec::default();
            let es = energy_score(&e, &y).unwrap().value;
            let tw = tw_energy_score(&e, &y, &ChainingFunction::Identity).unwrap().value;
            prop_assert!((es - tw).abs() < 1e-12);
            let vs = variogram_score(&e, &y, &spec).unwrap().value;
            let twvs = tw_variogram_score(&e, &y, &ChainingFunction::Identity, &spec).unwrap().value;
            prop_assert!((vs - twvs).abs() < 1e-12);
        }

        #[test]
        fn permutation_invariance(
            flat in prop::collection::vec(-10.0f64..10.0, 6..30),
            y in prop::collection::vec(-10.0f64..10.0, 2),
        ) {
            let mut members: Vec<Vec<f64>> = flat.chunks_exact(2).map(<[f64]>::to_vec).collect();
            let w = WeightFunction::MvGaussPdf { mu: vec![0.0, 0.0], variances: vec![9.0, 9.0] };
            let spec = VariogramSpec::default();
            let score = |m: &[Vec<f64>]| {
                let e = MvEnsemble::from_members(m).unwrap();
                [
                    energy_score(&e, &y).unwrap().value,
                    variogram_score(&e, &y, &spec).unwrap().value,
                    vr_energy_score(&e, &y, &w, &[0.0, 0.0]).unwrap().value,
                    ow_energy_score(&e, &y, &w).unwrap().value,
                ]
            };
            let a = score(&members);
            members.reverse();
            let b = score(&members);
            for (x, z) in a.iter().zip(&b) {
                prop_assert!((x - z).abs() < 1e-12);
            }
        }
    }
}
