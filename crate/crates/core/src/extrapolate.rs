//! Least-squares extrapolation of finite-β (or finite-N) sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationModel {
    /// y = c + b/x
    InverseX,
    /// y = c + b/x²
    InverseXSquared,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Extrapolation {
    pub limit: f64,
    pub slope: f64,
    /// Root mean square of the fit residuals.
    pub residual: f64,
}

/// Fit y = c + b·t(x) by least squares and return c.
///
/// At least three points are required so that the residual carries information.
pub fn extrapolate(xs: &[f64], ys: &[f64], model: ExtrapolationModel) -> Result<Extrapolation> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) || xs.contains(&0.0) {
        return Err(Error::NonFinite("extrapolation input"));
    }
    let t: Vec<f64> = xs
        .iter()
        .map(|&x| match model {
            ExtrapolationModel::InverseX => 1.0 / x,
            ExtrapolationModel::InverseXSquared => 1.0 / (x * x),
        })
        .collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|ti| (ti - tm).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::param("xs", "all abscissae coincide"));
    }
    let sty: f64 = t.iter().zip(ys).map(|(ti, yi)| (ti - tm) * (yi - ym)).sum();
    let slope = sty / stt;
    let limit = ym - slope * tm;
    let residual = (t.iter().zip(ys).map(|(ti, yi)| (yi - limit - slope * ti).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Extrapolation { limit, slope, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_model_recovered() {
        let xs = [5.0, 10.0, 20.0, 40.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 / x).collect();
        let e = extrapolate(&xs, &ys, ExtrapolationModel::InverseX).unwrap();
        assert_relative_eq!(e.limit, 2.0, max_relative = 1e-12);
        assert_relative_eq!(e.slope, -3.0, max_relative = 1e-12);
        assert!(e.residual < 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 4.0 / (x * x)).collect();
        let e = extrapolate(&xs, &ys, ExtrapolationModel::InverseXSquared).unwrap();
        assert_relative_eq!(e.limit, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            extrapolate(&[1.0], &[1.0], ExtrapolationModel::InverseX),
            Err(Error::TooFewPoints { needed: 3, got: 1 })
        ));
        assert!(extrapolate(&[1.0, 2.0], &[1.0], ExtrapolationModel::InverseX).is_err());
    }
}
