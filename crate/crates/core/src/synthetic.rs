//! Built-in data generators with analytic models and closed-form effects.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curve::Method;
use crate::dataset::Dataset;
use crate::error::{EffectError, Result};
use crate::oracle::FnOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticName {
    /// `x1 ~ 5/6 U(-0.5, 0) + 1/6 U(0, 0.5)`, `x2 ~ N(0, 2)`,
    /// `x3 = x1 + N(0, 0.1)`;
    /// `f = sin(2 pi x1) (1{x1<0} - 2 * 1{x3<0}) + x1 x2 + x2`.
    CorrelatedTrio,
    /// `x ~ U(-1, 1)^3`; `f = 3 x1 1{x3>0} - 3 x1 1{x3<=0} + x3`.
    UncorrelatedRegional,
}

impl SyntheticName {
    pub const ALL: [SyntheticName; 2] = [SyntheticName::CorrelatedTrio, SyntheticName::UncorrelatedRegional];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticName::CorrelatedTrio => "correlated_trio",
            SyntheticName::UncorrelatedRegional => "uncorrelated_regional",
        }
    }

    /// The analytic model with its exact gradient.
    pub fn oracle(self) -> FnOracle {
        match self {
            SyntheticName::CorrelatedTrio => FnOracle::new(|r| {
                (2.0 * PI * r[0]).sin() * (ind(r[0] < 0.0) - 2.0 * ind(r[2] < 0.0)) + r[0] * r[1] + r[1]
            })
            .with_gradient(|r| {
                vec![
                    2.0 * PI * (2.0 * PI * r[0]).cos() * (ind(r[0] < 0.0) - 2.0 * ind(r[2] < 0.0)) + r[1],
                    r[0] + 1.0,
                    0.0,
                ]
            }),
            SyntheticName::UncorrelatedRegional => {
                FnOracle::new(|r| regional_slope(r[2]) * r[0] + r[2])
                    .with_gradient(|r| vec![regional_slope(r[2]), 0.0, 1.0])
            }
        }
    }
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn regional_slope(x3: f64) -> f64 {
    if x3 > 0.0 {
        3.0
    } else {
        -3.0
    }
}

impl fmt::Display for SyntheticName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticName {
    type Err = EffectError;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = SyntheticName::ALL.iter().map(|n| n.as_str()).collect();
                EffectError::InvalidArgument(format!(
                    "unknown synthetic dataset {s:?}; available: {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: SyntheticName,
    pub n: usize,
    pub seed: u64,
}

/// Samples the dataset and returns it with the analytic oracle.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, FnOracle)> {
    if spec.n == 0 {
        return Err(EffectError::InvalidArgument("sample count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = Array2::zeros((spec.n, 3));
    match spec.name {
        SyntheticName::CorrelatedTrio => {
            let x2 = Normal::new(0.0, 2.0).expect("valid sigma");
            let noise = Normal::new(0.0, 0.1).expect("valid sigma");
            for mut row in x.rows_mut() {
                let x1 = if rng.random_bool(5.0 / 6.0) {
                    rng.random_range(-0.5..0.0)
                } else {
                    rng.random_range(0.0..0.5)
                };
                row[0] = x1;
                row[1] = x2.sample(&mut rng);
                row[2] = x1 + noise.sample(&mut rng);
            }
        }
        SyntheticName::UncorrelatedRegional => {
            x.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
    }
    Ok((Dataset::new(x)?, spec.name.oracle()))
}

/// A closed-form effect of one feature.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth {
    pub description: &'static str,
    curve: fn(f64) -> f64,
    /// Half-width of the local-effect band around the curve, when known.
    pub band_half_width: Option<f64>,
}

impl GroundTruth {
    pub fn eval(&self, x: f64) -> f64 {
        (self.curve)(x)
    }
}

/// Closed-form global effects derived for the synthetic models. Curves are
/// defined up to an additive constant; center both sides before comparing.
pub fn ground_truth(name: SyntheticName, method: Method, feature: usize) -> Result<GroundTruth> {
    use Method::*;
    use SyntheticName::*;
    let gt = |description, curve, band_half_width| {
        Ok(GroundTruth {
            description,
            curve,
            band_half_width,
        })
    };
    match (name, method, feature) {
        // x3 tracks x1, so the -2 * 1{x3<0} term changes together with x1
        // and cancels the positive branch: accumulated effect -sin(2 pi x1).
        (CorrelatedTrio, Ale, 0) => gt("-sin(2 pi x1) 1{x1<0}", |x| -(2.0 * PI * x).sin() * ind(x < 0.0), None),
        (CorrelatedTrio, Rhale, 0) => gt(
            "-sin(2 pi x1) 1{x1<0}",
            |x| -(2.0 * PI * x).sin() * ind(x < 0.0),
            Some(2.0),
        ),
        (CorrelatedTrio, Pdp, 0) => gt(
            "sin(2 pi x1) (1{x1<0} - 5/3)",
            |x| (2.0 * PI * x).sin() * (ind(x < 0.0) - 5.0 / 3.0),
            None,
        ),
        (CorrelatedTrio, DPdp, 0) => gt(
            "2 pi cos(2 pi x1) (1{x1<0} - 5/3)",
            |x| 2.0 * PI * (2.0 * PI * x).cos() * (ind(x < 0.0) - 5.0 / 3.0),
            None,
        ),
        (CorrelatedTrio, ShapDp, 0) => gt(
            "-5/6 sin(2 pi x1) + 5/(6 pi)",
            |x| -5.0 / 6.0 * (2.0 * PI * x).sin() + 5.0 / (6.0 * PI),
            None,
        ),
        (UncorrelatedRegional, Ale | Rhale | Pdp | ShapDp, 0) => gt("0", |_| 0.0, None),
        (UncorrelatedRegional, DPdp, 0) => gt("0", |_| 0.0, Some(3.0)),
        (UncorrelatedRegional, Ale | Rhale | Pdp | ShapDp, 2) => gt("x3", |x| x, None),
        (UncorrelatedRegional, DPdp, 2) => gt("1", |_| 1.0, None),
        _ => Err(EffectError::InvalidArgument(format!(
            "no closed-form {method} effect derived for feature {feature} of {name}"
        ))),
    }
}

/// ICE curve of one instance of `correlated_trio` as a function of x1.
pub fn correlated_trio_ice(x2: f64, x3: f64, x1: f64) -> f64 {
    (2.0 * PI * x1).sin() * (ind(x1 < 0.0) - 2.0 * ind(x3 < 0.0)) + x1 * x2 + x2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{fd_jacobian, ModelOracle};

    fn spec(name: SyntheticName, n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec { name, n, seed }
    }

    #[test]
    fn correlated_trio_marginals() {
        let (ds, _) = generate(&spec(SyntheticName::CorrelatedTrio, 100_000, 1)).unwrap();
        let x1 = ds.column(0);
        let x3 = ds.column(2);
        let neg = x1.iter().filter(|&&v| v < 0.0).count() as f64 / x1.len() as f64;
        assert!((neg - 5.0 / 6.0).abs() < 0.01);
        let (m1, m3) = (x1.mean().unwrap(), x3.mean().unwrap());
        let cov: f64 = x1.iter().zip(x3).map(|(a, b)| (a - m1) * (b - m3)).sum();
        let v1: f64 = x1.iter().map(|a| (a - m1).powi(2)).sum();
        let v3: f64 = x3.iter().map(|b| (b - m3).powi(2)).sum();
        assert!(cov / (v1 * v3).sqrt() >= 0.9);
        let sd2 = ds.column(1).std(0.0);
        assert!((sd2 - 2.0).abs() < 0.05);
    }

    #[test]
    fn regional_model_value() {
        let f = SyntheticName::UncorrelatedRegional.oracle();
        let y = f.predict(ndarray::array![[1.0, 0.0, 1.0], [1.0, 0.0, -1.0]].view()).unwrap();
        assert_eq!(y.to_vec(), vec![4.0, -4.0]);
    }

    #[test]
    fn generation_is_deterministic() {
        for name in SyntheticName::ALL {
            let (a, _) = generate(&spec(name, 500, 9)).unwrap();
            let (b, _) = generate(&spec(name, 500, 9)).unwrap();
            assert_eq!(a.values(), b.values());
            let (c, _) = generate(&spec(name, 500, 10)).unwrap();
            assert_ne!(a.values(), c.values());
        }
    }

    #[test]
    fn unknown_name_lists_options() {
        let err = "nosuch".parse::<SyntheticName>().unwrap_err().to_string();
        assert!(err.contains("correlated_trio") && err.contains("uncorrelated_regional"));
        assert_eq!("correlated_trio".parse::<SyntheticName>().unwrap(), SyntheticName::CorrelatedTrio);
    }

    #[test]
    fn analytic_gradients_match_differences() {
        for name in SyntheticName::ALL {
            let (ds, f) = generate(&spec(name, 400, 3)).unwrap();
            let keep: Vec<usize> = (0..ds.n_rows())
                .filter(|&i| ds.row(i).iter().all(|v| v.abs() > 1e-3))
                .take(100)
                .collect();
            let x = ds.select_rows(&keep);
            let steps = vec![1e-5; 3];
            let fd = fd_jacobian(&f, x.values(), &steps).unwrap();
            let an = f.jacobian(x.values()).unwrap().unwrap();
            let err = (&fd - &an).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-6, "{name}: {err}");
        }
    }

    #[test]
    fn ground_truth_values() {
        let rhale = ground_truth(SyntheticName::CorrelatedTrio, Method::Rhale, 0).unwrap();
        assert!((rhale.eval(-0.25) - 1.0).abs() < 1e-12);
        assert_eq!(rhale.band_half_width, Some(2.0));
        let pdp = ground_truth(SyntheticName::CorrelatedTrio, Method::Pdp, 0).unwrap();
        assert!((pdp.eval(0.25) + 5.0 / 3.0).abs() < 1e-12);
        let ale = ground_truth(SyntheticName::CorrelatedTrio, Method::Ale, 0).unwrap();
        assert_eq!(ale.eval(0.25), 0.0);
        assert!(ground_truth(SyntheticName::CorrelatedTrio, Method::Pdp, 1).is_err());
    }

    #[test]
    fn ice_matches_model() {
        let f = SyntheticName::CorrelatedTrio.oracle();
        let row = ndarray::array![[-0.2, 1.3, 0.05]];
        let y = f.predict(row.view()).unwrap()[0];
        assert!((y - correlated_trio_ice(1.3, 0.05, -0.2)).abs() < 1e-15);
    }
}
