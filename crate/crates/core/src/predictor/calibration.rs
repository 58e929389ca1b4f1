use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LikabilityRating;
use crate::error::{Error, Result};
use crate::metrics::{mean, std_dev};

/// Target moments (`mu`, `sigma`) and prediction moments (`mu_hat`, `sigma_hat`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupMoments {
    pub mu: f64,
    pub sigma: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
}

impl GroupMoments {
    fn fit(pred: &[f64], target: &[f64]) -> Result<Self> {
        let m = Self {
            mu: mean(target),
            sigma: std_dev(target),
            mu_hat: mean(pred),
            sigma_hat: std_dev(pred),
        };
        if !(m.sigma_hat > 0.0) || !m.sigma_hat.is_finite() {
            return Err(Error::Data("predictions have zero variance; cannot calibrate".into()));
        }
        Ok(m)
    }

    /// `(sigma / sigma_hat) * (y - mu_hat) + mu`.
    pub fn apply(&self, y: f64) -> f64 {
        (self.sigma / self.sigma_hat) * (y - self.mu_hat) + self.mu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationParams {
    pub groups: [GroupMoments; 4],
    /// Moments over all four groups' values together.
    pub pooled: GroupMoments,
}

impl CalibrationParams {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_slice(&bytes)?;
        if p.groups.iter().chain([&p.pooled]).any(|g| !(g.sigma_hat > 0.0)) {
            return Err(Error::Data(format!("{}: sigma_hat must be positive", path.display())));
        }
        Ok(p)
    }

    pub fn identity() -> Self {
        let id = GroupMoments {
            mu: 0.0,
            sigma: 1.0,
            mu_hat: 0.0,
            sigma_hat: 1.0,
        };
        Self {
            groups: [id; 4],
            pooled: id,
        }
    }

    /// Apply the pooled transform to every group.
    pub fn apply_pooled(&self, y: &LikabilityRating) -> LikabilityRating {
        LikabilityRating::new(y.values.map(|v| self.pooled.apply(v)))
    }
}

/// Fit per-group and pooled moments on a validation set (population std).
pub fn fit_calibration(
    predictions: &[LikabilityRating],
    targets: &[LikabilityRating],
) -> Result<CalibrationParams> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.len() < 2 {
        return Err(Error::InvalidInput("calibration needs at least 2 samples".into()));
    }
    let column = |rs: &[LikabilityRating], g: usize| rs.iter().map(|r| r.values[g]).collect::<Vec<_>>();
    let mut groups = Vec::with_capacity(4);
    for g in 0..4 {
        groups.push(GroupMoments::fit(&column(predictions, g), &column(targets, g))?);
    }
    let flat = |rs: &[LikabilityRating]| rs.iter().flat_map(|r| r.values).collect::<Vec<_>>();
    let pooled = GroupMoments::fit(&flat(predictions), &flat(targets))?;
    Ok(CalibrationParams {
        groups: groups.try_into().expect("four groups"),
        pooled,
    })
}

/// Per-group affine post-filter.
pub fn apply_calibration(params: &CalibrationParams, y_hat: &LikabilityRating) -> LikabilityRating {
    let mut out = [0.0; 4];
    for (g, o) in out.iter_mut().enumerate() {
        *o = params.groups[g].apply(y_hat.values[g]);
    }
    LikabilityRating::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{kendall_tau, spearman_srcc};
    use proptest::prelude::*;

    fn ratings(v: &[[f64; 4]]) -> Vec<LikabilityRating> {
        v.iter().map(|&r| r.into()).collect()
    }

    #[test]
    fn substitution_example() {
        let m = GroupMoments { mu: 0.0, sigma: 0.3, mu_hat: 0.1, sigma_hat: 0.2 };
        assert!((m.apply(0.5) - 0.6).abs() < 1e-15);
        let p = CalibrationParams { groups: [m; 4], pooled: m };
        assert!((apply_calibration(&p, &LikabilityRating::splat(0.5)).values[2] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn identity_and_symmetric_pair() {
        let t = ratings(&[[-1.0; 4], [1.0; 4]]);
        let p = fit_calibration(&t, &t).unwrap();
        for g in p.groups {
            assert_eq!((g.mu, g.sigma), (0.0, 1.0));
            assert_eq!((g.mu_hat, g.sigma_hat), (g.mu, g.sigma));
        }
        assert_eq!(apply_calibration(&p, &t[0]), t[0]);
    }

    #[test]
    fn affine_predictions_moments() {
        let t = ratings(&[[0.1, 0.2, -0.3, 0.0], [0.5, -0.5, 0.25, 0.75], [-0.9, 0.4, 0.6, -0.2]]);
        let p: Vec<LikabilityRating> = t.iter().map(|r| LikabilityRating::new(r.values.map(|v| 2.0 * v + 1.0))).collect();
        let c = fit_calibration(&p, &t).unwrap();
        for g in c.groups {
            assert!((g.mu_hat - (2.0 * g.mu + 1.0)).abs() < 1e-12);
            assert!((g.sigma_hat - 2.0 * g.sigma).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let t = ratings(&[[0.0; 4], [1.0; 4]]);
        let flat = ratings(&[[0.3; 4], [0.3; 4]]);
        assert!(fit_calibration(&flat, &t).is_err());
        assert!(fit_calibration(&t[..1], &t[..1]).is_err());
        assert!(fit_calibration(&t, &t[..1]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let t = ratings(&[[0.1, 0.2, -0.3, 0.0], [0.5, -0.5, 0.25, 0.75]]);
        let c = fit_calibration(&t, &t).unwrap();
        c.save(&p).unwrap();
        assert_eq!(CalibrationParams::load(&p).unwrap(), c);
    }

    proptest! {
        #[test]
        fn moments_match_and_ranks_preserved(
            rows in proptest::collection::vec((-1.0f64..1.0, -3.0f64..3.0), 3..40),
        ) {
            let t = ratings(&rows.iter().map(|&(a, _)| [a, -a, a * 0.5, a]).collect::<Vec<_>>());
            let p = ratings(&rows.iter().map(|&(a, b)| [a + b, b, 0.3 * b - a, 2.0 * a]).collect::<Vec<_>>());
            let Ok(c) = fit_calibration(&p, &t) else { return Ok(()); };
            let q: Vec<LikabilityRating> = p.iter().map(|y| apply_calibration(&c, y)).collect();
            for g in 0..4 {
                let col = |rs: &[LikabilityRating]| rs.iter().map(|r| r.values[g]).collect::<Vec<_>>();
                let (qc, tc, pc) = (col(&q), col(&t), col(&p));
                prop_assert!((mean(&qc) - mean(&tc)).abs() < 1e-9);
                prop_assert!((std_dev(&qc) - std_dev(&tc)).abs() < 1e-9);
                if let (Ok(a), Ok(b)) = (spearman_srcc(&pc, &tc), spearman_srcc(&qc, &tc)) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
                if let (Ok(a), Ok(b)) = (kendall_tau(&pc, &tc), kendall_tau(&qc, &tc)) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
