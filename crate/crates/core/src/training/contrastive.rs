//! Contrastive loss on measured output distributions.
//!
//! `L = L₁ + β L₂ + L₃` with a tanh margin term, an exponential repulsion
//! between classes and a flat penalty for cross-class pairs that nearly coincide.

use serde::{Deserialize, Serialize};

use crate::error::{HqrnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveLossConfig {
    pub beta: f64,
    pub d_min: f64,
    pub close_threshold: f64,
    pub close_penalty_scale: f64,
}

impl Default for ContrastiveLossConfig {
    fn default() -> Self {
        Self {
            beta: 5.0,
            d_min: 0.1,
            close_threshold: 1e-2,
            close_penalty_scale: 100.0,
        }
    }
}

impl ContrastiveLossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("d_min", self.d_min),
            ("close_threshold", self.close_threshold),
            ("close_penalty_scale", self.close_penalty_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HqrnError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveLoss {
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Points that are the only member of their class get no L₁ term.
pub fn contrastive_loss<P: AsRef<[f64]>>(
    points: &[P],
    labels: &[usize],
    cfg: &ContrastiveLossConfig,
) -> Result<ContrastiveLoss> {
    if points.len() != labels.len() {
        return Err(HqrnError::DimensionMismatch {
            expected: points.len(),
            actual: labels.len(),
        });
    }
    if points.len() < 2 {
        return Err(HqrnError::InvalidParameter("contrastive loss needs at least 2 points".into()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(HqrnError::InvalidParameter("contrastive loss needs two classes".into()));
    }
    let n = points.len();
    let mut nearest_same = vec![f64::INFINITY; n];
    let mut nearest_diff = vec![f64::INFINITY; n];
    let (mut repulsion, mut cross_pairs, mut close) = (0.0, 0usize, 0usize);
    for i in 0..n {
        let pi = points[i].as_ref();
        for j in (i + 1)..n {
            let d = distance(pi, points[j].as_ref());
            if labels[i] == labels[j] {
                nearest_same[i] = nearest_same[i].min(d);
                nearest_same[j] = nearest_same[j].min(d);
            } else {
                nearest_diff[i] = nearest_diff[i].min(d);
                nearest_diff[j] = nearest_diff[j].min(d);
                repulsion += (-d / cfg.d_min).exp();
                cross_pairs += 1;
                if d < cfg.close_threshold {
                    close += 1;
                }
            }
        }
    }
    let (mut margin, mut counted) = (0.0, 0usize);
    for i in 0..n {
        if nearest_same[i].is_finite() {
            margin += (nearest_diff[i] - nearest_same[i]).tanh();
            counted += 1;
        }
    }
    let l1 = if counted == 0 { 0.0 } else { -margin / counted as f64 };
    let l2 = repulsion / cross_pairs as f64;
    let l3 = cfg.close_penalty_scale * close as f64;
    Ok(ContrastiveLoss {
        total: l1 + cfg.beta * l2 + l3,
        l1,
        l2,
        l3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn far_separated_classes() {
        let pts = [[0.0, 0.0], [0.0, 0.01], [30.0, 0.0], [30.0, 0.01]];
        let l = contrastive_loss(&pts, &[0, 0, 1, 1], &ContrastiveLossConfig::default()).unwrap();
        assert!((l.l1 + 1.0).abs() < 1e-12);
        assert!(l.l2 < 1e-40);
        assert_eq!(l.l3, 0.0);
    }

    #[test]
    fn singleton_classes_skip_margin() {
        let l = contrastive_loss(&[[0.0], [10.0]], &[0, 1], &ContrastiveLossConfig::default()).unwrap();
        assert_eq!(l.l1, 0.0);
    }

    #[test]
    fn coincident_cross_pairs() {
        let pts = [[0.25; 4], [0.25; 4], [0.25; 4]];
        let l = contrastive_loss(&pts, &[0, 1, 1], &ContrastiveLossConfig::default()).unwrap();
        assert_eq!(l.l3, 200.0);
        assert_eq!(l.l2, 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = ContrastiveLossConfig::default();
        assert!(contrastive_loss(&[[0.0]], &[0], &cfg).is_err());
        assert!(contrastive_loss(&[[0.0], [1.0]], &[1, 1], &cfg).is_err());
        assert!(contrastive_loss(&[[0.0], [1.0]], &[1], &cfg).is_err());
        let bad = ContrastiveLossConfig {
            d_min: 0.0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn four_point_layout_matches_scalar_evaluation() {
        let pts: [[f64; 4]; 4] = [
            [0.7, 0.1, 0.1, 0.1],
            [0.6, 0.2, 0.1, 0.1],
            [0.1, 0.1, 0.1, 0.7],
            [0.605, 0.195, 0.1, 0.1],
        ];
        let labels = [0, 0, 1, 1];
        let d = |a: usize, b: usize| -> f64 {
            let mut s = 0.0f64;
            for k in 0..4 {
                s += (pts[a][k] - pts[b][k]).powi(2);
            }
            s.sqrt()
        };
        // nearest distances by hand
        let l1 = -((d(0, 3) - d(0, 1)).tanh()
            + (d(1, 3) - d(0, 1)).tanh()
            + (d(2, 1) - d(2, 3)).tanh()
            + (d(3, 1) - d(3, 2)).tanh())
            / 4.0;
        let cross = [(0, 2), (0, 3), (1, 2), (1, 3)];
        let l2 = cross.iter().map(|&(a, b)| (-d(a, b) / 0.1).exp()).sum::<f64>() / 4.0;
        let l3 = 100.0; // only (1, 3) is closer than 1e-2
        assert!(d(1, 3) < 1e-2);
        let got = contrastive_loss(&pts, &labels, &ContrastiveLossConfig::default()).unwrap();
        assert!((got.l1 - l1).abs() < 1e-14);
        assert!((got.l2 - l2).abs() < 1e-14);
        assert_eq!(got.l3, l3);
        assert!((got.total - (l1 + 5.0 * l2 + l3)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounds_and_translation_invariance(
            raw in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 3..12),
            shift in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let labels: Vec<usize> = (0..raw.len()).map(|i| i % 2).collect();
            let cfg = ContrastiveLossConfig::default();
            let a = contrastive_loss(&raw, &labels, &cfg).unwrap();
            prop_assert!(a.l2 >= 0.0 && a.l3 >= 0.0);
            prop_assert!((-1.0..=1.0).contains(&a.l1));
            let moved: Vec<Vec<f64>> = raw
                .iter()
                .map(|p| p.iter().zip(&shift).map(|(x, s)| x + s).collect())
                .collect();
            let b = contrastive_loss(&moved, &labels, &cfg).unwrap();
            prop_assert!((a.l1 - b.l1).abs() < 1e-9);
            prop_assert!((a.l2 - b.l2).abs() < 1e-9);
            prop_assert_eq!(a.l3, b.l3);
        }
    }
}
