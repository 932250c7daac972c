use std::fmt;
use std::str::FromStr;

use super::DataError;
use crate::autograd::sigmoid;

/// Upper end of the insole's recording range.
pub const PRESSURE_MAX_KPA: f64 = 862.0;

/// Clips both feet to `[0, 862]` kPa and divides by the total. Returns
/// `None` for an all-zero (airborne) frame.
pub fn preprocess_pressure(grid: &[f64]) -> Option<Vec<f64>> {
    let clipped: Vec<f64> = grid.iter().map(|v| v.clamp(0.0, PRESSURE_MAX_KPA)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(clipped.into_iter().map(|v| v / total).collect())
}

/// `sigmoid(cell / body_weight)` for every cell.
pub fn sigmoid_normalize_pressure(grid: &[f64], body_weight: Option<f64>) -> Result<Vec<f64>, DataError> {
    let w = body_weight.filter(|w| *w > 0.0).ok_or(DataError::MissingBodyWeight)?;
    Ok(grid.iter().map(|v| sigmoid(v / w)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactRule {
    /// Region maximum above `threshold` kPa.
    MaxExceedsKpa,
    /// Region force above `threshold` times body weight. Cells hold
    /// vertical force in N.
    VgrfFractionOfWeight,
    /// Region maximum of the sigmoid-normalized grid above `threshold`.
    SigmoidNormalized,
}

impl ContactRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ContactRule::MaxExceedsKpa => "max_exceeds_kpa",
            ContactRule::VgrfFractionOfWeight => "vgrf_fraction_of_weight",
            ContactRule::SigmoidNormalized => "sigmoid_normalized",
        }
    }
}

impl fmt::Display for ContactRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContactRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "max_exceeds_kpa" => Ok(ContactRule::MaxExceedsKpa),
            "vgrf_fraction_of_weight" => Ok(ContactRule::VgrfFractionOfWeight),
            "sigmoid_normalized" => Ok(ContactRule::SigmoidNormalized),
            other => Err(format!(
                "unknown contact rule {other:?}, expected max_exceeds_kpa, vgrf_fraction_of_weight or sigmoid_normalized"
            )),
        }
    }
}

/// How contact labels are read off a pressure frame. Each foot is split
/// into `regions / 2` equal bands of rows, heel first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSpec {
    pub rule: ContactRule,
    pub threshold: f64,
    pub regions: usize,
}

impl Default for ContactSpec {
    fn default() -> Self {
        ContactSpec {
            rule: ContactRule::MaxExceedsKpa,
            threshold: 10.0,
            regions: 8,
        }
    }
}

impl ContactSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.regions == 0 || self.regions % 2 != 0 {
            return Err(format!(
                "contact regions must be even and positive, got {}",
                self.regions
            ));
        }
        let ok = match self.rule {
            ContactRule::MaxExceedsKpa => self.threshold > 0.0,
            ContactRule::VgrfFractionOfWeight | ContactRule::SigmoidNormalized => {
                self.threshold > 0.0 && self.threshold < 1.0
            }
        };
        if !ok {
            return Err(format!(
                "threshold {} is out of range for rule {}",
                self.threshold, self.rule
            ));
        }
        Ok(())
    }
}

/// Row range `[start, end)` of each band when `rows` are split into
/// `bands` near-equal parts.
pub fn region_rows(rows: usize, bands: usize) -> Vec<(usize, usize)> {
    (0..bands).map(|b| (b * rows / bands, (b + 1) * rows / bands)).collect()
}

/// One bit per region, left foot bands first.
pub fn derive_contact(
    grid: &[f64],
    rows: usize,
    cols: usize,
    spec: &ContactSpec,
    body_weight: Option<f64>,
) -> Result<Vec<bool>, DataError> {
    spec.validate().map_err(DataError::Format)?;
    if grid.len() != 2 * rows * cols {
        return Err(DataError::Format(format!(
            "pressure frame has {} cells, expected 2 x {rows} x {cols}",
            grid.len()
        )));
    }
    let bands = spec.regions / 2;
    if rows < bands {
        return Err(DataError::Format(format!("{rows} grid rows cannot form {bands} bands")));
    }
    let weight = match spec.rule {
        ContactRule::MaxExceedsKpa => None,
        _ => Some(body_weight.filter(|w| *w > 0.0).ok_or(DataError::MissingBodyWeight)?),
    };
    let layout = region_rows(rows, bands);
    let mut bits = Vec::with_capacity(spec.regions);
    for foot in grid.chunks(rows * cols) {
        for &(start, end) in &layout {
            let cells = &foot[start * cols..end * cols];
            let max = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let fires = match (spec.rule, weight) {
                (ContactRule::MaxExceedsKpa, _) => max > spec.threshold,
                (ContactRule::VgrfFractionOfWeight, Some(w)) => {
                    cells.iter().map(|v| v.max(0.0)).sum::<f64>() > spec.threshold * w
                }
                (ContactRule::SigmoidNormalized, Some(w)) => sigmoid(max / w) > spec.threshold,
                _ => unreachable!("body weight checked above"),
            };
            bits.push(fires);
        }
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn clipping_and_normalization() {
        let d = preprocess_pressure(&[900.0, 0.0]).unwrap();
        assert_eq!(d, vec![1.0, 0.0]);
        let d = preprocess_pressure(&[10.0, 30.0]).unwrap();
        assert_eq!(d, vec![0.25, 0.75]);
        let d = preprocess_pressure(&[0.0, 0.0, 7.0, 0.0]).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(preprocess_pressure(&[0.0; 6]), None);
        assert_eq!(preprocess_pressure(&[-5.0, 0.0]), None);
        // The clipped value itself.
        let d = preprocess_pressure(&[900.0, 862.0]).unwrap();
        assert_eq!(d, vec![0.5, 0.5]);
    }

    #[test]
    fn sigmoid_normalization() {
        let g = sigmoid_normalize_pressure(&[0.0, 700.0], Some(700.0)).unwrap();
        assert_eq!(g[0], 0.5);
        assert_abs_diff_eq!(g[1], 0.731_058_578_630_004_9, epsilon = 1e-15);
        assert!(matches!(
            sigmoid_normalize_pressure(&[1.0], None),
            Err(DataError::MissingBodyWeight)
        ));
    }

    fn foot_grid(rows: usize, cols: usize, left: &[(usize, f64)], right: &[(usize, f64)]) -> Vec<f64> {
        let mut g = vec![0.0; 2 * rows * cols];
        for &(i, v) in left {
            g[i] = v;
        }
        for &(i, v) in right {
            g[rows * cols + i] = v;
        }
        g
    }

    #[test]
    fn max_rule_fires_above_ten_kpa() {
        let spec = ContactSpec::default();
        // 8 rows x 1 col per foot, 4 bands of 2 rows.
        let g = foot_grid(8, 1, &[(1, 12.0), (6, 10.0)], &[(4, 10.5)]);
        let bits = derive_contact(&g, 8, 1, &spec, None).unwrap();
        assert_eq!(bits, vec![true, false, false, false, false, false, true, false]);
        let zero = derive_contact(&[0.0; 16], 8, 1, &spec, None).unwrap();
        assert!(zero.iter().all(|b| !b));
    }

    #[test]
    fn vgrf_rule_compares_force_with_body_weight() {
        let spec = ContactSpec {
            rule: ContactRule::VgrfFractionOfWeight,
            threshold: 0.05,
            regions: 4,
        };
        // Heel band carries 6% of 1000 N split over two cells.
        let g = foot_grid(4, 1, &[(0, 30.0), (1, 30.0), (2, 40.0)], &[]);
        let bits = derive_contact(&g, 4, 1, &spec, Some(1000.0)).unwrap();
        assert_eq!(bits, vec![true, false, false, false]);
        assert!(matches!(
            derive_contact(&g, 4, 1, &spec, None),
            Err(DataError::MissingBodyWeight)
        ));
    }

    #[test]
    fn sigmoid_rule_uses_half_threshold() {
        let spec = ContactSpec {
            rule: ContactRule::SigmoidNormalized,
            threshold: 0.5,
            regions: 2,
        };
        let g = foot_grid(2, 2, &[(3, 1.0)], &[]);
        let bits = derive_contact(&g, 2, 2, &spec, Some(600.0)).unwrap();
        assert_eq!(bits, vec![true, false]);
    }

    #[test]
    fn contact_spec_validation() {
        let s = ContactSpec {
            regions: 3,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let s = ContactSpec {
            rule: ContactRule::SigmoidNormalized,
            threshold: 1.5,
            regions: 4,
        };
        assert!(s.validate().is_err());
        assert_eq!(region_rows(10, 4), vec![(0, 2), (2, 5), (5, 7), (7, 10)]);
    }

    proptest! {
        #[test]
        fn distribution_sums_to_one(g in prop::collection::vec(0.0f64..1000.0, 1..64)) {
            if let Some(d) = preprocess_pressure(&g) {
                prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(d.iter().all(|v| *v >= 0.0));
            }
        }

        #[test]
        fn contact_is_monotone(
            g in prop::collection::vec(0.0f64..40.0, 32),
            cell in 0usize..32,
            bump in 0.0f64..100.0,
            rule in 0usize..3,
        ) {
            let spec = match rule {
                0 => ContactSpec::default(),
                1 => ContactSpec { rule: ContactRule::VgrfFractionOfWeight, threshold: 0.05, regions: 4 },
                _ => ContactSpec { rule: ContactRule::SigmoidNormalized, threshold: 0.5, regions: 8 },
            };
            let before = derive_contact(&g, 8, 2, &spec, Some(300.0)).unwrap();
            let mut raised = g.clone();
            raised[cell] += bump;
            let after = derive_contact(&raised, 8, 2, &spec, Some(300.0)).unwrap();
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(!b || *a);
            }
        }
    }
}
