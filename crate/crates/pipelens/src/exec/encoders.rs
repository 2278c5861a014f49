//! Estimator/transformer featurization: a global fit over the train branch
//! produces statistics, then a tuple-at-a-time transform applies them to
//! both branches with the same statistics object.

use crate::ir::plan::EncoderKind;
use crate::ir::value::Value;
use serde::{Deserialize, Serialize};

/// Floor for the scaler's standard deviation so constant columns scale to
/// zero instead of dividing by zero.
pub const STD_EPSILON: f64 = 1e-12;

/// Statistics computed by an EstimatorFit node from train rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedStats {
    /// Categories sorted and unique; the one-hot width is their count.
    OneHot { categories: Vec<String> },
    /// Mean and population standard deviation (floored at [`STD_EPSILON`]).
    Scaler { mean: f64, std: f64 },
}

/// A non-fatal event recorded while transforming a single value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformWarning {
    NullValue,
    UnseenCategory(String),
}

impl std::fmt::Display for TransformWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransformWarning::NullValue => f.write_str("null value encoded as zeros"),
            TransformWarning::UnseenCategory(c) => {
                write!(f, "unseen category \"{c}\" encoded as zeros")
            }
        }
    }
}

/// Fits an encoder over the train column. Null values carry no information
/// and are skipped; they surface later as transform warnings.
pub fn fit(encoder: EncoderKind, values: &[&Value]) -> Result<FittedStats, String> {
    match encoder {
        EncoderKind::OneHot => {
            let mut categories: Vec<String> = values
                .iter()
                .filter(|v| !v.is_null())
                .map(|v| v.display_string())
                .collect();
            categories.sort();
            categories.dedup();
            Ok(FittedStats::OneHot { categories })
        }
        EncoderKind::StandardScale => {
            let mut numbers = Vec::with_capacity(values.len());
            for value in values {
                if value.is_null() {
                    continue;
                }
                let x = value
                    .as_f64()
                    .ok_or_else(|| format!("non-numeric value {}", value.display_string()))?;
                numbers.push(x);
            }
            if numbers.is_empty() {
                return Ok(FittedStats::Scaler { mean: 0.0, std: STD_EPSILON });
            }
            let n = numbers.len() as f64;
            let mean = numbers.iter().sum::<f64>() / n;
            let variance = numbers.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let std = variance.sqrt().max(STD_EPSILON);
            Ok(FittedStats::Scaler { mean, std })
        }
    }
}

impl FittedStats {
    /// Width of the feature block this encoder emits per row.
    pub fn output_width(&self) -> usize {
        match self {
            // a categoryless fit (all-null train column) still emits one
            // column so the feature matrix never collapses to zero width
            FittedStats::OneHot { categories } => categories.len().max(1),
            FittedStats::Scaler { .. } => 1,
        }
    }

    /// Encodes one value. Nulls and unseen categories become all-zeros with
    /// a warning rather than failing, so corruption what-ifs stay alive.
    pub fn transform(&self, value: &Value) -> Result<(Vec<f64>, Option<TransformWarning>), String> {
        match self {
            FittedStats::OneHot { categories } => {
                let width = self.output_width();
                if value.is_null() {
                    return Ok((vec![0.0; width], Some(TransformWarning::NullValue)));
                }
                let text = value.display_string();
                match categories.binary_search(&text) {
                    Ok(i) => {
                        let mut out = vec![0.0; width];
                        out[i] = 1.0;
                        Ok((out, None))
                    }
                    Err(_) => Ok((vec![0.0; width], Some(TransformWarning::UnseenCategory(text)))),
                }
            }
            FittedStats::Scaler { mean, std } => {
                if value.is_null() {
                    return Ok((vec![0.0], Some(TransformWarning::NullValue)));
                }
                let x = value
                    .as_f64()
                    .ok_or_else(|| format!("non-numeric value {}", value.display_string()))?;
                Ok((vec![(x - mean) / std], None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_sorts_and_dedups_categories() {
        let b = Value::Text("b".into());
        let a = Value::Text("a".into());
        let stats = fit(EncoderKind::OneHot, &[&b, &a, &b]).unwrap();
        assert_eq!(stats, FittedStats::OneHot { categories: vec!["a".into(), "b".into()] });
        let (encoded, warning) = stats.transform(&b).unwrap();
        assert_eq!(encoded, vec![0.0, 1.0]);
        assert!(warning.is_none());
    }

    #[test]
    fn scaler_uses_population_std() {
        let values = [Value::Float(1.0), Value::Float(2.0), Value::Float(3.0)];
        let refs: Vec<&Value> = values.iter().collect();
        let stats = fit(EncoderKind::StandardScale, &refs).unwrap();
        match stats {
            FittedStats::Scaler { mean, std } => {
                assert!((mean - 2.0).abs() < 1e-12);
                assert!((std - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
            }
            other => panic!("unexpected stats {other:?}"),
        }
        let (encoded, _) = stats.transform(&Value::Float(2.0)).unwrap();
        assert_eq!(encoded, vec![0.0]);
    }

    #[test]
    fn constant_column_scales_to_zero_not_infinity() {
        let values = [Value::Int(5), Value::Int(5)];
        let refs: Vec<&Value> = values.iter().collect();
        let stats = fit(EncoderKind::StandardScale, &refs).unwrap();
        let (encoded, _) = stats.transform(&Value::Int(5)).unwrap();
        assert_eq!(encoded, vec![0.0]);
        assert!(encoded[0].is_finite());
    }

    #[test]
    fn unseen_category_encodes_to_zeros_with_warning() {
        let a = Value::Text("a".into());
        let stats = fit(EncoderKind::OneHot, &[&a]).unwrap();
        let (encoded, warning) = stats.transform(&Value::Text("z".into())).unwrap();
        assert_eq!(encoded, vec![0.0]);
        assert_eq!(warning, Some(TransformWarning::UnseenCategory("z".into())));
    }

    #[test]
    fn nulls_are_skipped_at_fit_and_zeroed_at_transform() {
        let values = [Value::Null, Value::Float(4.0), Value::Null];
        let refs: Vec<&Value> = values.iter().collect();
        let stats = fit(EncoderKind::StandardScale, &refs).unwrap();
        match &stats {
            FittedStats::Scaler { mean, .. } => assert_eq!(*mean, 4.0),
            other => panic!("unexpected stats {other:?}"),
        }
        let (encoded, warning) = stats.transform(&Value::Null).unwrap();
        assert_eq!(encoded, vec![0.0]);
        assert_eq!(warning, Some(TransformWarning::NullValue));
    }

    #[test]
    fn serialized_stats_are_byte_comparable() {
        let values = [Value::Int(1), Value::Int(2), Value::Int(3)];
        let refs: Vec<&Value> = values.iter().collect();
        let a = fit(EncoderKind::StandardScale, &refs).unwrap();
        let b = fit(EncoderKind::StandardScale, &refs).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
