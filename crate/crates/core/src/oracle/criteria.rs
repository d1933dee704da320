use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-criterion performance values `y = S(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionVector(Vec<f64>);

impl CriterionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TooFewItems {
                needed: 1,
                found: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("criterion vector"));
        }
        Ok(CriterionVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn aggregate(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Worst case over the criteria: `min_k y_k`.
pub fn aggregate_objective(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooFewItems {
            needed: 1,
            found: 0,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("aggregate objective input"));
    }
    Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_is_min() {
        assert_eq!(aggregate_objective(&[3.0, 5.0]).unwrap(), 3.0);
        assert_eq!(aggregate_objective(&[3.6595, 6.4820]).unwrap(), 3.6595);
        assert_eq!(aggregate_objective(&[-1.25]).unwrap(), -1.25);
    }

    #[test]
    fn aggregate_rejects_bad_input() {
        assert!(aggregate_objective(&[]).is_err());
        assert!(matches!(aggregate_objective(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(CriterionVector::new(vec![f64::INFINITY]).is_err());
    }
}
