use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Leaf cap per outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CapSchedule {
    /// `N_t = min(max, initial * 2^t)`.
    Geometric { initial: usize, max: usize },
    Constant { cap: usize },
}

impl CapSchedule {
    pub fn geometric(max: usize) -> Self {
        CapSchedule::Geometric { initial: 8, max }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CapSchedule::Geometric { initial, max } if initial == 0 || max == 0 => {
                Err(Error::Config("leaf caps must be at least 1".into()))
            }
            CapSchedule::Constant { cap: 0 } => Err(Error::Config("leaf caps must be at least 1".into())),
            _ => Ok(()),
        }
    }

    pub fn max(&self) -> usize {
        match *self {
            CapSchedule::Geometric { max, .. } => max,
            CapSchedule::Constant { cap } => cap,
        }
    }

    pub fn cap(&self, iteration: usize) -> usize {
        match *self {
            CapSchedule::Geometric { initial, max } => {
                let grown = u32::try_from(iteration)
                    .ok()
                    .and_then(|t| 1usize.checked_shl(t))
                    .and_then(|f| initial.checked_mul(f))
                    .unwrap_or(usize::MAX);
                grown.min(max)
            }
            CapSchedule::Constant { cap } => cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_growth_saturates() {
        let s = CapSchedule::geometric(32);
        let caps: Vec<usize> = (0..4).map(|t| s.cap(t)).collect();
        assert_eq!(caps, [8, 16, 32, 32]);
        for t in 0..=200 {
            assert!(s.cap(t) <= 32);
        }
        let c = CapSchedule::Constant { cap: 32 };
        assert!((0..100).all(|t| c.cap(t) == 32));
        assert_eq!(CapSchedule::Geometric { initial: 8, max: 4 }.cap(0), 4);
        assert!(CapSchedule::Constant { cap: 0 }.validate().is_err());
    }

    #[test]
    fn serde_form() {
        let s: CapSchedule = serde_json::from_str(r#"{"kind":"constant","cap":16}"#).unwrap();
        assert_eq!(s, CapSchedule::Constant { cap: 16 });
        let g = serde_json::to_string(&CapSchedule::geometric(64)).unwrap();
        assert_eq!(g, r#"{"kind":"geometric","initial":8,"max":64}"#);
    }
}
