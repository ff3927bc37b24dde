//! Step-size and oracle-accuracy schedules, and their summability classes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Step sizes `α_k`, `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `α_k = a / (k + b)`
    Harmonic {
        a: f64,
        b: f64,
    },
    Constant {
        value: f64,
    },
    /// `α_k = values[k − 1]`, held at the last entry beyond the table.
    Table {
        values: Vec<f64>,
    },
}

/// Summability of a positive sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummabilityClass {
    SquareSummableNotSummable,
    Summable,
    NonSummableNonSquareSummable,
    Constant,
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StepSchedule::Harmonic { a, b } => {
                if !(*a > 0.0 && a.is_finite()) || !(*b >= 0.0 && b.is_finite()) {
                    return Err(invalid(format!("harmonic step needs a > 0, b >= 0; got a={a}, b={b}")));
                }
            }
            StepSchedule::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(invalid(format!("constant step must be > 0, got {value}")));
                }
            }
            StepSchedule::Table { values } => {
                if values.is_empty() {
                    return Err(invalid("step table is empty"));
                }
                if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(invalid(format!("step table entry must be > 0, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn alpha(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Harmonic { a, b } => a / (k as f64 + b),
            StepSchedule::Constant { value } => *value,
            StepSchedule::Table { values } => values[k.saturating_sub(1).min(values.len() - 1)],
        }
    }

    /// Class implied by the analytic form; `None` for tables.
    pub fn analytic_class(&self) -> Option<SummabilityClass> {
        match self {
            StepSchedule::Harmonic { .. } => Some(SummabilityClass::SquareSummableNotSummable),
            StepSchedule::Constant { .. } => Some(SummabilityClass::Constant),
            StepSchedule::Table { .. } => None,
        }
    }

    /// Rejects a declared class that contradicts the analytic form. Tables
    /// accept any declaration.
    pub fn check_declared(&self, declared: SummabilityClass) -> Result<()> {
        match self.analytic_class() {
            Some(actual) if actual != declared => Err(invalid(format!(
                "step schedule declared {declared:?} but its form is {actual:?}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Oracle accuracies `δ_k >= 0`, `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AccuracySchedule {
    Constant {
        delta: f64,
    },
    /// `δ_k = delta / k^p`
    Power {
        delta: f64,
        p: f64,
    },
    Table {
        values: Vec<f64>,
    },
}

impl AccuracySchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        match self {
            AccuracySchedule::Constant { delta } if !ok(*delta) => {
                Err(invalid(format!("accuracy must be >= 0, got {delta}")))
            }
            AccuracySchedule::Power { delta, p } if !ok(*delta) || !p.is_finite() => Err(invalid(format!(
                "power accuracy needs delta >= 0 and finite p; got {delta}, {p}"
            ))),
            AccuracySchedule::Table { values } if values.is_empty() => Err(invalid("accuracy table is empty")),
            AccuracySchedule::Table { values } if !values.iter().all(|v| ok(*v)) => {
                Err(invalid("accuracy table entries must be >= 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn delta(&self, k: usize) -> f64 {
        match self {
            AccuracySchedule::Constant { delta } => *delta,
            AccuracySchedule::Power { delta, p } => delta / (k as f64).powf(*p),
            AccuracySchedule::Table { values } => values[k.saturating_sub(1).min(values.len() - 1)],
        }
    }

    /// `sup_k δ_k` when it exists.
    pub fn sup(&self) -> Option<f64> {
        match self {
            AccuracySchedule::Constant { delta } => Some(*delta),
            AccuracySchedule::Power { delta, p } if *p >= 0.0 || *delta == 0.0 => Some(*delta),
            AccuracySchedule::Power { .. } => None,
            AccuracySchedule::Table { values } => Some(values.iter().copied().fold(0.0, f64::max)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Σα = ∞, Σα² < ∞, bounded accuracy: liminf f(x_av) <= f* + Σδᵢ.
    Theorem1,
    /// Additionally Σα_kδ_k < ∞: exact convergence.
    Theorem2,
    Neither,
    Unclassifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    /// `Σα_k = ∞`
    pub steps_not_summable: Option<bool>,
    /// `Σα_k² < ∞`
    pub steps_square_summable: Option<bool>,
    /// `Σα_kδ_k < ∞`
    pub weighted_accuracy_summable: Option<bool>,
    pub accuracy_bounded: Option<bool>,
    pub regime: Regime,
}

/// Decides the summability conditions analytically from the schedule forms.
pub fn classify_schedule(steps: &StepSchedule, accuracy: &AccuracySchedule) -> ScheduleReport {
    // exponent e with α_k ~ k^(-e); None for tables
    let step_decay = match steps {
        StepSchedule::Harmonic { .. } => Some(1.0),
        StepSchedule::Constant { .. } => Some(0.0),
        StepSchedule::Table { .. } => None,
    };
    // δ_k ~ k^(-e), or identically zero
    let accuracy_decay = match accuracy {
        AccuracySchedule::Constant { delta } if *delta == 0.0 => Some(f64::INFINITY),
        AccuracySchedule::Constant { .. } => Some(0.0),
        AccuracySchedule::Power { delta, .. } if *delta == 0.0 => Some(f64::INFINITY),
        AccuracySchedule::Power { p, .. } => Some(*p),
        AccuracySchedule::Table { values } if values.iter().all(|v| *v == 0.0) => Some(f64::INFINITY),
        AccuracySchedule::Table { .. } => None,
    };
    let steps_not_summable = step_decay.map(|e| e <= 1.0);
    let steps_square_summable = step_decay.map(|e| 2.0 * e > 1.0);
    let weighted_accuracy_summable = match (step_decay, accuracy_decay) {
        (Some(s), Some(a)) => Some(s + a > 1.0),
        _ => None,
    };
    let accuracy_bounded = accuracy_decay.map(|e| e >= 0.0);

    let regime = match (
        steps_not_summable,
        steps_square_summable,
        weighted_accuracy_summable,
        accuracy_bounded,
    ) {
        (Some(false), ..) | (_, Some(false), ..) => Regime::Neither,
        (Some(true), Some(true), Some(true), _) => Regime::Theorem2,
        (Some(true), Some(true), Some(false), Some(true)) => Regime::Theorem1,
        (Some(true), Some(true), Some(false), Some(false)) => Regime::Neither,
        _ => Regime::Unclassifiable,
    };
    ScheduleReport {
        steps_not_summable,
        steps_square_summable,
        weighted_accuracy_summable,
        accuracy_bounded,
        regime,
    }
}
