//! Privacy-budget bookkeeping.
//!
//! Simple composition charges `k * epsilon` for `k` invocations of an
//! epsilon-DP mechanism. The advanced bound (Kairouz, Oh and Viswanath,
//! optimal composition, Theorem 3.4) trades a small `delta` for roughly
//! `sqrt(k) * epsilon` growth:
//!
//! ```text
//! min { k e,
//!       k e (exp(e) - 1) / (exp(e) + 1) + e sqrt(2k ln(exp(1) + sqrt(k e^2) / delta)),
//!       k e (exp(e) - 1) / (exp(e) + 1) + e sqrt(2k ln(1 / delta)) }
//! ```

use std::fmt;
use std::str::FromStr;

use crate::dp::laplace::check_epsilon;
use crate::error::{Error, Result};

/// An (epsilon, delta) guarantee. Pure epsilon-DP has `delta == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_delta(delta)?;
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// Sequential composition of two budgets, summing component-wise.
    pub fn then(&self, other: &PrivacyBudget) -> Result<Self> {
        Self::new(self.epsilon + other.epsilon, self.delta + other.delta)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::Calibration(format!("delta must lie in [0, 1), got {delta}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismRecord {
    pub name: String,
    pub epsilon: f64,
    pub invocations: u64,
}

impl MechanismRecord {
    pub fn new(name: impl Into<String>, epsilon: f64, invocations: u64) -> Result<Self> {
        let name = name.into();
        check_epsilon(epsilon)?;
        if invocations == 0 {
            return Err(Error::InvalidArgument(format!(
                "mechanism `{name}` must be invoked at least once"
            )));
        }
        if name.is_empty() || name.contains([',', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "mechanism name `{name}` must be non-empty and free of commas and newlines"
            )));
        }
        Ok(Self {
            name,
            epsilon,
            invocations,
        })
    }

    pub fn simple_total(&self) -> f64 {
        self.epsilon * self.invocations as f64
    }
}

/// Mechanisms applied to one release, plus the delta used for advanced composition.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyLedger {
    records: Vec<MechanismRecord>,
    delta: f64,
}

impl PrivacyLedger {
    pub fn new(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            records: Vec::new(),
            delta,
        })
    }

    pub fn record(&mut self, record: MechanismRecord) -> &mut Self {
        self.records.push(record);
        self
    }

    pub fn records(&self) -> &[MechanismRecord] {
        &self.records
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn simple_total(&self) -> Result<f64> {
        compose_simple(self)
    }

    /// Per-record advanced composition, summed component-wise. Records whose
    /// best bound is the linear one contribute no delta.
    pub fn advanced_total(&self) -> Result<PrivacyBudget> {
        if self.records.is_empty() {
            return Err(Error::Empty("privacy ledger"));
        }
        let mut epsilon = 0.0;
        let mut delta = 0.0;
        for r in &self.records {
            let linear = r.simple_total();
            if self.delta > 0.0 {
                let advanced = compose_advanced(r.epsilon, r.invocations, self.delta)?;
                if advanced < linear {
                    epsilon += advanced;
                    delta += self.delta;
                    continue;
                }
            }
            epsilon += linear;
        }
        PrivacyBudget::new(epsilon, delta)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dpledger v1 delta={}\n", self.delta);
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.name, r.epsilon, r.invocations));
        }
        out
    }
}

impl fmt::Display for PrivacyLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for PrivacyLedger {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        const FORMAT: &str = "dpledger";
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(FORMAT, 0, "header `dpledger v1 delta=<float>`", "end of input"))?;
        let delta = header
            .strip_prefix("dpledger v1 delta=")
            .ok_or_else(|| Error::parse(FORMAT, 0, "`dpledger v1 delta=`", header))?;
        let delta: f64 = delta
            .trim()
            .parse()
            .map_err(|_| Error::parse(FORMAT, 0, "float delta", delta))?;
        let mut ledger = PrivacyLedger::new(delta)?;

        let mut offset = header.len() + 1;
        for line in lines {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                let fields: Vec<&str> = trimmed.split(',').collect();
                if fields.len() != 3 {
                    return Err(Error::parse(FORMAT, offset, "`name,epsilon,invocations`", line));
                }
                let epsilon = fields[1]
                    .parse()
                    .map_err(|_| Error::parse(FORMAT, offset, "float epsilon", fields[1]))?;
                let invocations = fields[2]
                    .parse()
                    .map_err(|_| Error::parse(FORMAT, offset, "integer invocations", fields[2]))?;
                ledger.record(MechanismRecord::new(fields[0], epsilon, invocations)?);
            }
            offset += line.len() + 1;
        }
        Ok(ledger)
    }
}

/// Sum of `epsilon * invocations` over every record.
pub fn compose_simple(ledger: &PrivacyLedger) -> Result<f64> {
    if ledger.records.is_empty() {
        return Err(Error::Empty("privacy ledger"));
    }
    Ok(ledger.records.iter().map(MechanismRecord::simple_total).sum())
}

/// Tightest of the three k-fold composition bounds for epsilon-DP mechanisms
/// at slack `delta`. Returned at full precision.
pub fn compose_advanced(epsilon: f64, k: u64, delta: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if k == 0 {
        return Err(Error::Calibration("composition count must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Calibration(format!(
            "advanced composition needs delta in (0, 1), got {delta}"
        )));
    }
    let k = k as f64;
    let linear = k * epsilon;
    let drift = linear * epsilon.exp_m1() / (epsilon.exp() + 1.0);
    let second = drift
        + epsilon * (2.0 * k * (std::f64::consts::E + (k * epsilon * epsilon).sqrt() / delta).ln()).sqrt();
    let third = drift + epsilon * (2.0 * k * (1.0 / delta).ln()).sqrt();
    Ok(linear.min(second).min(third))
}

/// Integer reporting convention for composed budgets.
pub fn floor_budget(epsilon: f64) -> u64 {
    epsilon.floor() as u64
}

/// Utterance budget of one pitch release plus `frames` BN-frame releases.
pub fn pipeline_budget(epsilon_pitch: f64, epsilon_bn_frame: f64, frames: u64) -> Result<PrivacyBudget> {
    pipeline_ledger(epsilon_pitch, epsilon_bn_frame, frames, 0.0)?
        .simple_total()
        .and_then(PrivacyBudget::pure)
}

/// As [`pipeline_budget`], composing the BN frames with the advanced bound.
pub fn pipeline_budget_advanced(
    epsilon_pitch: f64,
    epsilon_bn_frame: f64,
    frames: u64,
    delta: f64,
) -> Result<PrivacyBudget> {
    pipeline_ledger(epsilon_pitch, epsilon_bn_frame, frames, delta)?.advanced_total()
}

/// Ledger for one anonymized utterance.
pub fn pipeline_ledger(
    epsilon_pitch: f64,
    epsilon_bn_frame: f64,
    frames: u64,
    delta: f64,
) -> Result<PrivacyLedger> {
    let mut ledger = PrivacyLedger::new(delta)?;
    ledger
        .record(MechanismRecord::new("pitch_latent", epsilon_pitch, 1)?)
        .record(MechanismRecord::new("bn_frame", epsilon_bn_frame, frames)?);
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(epsilon: f64, k: u64) -> PrivacyLedger {
        let mut l = PrivacyLedger::new(1e-5).unwrap();
        l.record(MechanismRecord::new("m", epsilon, k).unwrap());
        l
    }

    #[test]
    fn simple_composition() {
        assert_eq!(compose_simple(&single(0.5, 100)).unwrap(), 50.0);
        assert_eq!(compose_simple(&single(0.5, 10_000)).unwrap(), 5000.0);

        let mut l = PrivacyLedger::new(0.0).unwrap();
        l.record(MechanismRecord::new("a", 1.0, 1).unwrap())
            .record(MechanismRecord::new("b", 1.0, 100).unwrap());
        assert_eq!(compose_simple(&l).unwrap(), 101.0);

        assert!(matches!(
            compose_simple(&PrivacyLedger::new(0.0).unwrap()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn advanced_composition_table() {
        let expected = [(100, 36), (500, 114), (1000, 198), (10_000, 1464)];
        for (k, floor) in expected {
            let eps = compose_advanced(0.5, k, 1e-5).unwrap();
            assert_eq!(floor_budget(eps), floor, "k={k} eps={eps}");
        }
        assert!((compose_advanced(0.5, 100, 1e-5).unwrap() - 36.2385626811).abs() < 1e-8);
        assert_eq!(compose_advanced(0.5, 1, 1e-5).unwrap(), 0.5);
    }

    #[test]
    fn advanced_domain() {
        assert!(compose_advanced(0.0, 10, 1e-5).is_err());
        assert!(compose_advanced(1.0, 0, 1e-5).is_err());
        assert!(compose_advanced(1.0, 10, 0.0).is_err());
        assert!(compose_advanced(1.0, 10, 1.0).is_err());
    }

    #[test]
    fn pipeline_budgets() {
        assert_eq!(pipeline_budget(1.0, 1.0, 100).unwrap().epsilon(), 101.0);
        assert_eq!(pipeline_budget(1.0, 0.5, 100).unwrap().epsilon(), 51.0);
        assert!(pipeline_budget(1.0, 0.5, 100).unwrap().is_pure());

        let adv = pipeline_budget_advanced(1.0, 0.5, 100, 1e-5).unwrap();
        let expected = 1.0 + compose_advanced(0.5, 100, 1e-5).unwrap();
        assert_eq!(adv.epsilon(), expected);
        assert_eq!(adv.delta(), 1e-5);
        assert!(pipeline_budget(0.0, 0.5, 10).is_err());
        assert!(pipeline_budget(1.0, 0.5, 0).is_err());
    }

    #[test]
    fn ledger_text_round_trip() {
        let ledger = pipeline_ledger(1.0, 0.25, 743, 1e-5).unwrap();
        let text = ledger.to_text();
        assert!(text.starts_with("dpledger v1 delta=0.00001\n"));
        let back: PrivacyLedger = text.parse().unwrap();
        assert_eq!(back, ledger);
    }

    #[test]
    fn ledger_parse_errors() {
        assert!("".parse::<PrivacyLedger>().is_err());
        assert!("dpledger v2 delta=0\n".parse::<PrivacyLedger>().is_err());
        let err = "dpledger v1 delta=0\na,1\n".parse::<PrivacyLedger>().unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 20, .. }), "{err}");
        assert!("dpledger v1 delta=0\na,1,0\n".parse::<PrivacyLedger>().is_err());
    }

    #[test]
    fn budgets_sum_componentwise() {
        let a = PrivacyBudget::pure(1.0).unwrap();
        let b = PrivacyBudget::new(36.2, 1e-5).unwrap();
        let c = a.then(&b).unwrap();
        assert_eq!((c.epsilon(), c.delta()), (37.2, 1e-5));
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
    }
}
