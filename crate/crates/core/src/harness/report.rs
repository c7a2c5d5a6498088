//! Line-oriented check reports.

use std::fmt;

use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    /// Passes when `residual <= tol`.
    AtMost,
    /// Passes when `residual >= tol`.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tol: f64,
    pub bound: Bound,
}

impl Check {
    pub fn at_most(name: impl Into<String>, residual: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            passed: residual <= tol,
            residual,
            tol,
            bound: Bound::AtMost,
        }
    }

    pub fn at_least(name: impl Into<String>, residual: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            passed: residual >= tol,
            residual,
            tol,
            bound: Bound::AtLeast,
        }
    }

    /// How far the check is from failing; larger is worse. NaN never passes.
    fn severity(&self) -> f64 {
        if self.residual.is_nan() {
            return f64::INFINITY;
        }
        match self.bound {
            Bound::AtMost if self.tol > 0.0 => self.residual / self.tol,
            Bound::AtMost => {
                if self.residual <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Bound::AtLeast if self.residual > 0.0 => self.tol / self.residual,
            Bound::AtLeast => f64::INFINITY,
        }
    }

    /// Keeps whichever observation is closer to failing. Ties go to the
    /// larger residual, so folding is independent of order.
    pub fn worst(self, other: Check) -> Check {
        let (a, b) = (self.severity(), other.severity());
        let keep_self = match a.total_cmp(&b) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => {
                (self.residual, self.tol) >= (other.residual, other.tol)
            }
        };
        if keep_self {
            self
        } else {
            other
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CHECK {} {} residual={:e} tol={:e}",
            self.name,
            if self.passed { "pass" } else { "fail" },
            self.residual,
            self.tol
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    /// Rendered as `# key=value` lines ahead of the checks.
    pub provenance: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.provenance.push((key.into(), value.to_string()));
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.provenance {
            writeln!(f, "# {k}={v}")?;
        }
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_line_format() {
        let c = Check::at_most("transform.residual", 1.5e-12, 1e-9);
        assert_eq!(c.to_string(), "CHECK transform.residual pass residual=1.5e-12 tol=1e-9");
        let c = Check::at_most("x", f64::NAN, 1.0);
        assert!(!c.passed);
        assert!(Check::at_least("y", 1.0, 1e-8).passed);
        assert!(!Check::at_least("y", 1e-9, 1e-8).passed);
    }

    #[test]
    fn worst_is_order_independent() {
        let obs = [
            Check::at_most("a", 1e-12, 1e-9),
            Check::at_most("a", 5e-10, 1e-9),
            Check::at_most("a", 3e-12, 1e-11),
        ];
        let fwd = obs.iter().cloned().reduce(Check::worst).unwrap();
        let rev = obs.iter().rev().cloned().reduce(Check::worst).unwrap();
        assert_eq!(fwd, rev);
        assert_eq!(fwd.residual, 5e-10);

        let zero_tol = Check::at_most("b", 0.0, 0.0).worst(Check::at_most("b", 1.0, 0.0));
        assert!(!zero_tol.passed);
    }

    #[test]
    fn report_rendering() {
        let mut r = Report::new();
        r.note("seed", 3);
        r.push(Check::at_most("a", 0.0, 0.0));
        r.push(Check::at_most("b", 2.0, 1.0));
        assert!(!r.all_passed());
        assert_eq!(r.failures().count(), 1);
        assert_eq!(
            r.to_string(),
            "# seed=3\nCHECK a pass residual=0e0 tol=0e0\nCHECK b fail residual=2e0 tol=1e0\n"
        );
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
