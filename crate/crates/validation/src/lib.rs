//! Bookkeeping for the acceptance run: each check records a verdict and a
//! one-line detail, and the run prints a `PASS`/`FAIL` line per check.

use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

#[derive(Debug, Default)]
pub struct Ledger {
    verdicts: Vec<Verdict>,
}

impl Ledger {
    /// Runs `check`, which returns whether it passed and a short detail.
    /// A panic inside `check` counts as a failure with the panic message.
    pub fn run(&mut self, id: &str, title: &str, check: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let (passed, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        let v = Verdict {
            id: id.into(),
            title: title.into(),
            passed,
            detail,
            elapsed: start.elapsed(),
        };
        println!("{}", format_line(&v));
        self.verdicts.push(v);
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn summary(&self) -> String {
        let passed = self.verdicts.iter().filter(|v| v.passed).count();
        format!("acceptance: {passed}/{} criteria passed", self.verdicts.len())
    }
}

pub fn format_line(v: &Verdict) -> String {
    format!(
        "{} criterion {}: {} [{}] ({:.1}s)",
        if v.passed { "PASS" } else { "FAIL" },
        v.id,
        v.title,
        v.detail,
        v.elapsed.as_secs_f64()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_failures() {
        let mut l = Ledger::default();
        l.run("x", "ok", || (true, "fine".into()));
        l.run("y", "boom", || panic!("bad input"));
        assert!(!l.all_passed());
        assert!(l.verdicts()[1].detail.contains("bad input"));
        assert!(format_line(&l.verdicts()[0]).starts_with("PASS criterion x: ok [fine]"));
    }
}
