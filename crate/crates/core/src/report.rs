//! Check records, suite reports and the top-level run driver.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Suite};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::suites::{self, Ctx, Scope};
use crate::verdict::Verdict;

pub const SCHEMA: &str = "contact-blender-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Signed slack against the check's threshold; positive on pass.
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<serde_json::Value>,
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(name: &str, anchor: &str) -> Self {
        CheckRecord {
            name: name.to_string(),
            anchor: anchor.to_string(),
            verdict: Verdict::Inconclusive,
            r: None,
            margin: None,
            witness: None,
            details: BTreeMap::new(),
            note: None,
        }
    }

    pub fn at(mut self, r: Option<f64>) -> Self {
        self.r = r;
        self
    }

    pub fn verdict(mut self, v: Verdict) -> Self {
        self.verdict = v;
        self
    }

    pub fn pass_if(self, ok: bool) -> Self {
        self.verdict(Verdict::from_bool(ok))
    }

    /// Non-finite margins are stored as absent.
    pub fn margin(mut self, m: f64) -> Self {
        self.margin = m.is_finite().then_some(m);
        self
    }

    /// Non-finite values are dropped so the report stays valid JSON.
    pub fn detail(mut self, key: &str, value: f64) -> Self {
        if value.is_finite() {
            self.details.insert(key.to_string(), value);
        }
        self
    }

    pub fn witness(mut self, w: impl Serialize) -> Self {
        self.witness = serde_json::to_value(w).ok();
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.note = Some(s.into());
        self
    }

    /// Record for a check that could not complete.
    pub fn from_error(name: &str, anchor: &str, r: Option<f64>, err: &Error) -> Self {
        let v = match err {
            Error::Inconclusive(_) | Error::Precondition(_) => Verdict::Inconclusive,
            _ => Verdict::Fail,
        };
        CheckRecord::new(name, anchor).at(r).verdict(v).note(err.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub verdict: Verdict,
    pub checks: Vec<CheckRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub verdict: Verdict,
    pub config: RunConfig,
    pub suites: Vec<SuiteReport>,
}

/// Wall-clock seconds per check, kept out of the report so that reports
/// from equal configurations compare byte for byte.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub checks: Vec<(String, Option<f64>, f64)>,
    pub total: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rep: Report = serde_json::from_str(text).map_err(|e| Error::config("report", e.to_string()))?;
        if rep.schema != SCHEMA {
            return Err(Error::config("report.schema", format!("expected {SCHEMA}, got {}", rep.schema)));
        }
        Ok(rep)
    }

    pub fn checks(&self) -> impl Iterator<Item = &CheckRecord> {
        self.suites.iter().flat_map(|s| s.checks.iter())
    }

    pub fn find(&self, name: &str, r: Option<f64>) -> Option<&CheckRecord> {
        self.checks().find(|c| c.name == name && (r.is_none() || c.r == r))
    }

    /// One row per r: m_r, the six axiom margins and the distinctive pass rate.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "r",
            "m_r",
            "axiom_a_margin",
            "axiom_b_margin",
            "axiom_c_margin",
            "axiom_d_margin",
            "axiom_e_margin",
            "axiom_f_margin",
            "distinctive_pass_rate",
        ];
        let io = |e: csv::Error| Error::config("output.csv", e.to_string());
        w.write_record(header).map_err(io)?;
        let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for &r in &self.config.run.r {
            let mut row = vec![format!("{r}")];
            let m_r = self
                .find("blender.axiom_a", Some(r))
                .and_then(|c| c.details.get("m_r").copied());
            row.push(m_r.map(|m| format!("{m}")).unwrap_or_default());
            for letter in ['a', 'b', 'c', 'd', 'e', 'f'] {
                row.push(cell(self.find(&format!("blender.axiom_{letter}"), Some(r)).and_then(|c| c.margin)));
            }
            row.push(cell(
                self.find("blender.distinctive", Some(r))
                    .and_then(|c| c.details.get("pass_rate").copied()),
            ));
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::config("output.csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// 0 all pass, 1 any fail, 2 inconclusive without failures.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

fn r_values(cfg: &RunConfig, scope: Scope) -> Vec<Option<f64>> {
    match scope {
        Scope::Once => vec![None],
        Scope::PerR => cfg.run.r.iter().map(|&r| Some(r)).collect(),
        Scope::PerRUpTo(max) => cfg.run.r.iter().filter(|&&r| r <= max).map(|&r| Some(r)).collect(),
    }
}

/// Runs one registered check at one r, turning errors and panics into records.
fn run_one(ctx: &Ctx, spec: &suites::CheckSpec, r: Option<f64>) -> Vec<CheckRecord> {
    let out = catch_unwind(AssertUnwindSafe(|| (spec.run)(ctx, r)));
    match out {
        Ok(Ok(records)) if !records.is_empty() => records,
        Ok(Ok(_)) => vec![CheckRecord::new(spec.name, spec.anchor)
            .at(r)
            .verdict(Verdict::Fail)
            .note("check produced no record")],
        Ok(Err(e)) => vec![CheckRecord::from_error(spec.name, spec.anchor, r, &e)],
        Err(_) => vec![CheckRecord::new(spec.name, spec.anchor)
            .at(r)
            .verdict(Verdict::Fail)
            .note("check panicked")],
    }
}

/// Runs the suites selected in the configuration, in registry order.
pub fn run(cfg: &RunConfig, exec: Exec) -> Result<(Report, Timing)> {
    cfg.validate()?;
    let ctx = Ctx::new(cfg.clone(), exec)?;
    let start = Instant::now();
    let mut timing = Timing::default();
    let mut suites_out = Vec::new();
    for suite in Suite::ALL {
        if !cfg.run.suites.contains(&suite) {
            continue;
        }
        let mut checks = Vec::new();
        for spec in suites::REGISTRY.iter().filter(|s| s.suite == suite) {
            for r in r_values(cfg, spec.scope) {
                let t0 = Instant::now();
                let records = run_one(&ctx, spec, r);
                timing.checks.push((spec.name.to_string(), r, t0.elapsed().as_secs_f64()));
                checks.extend(records);
            }
        }
        if checks.is_empty() {
            checks.push(
                CheckRecord::new(&format!("{}.no_applicable_check", suite.name()), "")
                    .note("no registered check applies to the configured values of r"),
            );
        }
        let verdict = Verdict::all(checks.iter().map(|c| c.verdict));
        suites_out.push(SuiteReport { suite, verdict, checks });
    }
    timing.total = start.elapsed().as_secs_f64();
    let verdict = Verdict::all(suites_out.iter().map(|s| s.verdict));
    Ok((
        Report {
            schema: SCHEMA.to_string(),
            verdict,
            config: cfg.clone(),
            suites: suites_out,
        },
        timing,
    ))
}

/// Names of registered checks the report lacks for the suites it ran.
pub fn missing_checks(report: &Report) -> Vec<String> {
    let mut missing = Vec::new();
    for sr in &report.suites {
        for spec in suites::REGISTRY.iter().filter(|s| s.suite == sr.suite) {
            for r in r_values(&report.config, spec.scope) {
                let present = sr
                    .checks
                    .iter()
                    .any(|c| c.r == r && (c.name == spec.name || c.name.starts_with(&format!("{}_", spec.name))));
                if !present {
                    missing.push(match r {
                        Some(r) => format!("{} (r = {r})", spec.name),
                        None => spec.name.to_string(),
                    });
                }
            }
        }
    }
    missing
}

#[cfg(test)]
mod tests {
    use super::*;

    fn light(suites: Vec<Suite>) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.run.suites = suites;
        cfg.run.r = vec![0.1];
        cfg.run.samples = 500;
        cfg.run.distinctive_disks = 4;
        cfg.run.distinctive_iterations = 5;
        cfg.run.holder_pairs = 20;
        cfg
    }

    #[test]
    fn non_finite_values_are_dropped() {
        let c = CheckRecord::new("x", "y").margin(f64::NAN).detail("a", f64::INFINITY).detail("b", 1.0);
        assert_eq!(c.margin, None);
        assert_eq!(c.details.len(), 1);
    }

    #[test]
    fn chart_suite_passes_and_round_trips() {
        let (rep, timing) = run(&light(vec![Suite::Chart]), Exec::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{}", rep.to_json());
        assert!(timing.total < 5.0);
        assert_eq!(Report::from_json(&rep.to_json()).unwrap(), rep);
        assert!(missing_checks(&rep).is_empty());
        assert_eq!(rep.exit_code(), 0);
    }

    #[test]
    fn equal_configs_give_identical_bytes() {
        let cfg = light(vec![Suite::Chart, Suite::Embeddings]);
        let a = run(&cfg, Exec::Sequential).unwrap().0.to_json();
        let b = run(&cfg, Exec::default()).unwrap().0.to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_is_rejected_before_running() {
        let mut cfg = light(vec![Suite::Chart]);
        cfg.chart.l = -0.5;
        match run(&cfg, Exec::Sequential) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "chart.L"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let (mut rep, _) = run(&light(vec![Suite::Embeddings]), Exec::Sequential).unwrap();
        rep.schema = "other/2".into();
        assert!(Report::from_json(&rep.to_json()).is_err());
    }

    #[test]
    fn exit_codes_follow_the_verdict() {
        let (mut rep, _) = run(&light(vec![Suite::Embeddings]), Exec::Sequential).unwrap();
        rep.verdict = Verdict::Inconclusive;
        assert_eq!(rep.exit_code(), 2);
        rep.verdict = Verdict::Fail;
        assert_eq!(rep.exit_code(), 1);
    }

    #[test]
    fn csv_has_one_row_per_r() {
        let (rep, _) = run(&light(vec![Suite::Embeddings]), Exec::Sequential).unwrap();
        let text = rep.to_csv().unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("r,m_r,axiom_a_margin"));
        assert!(lines[1].starts_with("0.1,"));
    }
}
