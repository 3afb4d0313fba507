//! Run configuration: one TOML document with a table per module.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blender::VerifyOptions;
use crate::chart::ChartParams;
use crate::error::{Error, Result};
use crate::holonomy::LeafOptions;
use crate::model::{Model, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Chart,
    Flows,
    Model,
    Cones,
    Blender,
    Holonomy,
    Suspension,
    Transitivity,
    Embeddings,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Chart,
        Suite::Flows,
        Suite::Model,
        Suite::Cones,
        Suite::Blender,
        Suite::Holonomy,
        Suite::Suspension,
        Suite::Transitivity,
        Suite::Embeddings,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Chart => "chart",
            Suite::Flows => "flows",
            Suite::Model => "model",
            Suite::Cones => "cones",
            Suite::Blender => "blender",
            Suite::Holonomy => "holonomy",
            Suite::Suspension => "suspension",
            Suite::Transitivity => "transitivity",
            Suite::Embeddings => "embeddings",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config("run.suites", format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Perturbation sizes for the r-dependent suites.
    pub r: Vec<f64>,
    pub suites: Vec<Suite>,
    pub seed: u64,
    /// Sample count for the contact-residual and contraction checks.
    pub samples: usize,
    pub distinctive_disks: usize,
    pub distinctive_iterations: usize,
    pub holder_pairs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            r: vec![0.1, 0.05, 0.02],
            suites: Suite::ALL.to_vec(),
            seed: 7,
            samples: 10_000,
            distinctive_disks: 100,
            distinctive_iterations: 50,
            holder_pairs: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Strict-contact residual of the affine maps.
    pub contact: f64,
    /// Flow-composed residuals and RK4 vs closed form.
    pub flow: f64,
    pub holonomy: f64,
    pub characteristic: f64,
    pub return_kernel: f64,
    pub embedding: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            contact: 1e-10,
            flow: 1e-8,
            holonomy: 1e-4,
            characteristic: 1e-9,
            return_kernel: 1e-7,
            embedding: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub json: bool,
    pub csv: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            json: true,
            csv: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub chart: ChartParams,
    pub model: ModelParams,
    pub run: RunSection,
    pub verify: VerifyOptions,
    pub holonomy: LeafOptions,
    pub tolerances: Tolerances,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".into());
            Error::config(&field, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every parameter before any suite runs.
    pub fn validate(&self) -> Result<()> {
        self.chart.validate()?;
        self.model.validate(&self.chart)?;
        self.verify.validate()?;
        if self.run.r.is_empty() {
            return Err(Error::config("run.r", "needs at least one value"));
        }
        for &r in &self.run.r {
            if !(r > 0.0 && r <= self.model.r_max) {
                return Err(Error::config("run.r", format!("{r} outside (0, model.r_max]")));
            }
        }
        if self.run.samples == 0 {
            return Err(Error::config("run.samples", "must be positive"));
        }
        if self.run.distinctive_disks == 0 || self.run.distinctive_iterations == 0 {
            return Err(Error::config("run.distinctive_disks", "disks and iterations must be positive"));
        }
        if self.holonomy.nodes < 2 || !self.holonomy.nodes.is_multiple_of(2) {
            return Err(Error::config("holonomy.nodes", "must be even and at least 2"));
        }
        if !(self.holonomy.tol > 0.0) {
            return Err(Error::config("holonomy.tol", "must be positive"));
        }
        let tol = &self.tolerances;
        for (name, v) in [
            ("tolerances.contact", tol.contact),
            ("tolerances.flow", tol.flow),
            ("tolerances.holonomy", tol.holonomy),
            ("tolerances.characteristic", tol.characteristic),
            ("tolerances.return_kernel", tol.return_kernel),
            ("tolerances.embedding", tol.embedding),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(self.chart.clone(), self.model.clone())
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            seed: self.run.seed,
            ..self.verify.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_tables_keep_defaults() {
        let cfg = RunConfig::from_toml("[chart]\ndelta = 0.04\n[run]\nr = [0.05]\nsuites = [\"chart\"]\n").unwrap();
        assert_eq!(cfg.chart.delta, 0.04);
        assert_eq!(cfg.chart.l, 0.5);
        assert_eq!(cfg.run.suites, vec![Suite::Chart]);
    }

    #[test]
    fn negative_l_names_the_field() {
        match RunConfig::from_toml("[chart]\nL = -0.5\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "chart.L"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        match RunConfig::from_toml("[chart]\nwidth = 2\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "width"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn r_outside_range_is_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[run]\nr = [0.2]\n"),
            Err(Error::Config { field, .. }) if field == "run.r"
        ));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
