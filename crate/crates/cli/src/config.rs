//! Run configuration: one TOML document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fcsched::drcc::DrccParams;
use fcsched::freqdyn::CertifyOptions;
use fcsched::sched::{BuildOptions, CaseMode};
use fcsched::solver::SolveOptions;

pub const RUN_SCHEMA: &str = "fcsched-run/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub case: PathBuf,
    pub scenarios: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Keep only the first `periods` periods of the scenario file.
    #[serde(default)]
    pub periods: Option<usize>,
    #[serde(default)]
    pub build: BuildSection,
    #[serde(default)]
    pub drcc: DrccParams,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub certify: CertifyOptions,
    #[serde(default)]
    pub report: ReportOptions,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A case mode plus optional per-flag overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub mode: Option<CaseMode>,
    pub frequency_constraints: Option<bool>,
    pub synthetic_inertia: Option<bool>,
    pub constant_power: Option<bool>,
    pub nadir: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// Per-family CSV tables next to the solution dump.
    pub tables: bool,
    /// Export of the conic program in text form.
    pub conic: bool,
    /// Model size table.
    pub manifest: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            tables: true,
            conic: true,
            manifest: true,
        }
    }
}

impl RunConfig {
    /// Configuration with defaults for everything but the input paths.
    pub fn new(case: PathBuf, scenarios: PathBuf) -> Self {
        RunConfig {
            schema: RUN_SCHEMA.into(),
            case,
            scenarios,
            output: default_output(),
            periods: None,
            build: BuildSection::default(),
            drcc: DrccParams::default(),
            solver: SolveOptions::default(),
            certify: CertifyOptions::default(),
            report: ReportOptions::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        if cfg.schema != RUN_SCHEMA {
            return Err(format!(
                "unsupported schema `{}`, expected `{RUN_SCHEMA}`",
                cfg.schema
            ));
        }
        Ok(cfg)
    }

    /// Read a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut cfg =
            Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.case, &mut cfg.scenarios, &mut cfg.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialisation cannot fail")
    }

    pub fn build_options(&self) -> BuildOptions {
        let b = &self.build;
        let mut out = BuildOptions::for_mode(b.mode.unwrap_or(CaseMode::CaseII));
        if let Some(v) = b.frequency_constraints {
            out.frequency_constraints = v;
        }
        if let Some(v) = b.synthetic_inertia {
            out.synthetic_inertia = v;
        }
        if let Some(v) = b.constant_power {
            out.constant_power = v;
        }
        if let Some(v) = b.nadir {
            out.nadir = v;
        }
        out.drcc = self.drcc.clone();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("../../../docs/cli.md");
        let start = doc.find("```toml\n").unwrap() + 8;
        let end = start + doc[start..].find("```").unwrap();
        let cfg = RunConfig::from_toml(&doc[start..end]).unwrap();
        assert_eq!(cfg.build.mode, Some(CaseMode::CaseII));
        assert_eq!(cfg.drcc, DrccParams::default());
        assert_eq!(cfg.certify, CertifyOptions::default());
        assert_eq!(cfg.solver.gap_rel, 0.01);
    }

    #[test]
    fn minimal_document() {
        let cfg = RunConfig::from_toml(
            "schema = \"fcsched-run/1\"\ncase = \"c.json\"\nscenarios = \"s.csv\"\n",
        )
        .unwrap();
        assert_eq!(cfg.output, PathBuf::from("out"));
        assert_eq!(cfg.build_options(), BuildOptions::default());
    }

    #[test]
    fn overrides_and_round_trip() {
        let mut cfg = RunConfig::new("c.json".into(), "s.csv".into());
        cfg.build.mode = Some(CaseMode::CaseI);
        cfg.build.nadir = Some(false);
        cfg.drcc.alpha = 0.2;
        cfg.solver.gap_rel = 0.01;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let b = back.build_options();
        assert!(b.frequency_constraints && !b.synthetic_inertia && !b.nadir);
        assert_eq!(b.drcc.alpha, 0.2);
    }

    #[test]
    fn rejects_unknown_keys_and_schema() {
        let bad = "schema = \"fcsched-run/1\"\ncase = \"c\"\nscenarios = \"s\"\ncolour = 1\n";
        assert!(RunConfig::from_toml(bad).is_err());
        let old = "schema = \"fcsched-run/0\"\ncase = \"c\"\nscenarios = \"s\"\n";
        assert!(RunConfig::from_toml(old).unwrap_err().contains("schema"));
    }
}
