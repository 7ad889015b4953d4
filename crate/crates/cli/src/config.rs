//! INI run configuration, its effective (defaults filled) form and hash.

use std::collections::BTreeMap;
use std::path::Path;

use boilgen_core::dataset::StackSettings;
use boilgen_core::diagnostics::{F_EPS, SMOOTHING_WINDOW};
use boilgen_core::sim::{build_campaign, SimConfig};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SECTIONS: [&str; 5] = ["sim", "thermal", "eos", "dataset", "diagnostics"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsSettings {
    pub f_eps: f64,
    pub smoothing_window: usize,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        Self {
            f_eps: F_EPS,
            smoothing_window: SMOOTHING_WINDOW,
        }
    }
}

/// Everything a run depends on besides its inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scale: Scale,
    pub seed_offset: u64,
    /// Simulation overrides as JSON paths into `SimConfig`, applied to every campaign.
    pub sim_overrides: BTreeMap<String, Value>,
    pub dataset: StackSettings,
    pub diagnostics: DiagnosticsSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scale: Scale::Full,
            seed_offset: 0,
            sim_overrides: BTreeMap::new(),
            dataset: StackSettings::default(),
            diagnostics: DiagnosticsSettings::default(),
        }
    }
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    if raw.eq_ignore_ascii_case("none") {
        return Value::Null;
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn number<T: serde::de::DeserializeOwned>(section: &str, key: &str, raw: &str) -> Result<T, CliError> {
    serde_json::from_value(parse_value(raw))
        .map_err(|e| CliError::Config(format!("[{section}] {key} = {raw}: {e}")))
}

/// Path of `section.key` inside the serialized `SimConfig`.
fn sim_path(section: &str, key: &str) -> Vec<String> {
    match (section, key) {
        ("sim", "tau" | "forcing_sigma") => vec!["srt".into(), key.into()],
        ("sim", _) => vec![key.into()],
        ("eos", "g_int") => vec!["pseudopotential".into(), key.into()],
        _ => vec![section.into(), key.into()],
    }
}

fn lookup<'a>(v: &'a Value, path: &[String]) -> Option<&'a Value> {
    path.iter().try_fold(v, |v, k| v.as_object()?.get(k))
}

fn lookup_mut<'a>(v: &'a mut Value, path: &[String]) -> Option<&'a mut Value> {
    path.iter().try_fold(v, |v, k| v.as_object_mut()?.get_mut(k))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::Config(format!("config file {} not found", path.display())));
        }
        let ini = ini::Ini::load_from_file(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        let template = serde_json::to_value(SimConfig::default()).expect("config serializes");
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(CliError::Config(format!("key {k:?} outside any section")));
                }
                continue;
            };
            if !SECTIONS.contains(&section) {
                return Err(CliError::Config(format!("unknown section [{section}]")));
            }
            for (key, raw) in props.iter() {
                cfg.set(section, key, raw, &template)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, raw: &str, template: &Value) -> Result<(), CliError> {
        match (section, key) {
            ("sim", "scale") => {
                self.scale = match raw.trim() {
                    "full" => Scale::Full,
                    "desk" => Scale::Desk,
                    other => return Err(CliError::Config(format!("[sim] scale must be full or desk, got {other:?}"))),
                }
            }
            ("sim", "seed_offset") => self.seed_offset = number(section, key, raw)?,
            ("sim", "srt" | "thermal" | "eos" | "pseudopotential") => {
                return Err(CliError::Config(format!("unknown key [sim] {key}")))
            }
            ("sim" | "thermal" | "eos", _) => {
                let path = sim_path(section, key);
                if lookup(template, &path).is_none() {
                    return Err(CliError::Config(format!("unknown key [{section}] {key}")));
                }
                self.sim_overrides.insert(path.join("."), parse_value(raw));
            }
            ("dataset", "p") => self.dataset.p = number(section, key, raw)?,
            ("dataset", "threshold") => self.dataset.threshold = number(section, key, raw)?,
            ("dataset", "t0_tolerance") => self.dataset.t0_tolerance = number(section, key, raw)?,
            ("dataset", "t0_fallback") => self.dataset.t0_fallback = number(section, key, raw)?,
            ("dataset", "mirror") => self.dataset.mirror = number(section, key, raw)?,
            ("diagnostics", "f_eps") => self.diagnostics.f_eps = number(section, key, raw)?,
            ("diagnostics", "smoothing_window") => {
                self.diagnostics.smoothing_window = number(section, key, raw)?
            }
            _ => return Err(CliError::Config(format!("unknown key [{section}] {key}"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        // every override must deserialize and pass the simulator's own checks
        self.campaign(1)?;
        if !(self.dataset.threshold > 0.0) {
            return Err(CliError::Config("[dataset] threshold must be positive".into()));
        }
        if self.diagnostics.smoothing_window == 0 || !(self.diagnostics.f_eps > 0.0) {
            return Err(CliError::Config("[diagnostics] needs f_eps > 0 and smoothing_window >= 1".into()));
        }
        Ok(())
    }

    /// Campaign `id` with scale, seed offset and overrides applied.
    pub fn campaign(&self, id: u32) -> Result<SimConfig, CliError> {
        let mut base = build_campaign(id).map_err(|e| CliError::Config(e.to_string()))?;
        base.seed += self.seed_offset;
        if self.scale == Scale::Desk {
            base = base.desk_scale();
        }
        let mut v = serde_json::to_value(base).expect("config serializes");
        for (path, value) in &self.sim_overrides {
            let parts: Vec<String> = path.split('.').map(String::from).collect();
            let slot = lookup_mut(&mut v, &parts)
                .ok_or_else(|| CliError::Config(format!("unknown setting {path}")))?;
            *slot = value.clone();
        }
        let config: SimConfig = serde_json::from_value(v)
            .map_err(|e| CliError::Config(format!("simulation settings: {e}")))?;
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form; object keys are sorted.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().to_string().as_bytes()))
    }

    /// The effective configuration as INI text, defaults included.
    pub fn echo(&self) -> String {
        let mut sections: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
        let sim = sections.entry("sim").or_default();
        sim.push(("scale".into(), format!("{:?}", self.scale).to_lowercase()));
        sim.push(("seed_offset".into(), self.seed_offset.to_string()));
        for (path, value) in &self.sim_overrides {
            let (section, key) = match path.split_once('.') {
                Some(("srt", k)) => ("sim", k),
                Some(("pseudopotential", k)) => ("eos", k),
                Some(("thermal", k)) => ("thermal", k),
                Some(("eos", k)) => ("eos", k),
                _ => ("sim", path.as_str()),
            };
            sections.entry(section).or_default().push((key.into(), value.to_string()));
        }
        let d = &self.dataset;
        sections.entry("dataset").or_default().extend([
            ("p".into(), d.p.to_string()),
            ("threshold".into(), d.threshold.to_string()),
            ("t0_tolerance".into(), d.t0_tolerance.to_string()),
            ("t0_fallback".into(), d.t0_fallback.to_string()),
            ("mirror".into(), d.mirror.to_string()),
        ]);
        sections.entry("diagnostics").or_default().extend([
            ("f_eps".into(), self.diagnostics.f_eps.to_string()),
            ("smoothing_window".into(), self.diagnostics.smoothing_window.to_string()),
        ]);
        let mut out = String::new();
        for (name, entries) in sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out.push_str(&format!("# config hash {}\n", self.hash()));
        out
    }

    /// Metadata block attached to every output.
    pub fn stamp(&self) -> Value {
        json!({ "config_hash": self.hash(), "config": self.to_json() })
    }
}
