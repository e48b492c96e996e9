//! Pipeline configuration and its flat `section.key = value` text form.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cs::MeasurementKind;
use crate::dmd::{DmdConfig, LoopConfig, SecondLevelMethod, TruncationMethod};
use crate::error::{ModalError, Result};
use crate::ingest::DetectionConfig;
use crate::rpca::RpcaConfig;
use crate::sparsity::SweepConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionConfig {
    pub window_length: usize,
    pub maneuver_count: usize,
    pub demean: bool,
    pub detection: DetectionConfig,
}

impl Default for IngestionConfig {
    fn default() -> Self {
        Self {
            window_length: 2200,
            maneuver_count: 5,
            demean: false,
            detection: DetectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DelayMode {
    Fixed(usize),
    /// Runs the chain for every candidate and keeps the recommended delay.
    Sweep(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStage {
    pub enabled: bool,
    pub sweep: SweepConfig,
    /// Fixed penalty that replaces the sweep and crossing selection.
    pub gamma: Option<f64>,
}

impl Default for SparsityStage {
    fn default() -> Self {
        Self {
            enabled: true,
            sweep: SweepConfig::default(),
            gamma: None,
        }
    }
}

/// Where RPCA runs in a limited-sensor analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpcaPlacement {
    /// On the stacked full-state matrix, before `C` is applied.
    FullState,
    /// On the stacked compressed matrix.
    Compressed,
}

impl RpcaPlacement {
    fn name(self) -> &'static str {
        match self {
            RpcaPlacement::FullState => "full_state",
            RpcaPlacement::Compressed => "compressed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressedConfig {
    pub kind: MeasurementKind,
    pub p: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub ingestion: IngestionConfig,
    pub rpca_enabled: bool,
    pub rpca: RpcaConfig,
    pub dmd: DmdConfig,
    pub delay: DelayMode,
    pub outer_loop: LoopConfig,
    pub sparsity: SparsityStage,
    pub compressed: Option<CompressedConfig>,
    pub limited_rpca: RpcaPlacement,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let dmd = DmdConfig::default();
        Self {
            ingestion: IngestionConfig::default(),
            rpca_enabled: true,
            rpca: RpcaConfig::default(),
            delay: DelayMode::Fixed(dmd.delay),
            dmd,
            outer_loop: LoopConfig::default(),
            sparsity: SparsityStage::default(),
            compressed: None,
            limited_rpca: RpcaPlacement::FullState,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| ModalError::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "" | "none" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect::<Result<Vec<usize>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(ModalError::Config(format!("`{key}` needs at least one value")))
            } else {
                Ok(v)
            }
        })
}

fn method_name(m: TruncationMethod) -> &'static str {
    match m {
        TruncationMethod::GavishDonoho => "gavish_donoho",
        TruncationMethod::Energy => "energy",
        TruncationMethod::Fixed => "fixed",
        TruncationMethod::Combined => "combined",
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl PipelineConfig {
    /// Parses the flat text format; keys absent from the text keep their
    /// defaults. Blank lines and lines starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut compressed: (Option<MeasurementKind>, Option<usize>, Option<u64>) = (None, None, None);
        let mut delay_mode = "fixed".to_string();
        let mut delay_d = cfg.dmd.delay;
        let mut candidates: Option<Vec<usize>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ModalError::Parse {
                line: i + 1,
                message: format!("expected `section.key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "ingestion.window_length" => cfg.ingestion.window_length = parse(key, value)?,
                "ingestion.maneuver_count" => cfg.ingestion.maneuver_count = parse(key, value)?,
                "ingestion.demean" => cfg.ingestion.demean = parse(key, value)?,
                "ingestion.smoothing_width" => cfg.ingestion.detection.smoothing_width = parse(key, value)?,
                "ingestion.preroll" => cfg.ingestion.detection.preroll_fraction = parse(key, value)?,
                "rpca.enabled" => cfg.rpca_enabled = parse(key, value)?,
                "rpca.lambda" => cfg.rpca.lambda = parse(key, value)?,
                "rpca.mu0" => cfg.rpca.mu0 = parse_opt(key, value)?,
                "rpca.rho" => cfg.rpca.rho = parse(key, value)?,
                "rpca.tol" => cfg.rpca.tol = parse(key, value)?,
                "rpca.max_iter" => cfg.rpca.max_iter = parse(key, value)?,
                "truncation.method" => {
                    cfg.dmd.truncation.method = match value {
                        "gavish_donoho" => TruncationMethod::GavishDonoho,
                        "energy" => TruncationMethod::Energy,
                        "fixed" => TruncationMethod::Fixed,
                        "combined" => TruncationMethod::Combined,
                        other => return Err(ModalError::Config(format!("unknown truncation method `{other}`"))),
                    }
                }
                "truncation.energy" => cfg.dmd.truncation.energy = parse(key, value)?,
                "truncation.rank" => cfg.dmd.truncation.rank = parse_opt(key, value)?,
                "truncation.eta" => cfg.dmd.truncation.eta = parse_opt(key, value)?,
                "truncation.max_rank" => cfg.dmd.truncation.max_rank = parse_opt(key, value)?,
                "dmd.second_level" => {
                    cfg.dmd.second_level = match value {
                        "energy" => SecondLevelMethod::Energy,
                        "gavish_donoho" => SecondLevelMethod::GavishDonoho,
                        other => return Err(ModalError::Config(format!("unknown second-level rule `{other}`"))),
                    }
                }
                "dmd.second_level_energy" => cfg.dmd.second_level_energy = parse(key, value)?,
                "dmd.min_eigenvalue" => cfg.dmd.min_eigenvalue = parse(key, value)?,
                "delay.mode" => delay_mode = value.to_string(),
                "delay.d" => delay_d = parse(key, value)?,
                "delay.candidates" => candidates = Some(parse_list(key, value)?),
                "loop.threshold" => cfg.outer_loop.threshold = parse(key, value)?,
                "loop.max_outer" => cfg.outer_loop.max_outer = parse(key, value)?,
                "loop.stall" => cfg.outer_loop.stall = parse(key, value)?,
                "sparsity.enabled" => cfg.sparsity.enabled = parse(key, value)?,
                "sparsity.n_gammas" => cfg.sparsity.sweep.n_gammas = parse(key, value)?,
                "sparsity.gamma" => cfg.sparsity.gamma = parse_opt(key, value)?,
                "sparsity.max_probes" => cfg.sparsity.sweep.max_probes = parse(key, value)?,
                "admm.rho" => cfg.sparsity.sweep.admm.rho = parse(key, value)?,
                "admm.eps_abs" => cfg.sparsity.sweep.admm.eps_abs = parse(key, value)?,
                "admm.eps_rel" => cfg.sparsity.sweep.admm.eps_rel = parse(key, value)?,
                "admm.max_iter" => cfg.sparsity.sweep.admm.max_iter = parse(key, value)?,
                "compressed.kind" => compressed.0 = Some(value.parse()?),
                "compressed.p" => compressed.1 = Some(parse(key, value)?),
                "compressed.seed" => compressed.2 = Some(parse(key, value)?),
                "compressed.rpca" => {
                    cfg.limited_rpca = match value {
                        "full_state" => RpcaPlacement::FullState,
                        "compressed" => RpcaPlacement::Compressed,
                        other => return Err(ModalError::Config(format!("unknown RPCA placement `{other}`"))),
                    }
                }
                "run.seed" => cfg.seed = parse(key, value)?,
                other => {
                    return Err(ModalError::Parse {
                        line: i + 1,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        cfg.dmd.delay = delay_d;
        cfg.delay = match delay_mode.as_str() {
            "fixed" => DelayMode::Fixed(delay_d),
            "sweep" => DelayMode::Sweep(candidates.unwrap_or_else(|| vec![50, 100, 200, 300, 400])),
            other => return Err(ModalError::Config(format!("unknown delay mode `{other}`"))),
        };
        cfg.compressed = match compressed {
            (None, None, None) => None,
            (Some(kind), Some(p), seed) => Some(CompressedConfig {
                kind,
                p,
                seed: seed.unwrap_or(cfg.seed),
            }),
            _ => return Err(ModalError::Config("compressed section needs kind and p".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form listing every key; `from_text(to_text())`
    /// reproduces the configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let i = &self.ingestion;
        let t = &self.dmd.truncation;
        let sw = &self.sparsity.sweep;
        let _ = writeln!(s, "ingestion.window_length = {}", i.window_length);
        let _ = writeln!(s, "ingestion.maneuver_count = {}", i.maneuver_count);
        let _ = writeln!(s, "ingestion.demean = {}", i.demean);
        let _ = writeln!(s, "ingestion.smoothing_width = {}", i.detection.smoothing_width);
        let _ = writeln!(s, "ingestion.preroll = {}", i.detection.preroll_fraction);
        let _ = writeln!(s, "rpca.enabled = {}", self.rpca_enabled);
        let _ = writeln!(s, "rpca.lambda = {}", self.rpca.lambda);
        let _ = writeln!(s, "rpca.mu0 = {}", opt(self.rpca.mu0));
        let _ = writeln!(s, "rpca.rho = {}", self.rpca.rho);
        let _ = writeln!(s, "rpca.tol = {}", self.rpca.tol);
        let _ = writeln!(s, "rpca.max_iter = {}", self.rpca.max_iter);
        let _ = writeln!(s, "truncation.method = {}", method_name(t.method));
        let _ = writeln!(s, "truncation.energy = {}", t.energy);
        let _ = writeln!(s, "truncation.rank = {}", opt(t.rank));
        let _ = writeln!(s, "truncation.eta = {}", opt(t.eta));
        let _ = writeln!(s, "truncation.max_rank = {}", opt(t.max_rank));
        let second = match self.dmd.second_level {
            SecondLevelMethod::Energy => "energy",
            SecondLevelMethod::GavishDonoho => "gavish_donoho",
        };
        let _ = writeln!(s, "dmd.second_level = {second}");
        let _ = writeln!(s, "dmd.second_level_energy = {}", self.dmd.second_level_energy);
        let _ = writeln!(s, "dmd.min_eigenvalue = {}", self.dmd.min_eigenvalue);
        match &self.delay {
            DelayMode::Fixed(d) => {
                let _ = writeln!(s, "delay.mode = fixed");
                let _ = writeln!(s, "delay.d = {d}");
            }
            DelayMode::Sweep(c) => {
                let list: Vec<String> = c.iter().map(|d| d.to_string()).collect();
                let _ = writeln!(s, "delay.mode = sweep");
                let _ = writeln!(s, "delay.d = {}", self.dmd.delay);
                let _ = writeln!(s, "delay.candidates = {}", list.join(","));
            }
        }
        let _ = writeln!(s, "loop.threshold = {}", self.outer_loop.threshold);
        let _ = writeln!(s, "loop.max_outer = {}", self.outer_loop.max_outer);
        let _ = writeln!(s, "loop.stall = {}", self.outer_loop.stall);
        let _ = writeln!(s, "sparsity.enabled = {}", self.sparsity.enabled);
        let _ = writeln!(s, "sparsity.n_gammas = {}", sw.n_gammas);
        let _ = writeln!(s, "sparsity.gamma = {}", opt(self.sparsity.gamma));
        let _ = writeln!(s, "sparsity.max_probes = {}", sw.max_probes);
        let _ = writeln!(s, "admm.rho = {}", sw.admm.rho);
        let _ = writeln!(s, "admm.eps_abs = {}", sw.admm.eps_abs);
        let _ = writeln!(s, "admm.eps_rel = {}", sw.admm.eps_rel);
        let _ = writeln!(s, "admm.max_iter = {}", sw.admm.max_iter);
        if let Some(c) = &self.compressed {
            let _ = writeln!(s, "compressed.kind = {}", c.kind);
            let _ = writeln!(s, "compressed.p = {}", c.p);
            let _ = writeln!(s, "compressed.seed = {}", c.seed);
        }
        let _ = writeln!(s, "compressed.rpca = {}", self.limited_rpca.name());
        let _ = writeln!(s, "run.seed = {}", self.seed);
        s
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ModalError::Config(m));
        if self.ingestion.window_length < 2 || self.ingestion.maneuver_count == 0 {
            return err("window length must be at least 2 and maneuver count positive".into());
        }
        if self.rpca_enabled {
            self.rpca.validate()?;
        }
        let t = &self.dmd.truncation;
        if !(t.energy > 0.0 && t.energy <= 1.0) {
            return err(format!("truncation energy {} outside (0, 1]", t.energy));
        }
        if t.method == TruncationMethod::Fixed && t.rank.is_none_or(|r| r == 0) {
            return err("fixed truncation needs a positive rank".into());
        }
        if !(self.dmd.second_level_energy > 0.0 && self.dmd.second_level_energy <= 1.0) {
            return err("second-level energy outside (0, 1]".into());
        }
        match &self.delay {
            DelayMode::Fixed(0) => return err("delay must be at least 1".into()),
            DelayMode::Sweep(c) if c.is_empty() || c.contains(&0) => {
                return err("delay candidates must be positive".into())
            }
            _ => {}
        }
        let l = &self.outer_loop;
        if !(l.threshold > 0.0 && l.threshold < 1.0) || l.max_outer == 0 {
            return err(format!("invalid outer-loop settings {l:?}"));
        }
        if self.sparsity.enabled && self.sparsity.gamma.is_none() && self.sparsity.sweep.n_gammas < 2 {
            return err("a gamma sweep needs at least two values".into());
        }
        if let Some(c) = &self.compressed {
            if c.p == 0 {
                return err("compressed.p must be positive".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.compressed = Some(CompressedConfig {
            kind: MeasurementKind::GaussianRandom,
            p: 5,
            seed: 9,
        });
        cfg.delay = DelayMode::Sweep(vec![10, 20]);
        cfg.dmd.truncation.max_rank = Some(40);
        let back = PipelineConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_key_reports_line() {
        match PipelineConfig::from_text("# comment\n\nrpca.lambda = 2\nfoo.bar = 1\n") {
            Err(ModalError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(
            PipelineConfig::from_text("loop.threshold = 2.0"),
            Err(ModalError::Config(_))
        ));
        assert!(matches!(
            PipelineConfig::from_text("rpca.rho = fast"),
            Err(ModalError::Config(_))
        ));
        assert!(PipelineConfig::from_text("compressed.p = 5").is_err());
    }

    #[test]
    fn hash_changes_with_settings() {
        let a = PipelineConfig::default();
        let b = PipelineConfig::from_text("rpca.lambda = 1.5").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
