//! Run configuration: TOML schema, defaults, validation and conversion into
//! library types.
//!
//! Precedence, lowest first: built-in defaults, the config file, command-line
//! flags.

use std::path::{Path, PathBuf};

use mdk_core::{
    build_channel, Channel, CodingErrorModel, Fluctuation, FluctuationSpec, IntensityGrid,
    PhotonSource, PipelineOptions, PreparationMode, SimRunConfig, SingleBasisReading, SourceFamily,
    SourcePair, SourceTriple, DEFAULT_F_EC, DEFAULT_N_SIGMA,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// First line of every emitted header; marks a file whose leading comment
/// block can be read back as a config.
pub const HEADER_MARKER: &str = "# mdk effective configuration";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Asymptotic,
    Montecarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_f_ec")]
    pub f_ec: f64,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub single_basis_decoy: bool,
    #[serde(default)]
    pub phase_randomized: bool,
    #[serde(default)]
    pub single_basis_reading: SingleBasisReading,
    #[serde(default)]
    pub sources: SourcesConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub coding: CodingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluctuation: Option<FluctuationConfig>,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

fn default_f_ec() -> f64 {
    DEFAULT_F_EC
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            f_ec: DEFAULT_F_EC,
            mode: RunMode::Asymptotic,
            single_basis_decoy: false,
            phase_randomized: false,
            single_basis_reading: SingleBasisReading::IdealFraction,
            sources: SourcesConfig::default(),
            channel: ChannelConfig::default(),
            coding: CodingConfig::default(),
            fluctuation: None,
            montecarlo: MonteCarloConfig::default(),
            scan: None,
            optimize: None,
            output: None,
        }
    }
}

/// Coding-error parameters; omitted keys are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CodingConfig {
    pub theta_az: f64,
    pub theta_ax: f64,
    pub theta_bz: f64,
    pub theta_bx: f64,
    pub g_z: f64,
    pub g_x: f64,
    pub delta_x_max: f64,
}

impl CodingConfig {
    pub fn model(&self) -> CodingErrorModel<f64> {
        CodingErrorModel {
            theta_az: self.theta_az,
            theta_ax: self.theta_ax,
            theta_bz: self.theta_bz,
            theta_bx: self.theta_bx,
            g_z: self.g_z,
            g_x: self.g_x,
            delta_x_max: self.delta_x_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Coherent { mu: f64 },
    Thermal { mu: f64 },
    Vacuum,
    Custom { probs: Vec<f64> },
}

impl SourceSpec {
    fn build(&self, k_max: usize) -> Result<PhotonSource<f64>, mdk_core::SourceError> {
        match self {
            SourceSpec::Coherent { mu } => PhotonSource::coherent(*mu, k_max),
            SourceSpec::Thermal { mu } => PhotonSource::thermal(*mu, k_max),
            SourceSpec::Vacuum => PhotonSource::vacuum(k_max),
            SourceSpec::Custom { probs } => {
                let mut p = probs.clone();
                p.resize(k_max + 1, 0.0);
                PhotonSource::custom("custom", p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideConfig {
    pub decoy: SourceSpec,
    pub signal: SourceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcesConfig {
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Skip the decoy-condition check (the bounds then carry no guarantee).
    #[serde(default)]
    pub unchecked: bool,
    pub alice: SideConfig,
    /// Defaults to Alice's sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob: Option<SideConfig>,
}

fn default_k_max() -> usize {
    12
}

impl Default for SourcesConfig {
    fn default() -> Self {
        Self {
            k_max: default_k_max(),
            unchecked: false,
            alice: SideConfig {
                decoy: SourceSpec::Coherent { mu: 0.1 },
                signal: SourceSpec::Coherent { mu: 0.4 },
            },
            bob: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub eta_a: f64,
    pub eta_b: f64,
    pub dark: f64,
    pub misalign: f64,
    /// Optional CSV `n,m,y,e` overriding individual table entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            eta_a: 0.1,
            eta_b: 0.1,
            dark: 1e-6,
            misalign: 0.01,
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationConfig {
    /// Standard errors per cell, derived from Monte Carlo counts. An empty
    /// `[fluctuation]` table means this, at 5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sigma: Option<f64>,
    /// Same relative bound for every cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<f64>,
    /// Relative bound per cell, rows Alice (o, x, y), columns Bob.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_pairs: u64,
    pub probs_alpha: [f64; 3],
    pub probs_beta: [f64; 3],
    pub basis_probs: [f64; 2],
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_pairs: 10_000_000,
            probs_alpha: [1.0 / 3.0; 3],
            probs_beta: [1.0 / 3.0; 3],
            basis_probs: [0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Fiber length per arm; transmittance `10^(-0.02 L)` (0.2 dB/km).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances_km: Option<Vec<f64>>,
    /// Per-arm transmittances, used when no distances are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
}

/// Inclusive evenly spaced axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub mu_x: AxisConfig,
    pub mu_y: AxisConfig,
    #[serde(default)]
    pub family: SourceFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
}

/// Per-arm transmittance of `km` kilometres of 0.2 dB/km fiber.
pub fn fiber_transmittance(km: f64) -> f64 {
    10f64.powf(-0.02 * km)
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    /// Parses TOML text. A file starting with [`HEADER_MARKER`] is read from
    /// its leading comment block, so any emitted CSV can serve as a config.
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let body = if text.starts_with(HEADER_MARKER) {
            text.lines()
                .skip(1)
                .take_while(|l| l.starts_with('#'))
                .map(|l| {
                    l.strip_prefix("# ")
                        .or_else(|| l.strip_prefix('#'))
                        .unwrap_or(l)
                })
                .collect::<Vec<_>>()
                .join("\n")
        } else {
            text.to_string()
        };
        let mut cfg: Self = toml::from_str(&body).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(f) = cfg.fluctuation.as_mut() {
            if f.n_sigma.is_none() && f.uniform.is_none() && f.rel.is_none() {
                f.n_sigma = Some(DEFAULT_N_SIGMA);
            }
        }
        Ok(cfg)
    }

    /// Loads a config file and resolves relative table paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(&path.display().to_string(), e))?;
        let mut cfg = Self::from_text(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(table) = cfg.channel.table.as_mut() {
            if table.is_relative() {
                *table = path.parent().unwrap_or(Path::new(".")).join(&*table);
            }
        }
        Ok(cfg)
    }

    /// Checks value ranges and internal consistency, naming the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(1.0..=2.0).contains(&self.f_ec) {
            return Err(config_err(
                "f_ec",
                format!("{} is outside [1, 2]", self.f_ec),
            ));
        }
        if self.sources.k_max < 2 {
            return Err(config_err("sources.k_max", "must be at least 2"));
        }
        self.coding
            .model()
            .validate()
            .map_err(|e| config_err("coding", e))?;
        if let Some(table) = &self.channel.table {
            if !table.exists() {
                return Err(config_err(
                    "channel.table",
                    format!("{} does not exist", table.display()),
                ));
            }
        }
        if let Some(f) = &self.fluctuation {
            let set = [f.n_sigma.is_some(), f.uniform.is_some(), f.rel.is_some()];
            if set.iter().filter(|&&b| b).count() != 1 {
                return Err(config_err(
                    "fluctuation",
                    "set exactly one of n_sigma, uniform, rel",
                ));
            }
            if f.n_sigma.is_some() && self.mode != RunMode::Montecarlo {
                return Err(config_err(
                    "fluctuation.n_sigma",
                    "needs pulse counts; use mode = \"montecarlo\"",
                ));
            }
            self.fluctuation()?;
        }
        if self.mode == RunMode::Montecarlo {
            self.sim_run_config(0.0, 0.0)
                .validate()
                .map_err(|e| config_err("montecarlo", e))?;
        }
        if let Some(scan) = &self.scan {
            let n = scan.distances_km.as_ref().map_or(0, Vec::len)
                + scan.etas.as_ref().map_or(0, Vec::len);
            if n == 0 {
                return Err(config_err("scan", "needs a nonempty distances_km or etas"));
            }
        }
        if let Some(opt) = &self.optimize {
            if opt.mu_x.steps == 0 || opt.mu_y.steps == 0 {
                return Err(config_err("optimize", "axes need at least one step"));
            }
        }
        Ok(())
    }

    pub fn preparation_mode(&self) -> PreparationMode {
        if self.phase_randomized {
            PreparationMode::PhaseRandomized
        } else {
            PreparationMode::FlipMixture
        }
    }

    pub fn fluctuation(&self) -> Result<Fluctuation<f64>, CliError> {
        let Some(f) = &self.fluctuation else {
            return Ok(Fluctuation::None);
        };
        let spec = |r| FluctuationSpec::new(r).map_err(|e| config_err("fluctuation", e));
        Ok(match (f.n_sigma, f.uniform, f.rel) {
            (Some(n_sigma), _, _) => Fluctuation::FromCounts { n_sigma },
            (_, Some(u), _) => Fluctuation::Fixed(spec([[u; 3]; 3])?),
            (_, _, Some(rel)) => Fluctuation::Fixed(spec(rel)?),
            _ => Fluctuation::None,
        })
    }

    pub fn pipeline_options(&self) -> Result<PipelineOptions<f64>, CliError> {
        Ok(PipelineOptions {
            mode: self.preparation_mode(),
            f_ec: self.f_ec,
            single_basis_decoy: self.single_basis_decoy,
            reading: self.single_basis_reading,
            fluctuation: self.fluctuation()?,
        })
    }

    fn side(&self, side: &SideConfig, checked: bool) -> Result<SourceTriple<f64>, CliError> {
        let k = self.sources.k_max;
        let decoy = side
            .decoy
            .build(k)
            .map_err(|e| config_err("sources.decoy", e))?;
        let signal = side
            .signal
            .build(k)
            .map_err(|e| config_err("sources.signal", e))?;
        if self.sources.unchecked || !checked {
            SourceTriple::unchecked(decoy, signal).map_err(|e| config_err("sources", e))
        } else {
            SourceTriple::new(decoy, signal).map_err(CliError::from_source)
        }
    }

    /// Sources for analysis: the decoy condition must hold unless
    /// `sources.unchecked` is set.
    pub fn source_pair(&self) -> Result<SourcePair<f64>, CliError> {
        self.build_sources(true)
    }

    /// Sources for forward simulation only, where any distributions are allowed.
    pub fn simulation_sources(&self) -> Result<SourcePair<f64>, CliError> {
        self.build_sources(false)
    }

    fn build_sources(&self, checked: bool) -> Result<SourcePair<f64>, CliError> {
        let alice = self.side(&self.sources.alice, checked)?;
        let bob = match &self.sources.bob {
            Some(b) => self.side(b, checked)?,
            None => alice.clone(),
        };
        Ok(SourcePair::new(alice, bob))
    }

    /// Channel at the configured transmittances, with table overrides applied.
    pub fn channel(&self) -> Result<Channel<f64>, CliError> {
        self.channel_at(self.channel.eta_a, self.channel.eta_b)
    }

    pub fn channel_at(&self, eta_a: f64, eta_b: f64) -> Result<Channel<f64>, CliError> {
        let c = &self.channel;
        let mut ch = build_channel(eta_a, eta_b, c.dark, c.misalign, self.sources.k_max)
            .map_err(|e| config_err("channel", e))?;
        if let Some(path) = &c.table {
            for (n, m, y, e) in crate::csvio::read_channel_table(path)? {
                ch.set_entry(n, m, y, e)
                    .map_err(|err| config_err("channel.table", err))?;
            }
        }
        Ok(ch)
    }

    pub fn sim_run_config(&self, flip_a: f64, flip_b: f64) -> SimRunConfig {
        let mc = &self.montecarlo;
        SimRunConfig {
            n_pairs: mc.n_pairs,
            probs_alpha: mc.probs_alpha,
            probs_beta: mc.probs_beta,
            basis_probs: mc.basis_probs,
            seed: self.seed,
            x_flips: [flip_a, flip_b],
        }
    }

    /// Probability that a pulse pair is the signal pair `y_A y_B`.
    pub fn signal_pair_probability(&self) -> f64 {
        self.montecarlo.probs_alpha[2] * self.montecarlo.probs_beta[2]
    }

    pub fn intensity_grid(&self) -> Result<(IntensityGrid<f64>, SourceFamily), CliError> {
        let opt = self
            .optimize
            .as_ref()
            .ok_or_else(|| config_err("optimize", "section is required for this command"))?;
        let axis = |a: &AxisConfig| IntensityGrid::linspace(a.start, a.stop, a.steps);
        Ok((
            IntensityGrid {
                mu_x: axis(&opt.mu_x),
                mu_y: axis(&opt.mu_y),
            },
            opt.family,
        ))
    }

    /// Scan points as `(distance_km, eta)`; distance is NaN for explicit transmittances.
    pub fn scan_points(&self) -> Result<Vec<(Option<f64>, f64)>, CliError> {
        let scan = self
            .scan
            .as_ref()
            .ok_or_else(|| config_err("scan", "section is required for this command"))?;
        let mut pts = Vec::new();
        if let Some(d) = &scan.distances_km {
            pts.extend(d.iter().map(|&km| (Some(km), fiber_transmittance(km))));
        }
        if let Some(e) = &scan.etas {
            pts.extend(e.iter().map(|&eta| (None, eta)));
        }
        Ok(pts)
    }

    /// The effective configuration as `# `-prefixed TOML lines, without the output path.
    pub fn header(&self) -> Result<String, CliError> {
        let mut echo = self.clone();
        echo.output = None;
        let body = toml::to_string(&echo).map_err(|e| CliError::Config(e.to_string()))?;
        let mut out = String::from(HEADER_MARKER);
        out.push('\n');
        for line in body.lines() {
            if line.is_empty() {
                out.push_str("#\n");
            } else {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
        }
        Ok(out)
    }
}
