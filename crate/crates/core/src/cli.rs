//! Command-line front end: JSON configs, sweeps, scenario presets and CSV
//! output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, Bl3Options};
use crate::bnb::{self, BnbOptions};
use crate::channel::{self, ChannelSet, GeometryConfig};
use crate::error::{Error, Result};
use crate::instance::{self, InstanceParams, ProblemInstance, Solution, SolveStatus};
use crate::linalg::db_to_linear;
use crate::{mps, reform};

pub const CSV_HEADER: &str =
    "sweep_param,value,method,f,f_com,f_sen,tau,admitted_mask,status,gap,nodes,lp_iters,time_ms";

/// Angular samples of an emitted beampattern (0.25 degree steps).
pub const BEAMPATTERN_POINTS: usize = 721;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: GeometryConfig,
    pub instance: InstanceConfig,
    pub solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig {
                n_antennas: 6,
                ..GeometryConfig::default()
            },
            instance: InstanceConfig::default(),
            solver: SolverConfig::default(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    pub phase_bits: u32,
    /// Explicit phase alphabet in degrees; overrides `phase_bits`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_angles_deg: Option<Vec<f64>>,
    pub snr_threshold: f64,
    /// Interpret `snr_threshold` in dB instead of linear units.
    pub snr_threshold_db: bool,
    pub couple_admission: bool,
    /// `[rho_com, rho_sen]`; hierarchy weights when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 2]>,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            phase_bits: 3,
            phase_angles_deg: None,
            snr_threshold: 30.0,
            snr_threshold_db: false,
            couple_admission: false,
            weights: None,
        }
    }
}

impl InstanceConfig {
    /// Alphabet size `L`, or the reason the phase settings are unusable.
    pub fn phase_count(&self) -> Result<usize> {
        match &self.phase_angles_deg {
            Some(a) if a.is_empty() || a.iter().any(|v| !v.is_finite()) => {
                Err(Error::Config("instance.phase_angles_deg must be nonempty and finite".into()))
            }
            Some(a) => Ok(a.len()),
            None if (1..=16).contains(&self.phase_bits) => Ok(1 << self.phase_bits),
            None => Err(Error::Config(format!(
                "instance.phase_bits must be 1..=16, got {}",
                self.phase_bits
            ))),
        }
    }

    pub fn params(&self) -> InstanceParams {
        InstanceParams {
            phase_bits: self.phase_bits,
            phase_angles: self
                .phase_angles_deg
                .as_ref()
                .map(|a| a.iter().map(|d| d.to_radians()).collect()),
            snr_threshold: if self.snr_threshold_db {
                db_to_linear(self.snr_threshold)
            } else {
                self.snr_threshold
            },
            couple_admission: self.couple_admission,
            weights: self.weights.map(|[a, b]| (a, b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
    pub symmetry_break: bool,
    /// RAND draws.
    pub trials: usize,
    /// Largest `L^N` the exhaustive oracle may enumerate.
    pub oracle_guard: f64,
    pub bl3_max_iters: usize,
    pub bl3_tol: f64,
    pub bl3_trials: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let bl3 = Bl3Options::default();
        Self {
            gap: 1e-6,
            node_limit: None,
            time_limit_s: None,
            symmetry_break: true,
            trials: 10_000,
            oracle_guard: 1e8,
            bl3_max_iters: bl3.max_iters,
            bl3_tol: bl3.tol,
            bl3_trials: bl3.trials,
        }
    }
}

impl SolverConfig {
    pub fn bnb_options(&self) -> BnbOptions {
        BnbOptions {
            gap: self.gap,
            node_limit: self.node_limit,
            time_limit: self.time_limit_s.map(Duration::from_secs_f64),
            symmetry_break: self.symmetry_break,
            ..BnbOptions::default()
        }
    }

    pub fn bl3_options(&self, seed: u64) -> Bl3Options {
        Bl3Options {
            max_iters: self.bl3_max_iters,
            tol: self.bl3_tol,
            trials: self.bl3_trials,
            seed,
            ..Bl3Options::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
pub enum SweepParam {
    #[serde(rename = "P_tx")]
    #[value(name = "P_tx")]
    PTx,
    #[serde(rename = "Gamma_th", alias = "Γ_th")]
    #[value(name = "Gamma_th")]
    GammaTh,
    #[serde(rename = "Delta", alias = "Δ")]
    #[value(name = "Delta")]
    Delta,
    #[serde(rename = "N")]
    #[value(name = "N")]
    N,
    #[serde(rename = "Q")]
    #[value(name = "Q")]
    Q,
    #[serde(rename = "d_common")]
    #[value(name = "d_common")]
    DCommon,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::PTx => "P_tx",
            SweepParam::GammaTh => "Gamma_th",
            SweepParam::Delta => "Delta",
            SweepParam::N => "N",
            SweepParam::Q => "Q",
            SweepParam::DCommon => "d_common",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    Opt,
    Bl2,
    Bl3,
    Rand,
    Oracle,
}

impl MethodTag {
    pub fn label(&self) -> &'static str {
        match self {
            MethodTag::Opt => "OPT",
            MethodTag::Bl2 => "BL2",
            MethodTag::Bl3 => "BL3",
            MethodTag::Rand => "RAND",
            MethodTag::Oracle => "ES",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodTag>,
}

fn default_methods() -> Vec<MethodTag> {
    vec![MethodTag::Opt]
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(config_err)?;
        let s = &self.solver;
        if !(s.gap >= 0.0) || !s.gap.is_finite() {
            return Err(Error::Config(format!("solver.gap must be finite and >= 0, got {}", s.gap)));
        }
        if s.trials == 0 {
            return Err(Error::Config("solver.trials must be positive".into()));
        }
        if let Some(t) = s.time_limit_s {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Config(format!("solver.time_limit_s must be positive, got {t}")));
            }
        }
        if !(self.instance.snr_threshold >= 0.0) && !self.instance.snr_threshold_db {
            return Err(Error::Config("instance.snr_threshold must be >= 0".into()));
        }
        self.instance.phase_count()?;
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Config("sweep.values must be nonempty".into()));
            }
            if sw.methods.is_empty() {
                return Err(Error::Config("sweep.methods must be nonempty".into()));
            }
            for &v in &sw.values {
                let at = self.at(sw.parameter, v)?;
                at.geometry.validate().map_err(config_err)?;
                let phases = at.instance.phase_count()?;
                if sw.methods.contains(&MethodTag::Oracle) {
                    let count = (phases as f64).powi(at.geometry.n_antennas.min(i32::MAX as usize) as i32);
                    if count > s.oracle_guard {
                        return Err(Error::Config(format!(
                            "oracle method needs {count} candidates at {}={v}, guard is {}",
                            sw.parameter.as_str(),
                            s.oracle_guard
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// This config with one sweep coordinate overridden.
    pub fn at(&self, param: SweepParam, value: f64) -> Result<Config> {
        let mut c = self.clone();
        c.sweep = None;
        if !value.is_finite() {
            return Err(Error::Config(format!("{} value must be finite", param.as_str())));
        }
        let count = |what: &str| -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{what} must be a nonnegative integer, got {value}")))
            }
        };
        match param {
            SweepParam::PTx => c.geometry.tx_power_dbm = value,
            SweepParam::GammaTh => c.instance.snr_threshold = value,
            SweepParam::Delta => c.geometry.angle_uncertainty_deg = value,
            SweepParam::N => c.geometry.n_antennas = count("N")?,
            SweepParam::Q => {
                c.instance.phase_bits = count("Q")? as u32;
                c.instance.phase_angles_deg = None;
            }
            SweepParam::DCommon => {
                c.geometry.user_distances_m = vec![value; c.geometry.n_users];
            }
        }
        Ok(c)
    }

    pub fn channels(&self) -> Result<ChannelSet> {
        channel::generate(&self.geometry).map_err(config_err)
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        let ch = self.channels()?;
        self.instance_from(&ch)
    }

    pub fn instance_from(&self, ch: &ChannelSet) -> Result<ProblemInstance> {
        ProblemInstance::from_channels(&self.geometry, ch, &self.instance.params())
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

/// Parses and validates a JSON config; errors carry line and column.
pub fn parse_config(text: &str) -> Result<Config> {
    let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::NonUniformAlphabet
        | Error::Mps { .. } => EXIT_CONFIG,
        Error::GuardExceeded { .. }
        | Error::LpFailure(_)
        | Error::CoefficientOverflow(_)
        | Error::IntegralityViolation { .. }
        | Error::FeasibilityViolation(_) => EXIT_SOLVER,
    }
}

// ---------------------------------------------------------------- solving

/// Runs one method and re-checks the result against the instance.
pub fn run_method(inst: &ProblemInstance, method: MethodTag, solver: &SolverConfig, seed: u64) -> Result<Solution> {
    let sol = match method {
        MethodTag::Opt => {
            let model = reform::build_milp(inst)?;
            bnb::solve(&model, inst, &solver.bnb_options())?
        }
        MethodTag::Bl2 => baselines::bl2_inner_approx(inst, &solver.bnb_options())?.solution,
        MethodTag::Bl3 => baselines::bl3_sca(inst, &solver.bl3_options(seed))?.solution,
        MethodTag::Rand => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5241_4e44);
            baselines::rand_baseline(inst, solver.trials, &mut rng)?.solution
        }
        MethodTag::Oracle => bnb::exhaustive_search(inst, solver.oracle_guard)?,
    };
    inst.check_feasible(&sol)?;
    Ok(sol)
}

#[derive(Debug, Clone)]
pub struct Record {
    pub sweep_param: String,
    pub value: f64,
    pub method: MethodTag,
    pub solution: Solution,
}

impl Record {
    pub fn csv_line(&self, timing: bool) -> String {
        let s = &self.solution;
        let mask: String = s.admitted.iter().map(|&a| if a { '1' } else { '0' }).collect();
        let ms = if timing { s.stats.wall_time.as_secs_f64() * 1e3 } else { 0.0 };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.sweep_param,
            self.value,
            self.method.label(),
            s.f,
            s.f_com,
            s.f_sen,
            s.tau,
            mask,
            s.stats.status.as_str(),
            s.stats.gap,
            s.stats.nodes,
            s.stats.lp_iterations,
            ms
        )
    }

    pub fn hit_limit(&self) -> bool {
        matches!(self.solution.stats.status, SolveStatus::NodeLimit | SolveStatus::TimeLimit)
    }
}

/// Solves every (value, method) pair of a sweep. Channels are regenerated
/// from the same seed at each point, so coordinates that do not enter the
/// channel model (power, threshold, resolution) see identical draws.
pub fn run_sweep(cfg: &Config, label: &str, verbose: bool) -> Result<Vec<Record>> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no sweep section".into()))?;
    let mut out = Vec::new();
    for &v in &sw.values {
        let at = cfg.at(sw.parameter, v)?;
        let inst = at.instance()?;
        for &m in &sw.methods {
            let solution = run_method(&inst, m, &at.solver, at.geometry.seed)?;
            if verbose {
                eprintln!(
                    "{label} {}={v} {}: f_com={} f_sen={:.6e} {}",
                    sw.parameter.as_str(),
                    m.label(),
                    solution.f_com,
                    solution.f_sen,
                    solution.stats.status.as_str()
                );
            }
            out.push(Record {
                sweep_param: label.to_string(),
                value: v,
                method: m,
                solution,
            });
        }
    }
    Ok(out)
}

/// Mean relative gains of `reference` over `baseline`, restricted to sweep
/// points where both admit the same number of users.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainSummary {
    pub reference: MethodTag,
    pub baseline: MethodTag,
    pub points: usize,
    pub mean_f_gain: f64,
    pub mean_f_sen_gain: f64,
}

impl GainSummary {
    pub fn csv_line(&self) -> String {
        format!(
            "summary,{},{}/{},{},,{},,,,,,,",
            self.points,
            self.reference.label(),
            self.baseline.label(),
            self.mean_f_gain,
            self.mean_f_sen_gain
        )
    }
}

fn rel_gain(a: f64, b: f64) -> Option<f64> {
    (b.abs() > 0.0).then(|| (a - b) / b.abs())
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

type PointKey = (String, u64);

fn by_point(records: &[Record]) -> BTreeMap<PointKey, Vec<&Record>> {
    let mut map: BTreeMap<PointKey, Vec<&Record>> = BTreeMap::new();
    for r in records {
        map.entry((r.sweep_param.clone(), r.value.to_bits()))
            .or_default()
            .push(r);
    }
    map
}

pub fn same_region_gains(records: &[Record], reference: MethodTag, baselines: &[MethodTag]) -> Vec<GainSummary> {
    let points = by_point(records);
    baselines
        .iter()
        .map(|&b| {
            let mut n = 0;
            let mut gf = Vec::new();
            let mut gs = Vec::new();
            for rs in points.values() {
                let find = |m| rs.iter().find(|r| r.method == m).map(|r| &r.solution);
                let (Some(a), Some(c)) = (find(reference), find(b)) else {
                    continue;
                };
                if a.f_com != c.f_com {
                    continue;
                }
                n += 1;
                gf.extend(rel_gain(a.f, c.f));
                gs.extend(rel_gain(a.f_sen, c.f_sen));
            }
            GainSummary {
                reference,
                baseline: b,
                points: n,
                mean_f_gain: mean(&gf),
                mean_f_sen_gain: mean(&gs),
            }
        })
        .collect()
}

/// Admitted counts per point and method, plus whether each method's count
/// is nonincreasing along the sweep axis.
pub fn regions_csv(records: &[Record], methods: &[MethodTag]) -> (String, Vec<(MethodTag, bool)>) {
    let points = by_point(records);
    let mut rows: Vec<(&str, f64, Vec<Option<usize>>)> = points
        .iter()
        .map(|((p, bits), rs)| {
            let counts = methods
                .iter()
                .map(|&m| rs.iter().find(|r| r.method == m).map(|r| r.solution.f_com))
                .collect();
            (p.as_str(), f64::from_bits(*bits), counts)
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
    let mut text = String::from("sweep_param,value");
    for m in methods {
        let _ = write!(text, ",{}", m.label());
    }
    text.push('\n');
    for (p, v, counts) in &rows {
        let _ = write!(text, "{p},{v}");
        for c in counts {
            match c {
                Some(c) => {
                    let _ = write!(text, ",{c}");
                }
                None => text.push(','),
            }
        }
        text.push('\n');
    }
    let flags: Vec<(MethodTag, bool)> = methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let ok = rows.windows(2).all(|w| {
                w[0].0 != w[1].0
                    || match (w[0].2[k], w[1].2[k]) {
                        (Some(a), Some(b)) => b <= a,
                        _ => true,
                    }
            });
            (m, ok)
        })
        .collect();
    text.push_str("nonincreasing,");
    for (_, ok) in &flags {
        let _ = write!(text, ",{}", u8::from(*ok));
    }
    text.push('\n');
    (text, flags)
}

pub fn csv_text(records: &[Record], summary: &[GainSummary], timing: bool) -> String {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_line(timing));
        text.push('\n');
    }
    for s in summary {
        text.push_str(&s.csv_line());
        text.push('\n');
    }
    text
}

/// `angle_deg,snr_sen` over [0, 180] degrees.
pub fn beampattern_csv(cfg: &Config, ch: &ChannelSet, sol: &Solution) -> Result<String> {
    let angles: Vec<f64> = (0..BEAMPATTERN_POINTS)
        .map(|k| 180.0 * k as f64 / (BEAMPATTERN_POINTS - 1) as f64)
        .collect();
    let snr = instance::beampattern(
        &sol.beamformer,
        &angles,
        ch.reflection,
        cfg.geometry.noise_sen_mw(),
        cfg.geometry.n_antennas,
    )?;
    let mut text = String::from("angle_deg,snr_sen\n");
    for (a, s) in angles.iter().zip(&snr) {
        let _ = writeln!(text, "{a},{s}");
    }
    Ok(text)
}

// ---------------------------------------------------------------- presets

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
    #[value(name = "III")]
    III,
    #[value(name = "IV")]
    IV,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
            Scenario::IV => "IV",
        }
    }
}

/// One sweep of a preset, labelled by the coordinates held fixed.
#[derive(Debug, Clone, Serialize)]
pub struct PresetRun {
    pub label: String,
    pub config: Config,
}

#[derive(Debug, Clone, Serialize)]
pub struct Preset {
    pub scenario: &'static str,
    pub description: &'static str,
    pub runs: Vec<PresetRun>,
}

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

fn sweep(parameter: SweepParam, values: Vec<f64>, methods: Vec<MethodTag>) -> Option<SweepSpec> {
    Some(SweepSpec {
        parameter,
        values,
        methods,
    })
}

/// Desk-scale preset definitions. `seed` fixes the channel draw.
pub fn preset(s: Scenario, seed: u64) -> Preset {
    let mut base = Config::default();
    base.geometry.seed = seed;
    match s {
        Scenario::I => {
            let mut runs = Vec::new();
            for n in [4usize, 6] {
                for q in [1u32, 2, 3] {
                    let mut c = base.clone();
                    c.geometry.n_antennas = n;
                    c.instance.phase_bits = q;
                    c.sweep = sweep(SweepParam::PTx, range(20.0, 42.0, 2.0), vec![MethodTag::Opt]);
                    runs.push(PresetRun {
                        label: format!("P_tx[N={n};Q={q}]"),
                        config: c,
                    });
                }
            }
            Preset {
                scenario: "I",
                description: "P_tx 20..42 dBm step 2 at N in {4,6}, Q in {1,2,3}; U=5, C=33, Delta=0",
                runs,
            }
        }
        Scenario::II => {
            let runs = [(30.0, 0.0), (60.0, 0.0), (60.0, 8.0)]
                .into_iter()
                .map(|(gamma, delta)| {
                    let mut c = base.clone();
                    c.instance.phase_bits = 2;
                    c.instance.snr_threshold = gamma;
                    c.geometry.angle_uncertainty_deg = delta;
                    c.sweep = sweep(SweepParam::PTx, range(14.0, 40.0, 2.0), vec![MethodTag::Opt]);
                    PresetRun {
                        label: format!("P_tx[Gamma={gamma};Delta={delta}]"),
                        config: c,
                    }
                })
                .collect();
            Preset {
                scenario: "II",
                description: "P_tx 14..40 dBm step 2 for (Gamma, Delta) in {(30,0),(60,0),(60,8)}; N=6, Q=2, U=5, C=33",
                runs,
            }
        }
        Scenario::III => {
            let mut c = base;
            c.geometry.tx_power_dbm = 32.0;
            c.instance.couple_admission = true;
            c.sweep = sweep(SweepParam::GammaTh, vec![0.0, 30.0, 60.0, 80.0], vec![MethodTag::Opt]);
            Preset {
                scenario: "III",
                description: "Gamma in {0,30,60,80} with coupled admission at P_tx=32 dBm; N=6, Q=3, U=5; one beampattern CSV per Gamma",
                runs: vec![PresetRun {
                    label: "Gamma_th".into(),
                    config: c,
                }],
            }
        }
        Scenario::IV => {
            let mut c = base;
            c.geometry.n_antennas = 8;
            c.instance.phase_bits = 2;
            c.sweep = sweep(
                SweepParam::DCommon,
                range(10.0, 70.0, 4.0),
                vec![MethodTag::Opt, MethodTag::Bl2, MethodTag::Bl3, MethodTag::Rand],
            );
            Preset {
                scenario: "IV",
                description: "common user distance 10..70 m step 4 running OPT, BL2, BL3, RAND; N=8, Q=2, U=5, P_tx=36 dBm",
                runs: vec![PresetRun {
                    label: "d_common".into(),
                    config: c,
                }],
            }
        }
    }
}

// ---------------------------------------------------------------- clap

#[derive(Debug, Parser)]
#[command(name = "isac-opt", version, about = "Exact ISAC admission control and discrete-phase beamforming")]
pub struct Cli {
    /// JSON config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the channel seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Write zero for all wall-clock fields so repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,
    /// Suppress progress on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SolverFlags {
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub symmetry_break: Option<bool>,
    /// RAND trials.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SweepFlags {
    #[arg(long)]
    pub param: Option<SweepParam>,
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<MethodTag>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance and write solution.json.
    Solve {
        #[arg(long, value_enum, default_value = "opt")]
        solver: MethodTag,
        #[arg(long)]
        export_mps: bool,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Run the config's sweep and write sweep.csv.
    Sweep {
        #[command(flatten)]
        sweep: SweepFlags,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Run a desk-scale preset.
    Scenario {
        #[arg(value_enum, ignore_case = true)]
        preset: Scenario,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Sweep several methods and append same-region mean gains.
    Compare {
        #[command(flatten)]
        sweep: SweepFlags,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Exhaustive search over all phase tuples.
    Oracle {
        #[arg(long)]
        guard: Option<f64>,
    },
    /// Write the MILP as free MPS.
    ExportMps {
        #[arg(long)]
        symmetry_break: Option<bool>,
    },
    /// Solve, then sample the sensing SNR over [0, 180] degrees.
    Beampattern {
        #[arg(long, value_enum, default_value = "opt")]
        solver: MethodTag,
        #[command(flatten)]
        flags: SolverFlags,
    },
}

impl SolverFlags {
    fn apply(&self, s: &mut SolverConfig) -> Result<()> {
        if let Some(g) = self.gap {
            s.gap = g;
        }
        if let Some(b) = self.symmetry_break {
            s.symmetry_break = b;
        }
        if let Some(t) = self.trials {
            s.trials = t;
        }
        Ok(())
    }
}

impl SweepFlags {
    fn apply(&self, cfg: &mut Config) -> Result<()> {
        if self.param.is_none() && self.values.is_none() && self.methods.is_none() {
            return Ok(());
        }
        let mut sw = cfg.sweep.clone().unwrap_or(SweepSpec {
            parameter: SweepParam::PTx,
            values: vec![cfg.geometry.tx_power_dbm],
            methods: default_methods(),
        });
        if let Some(p) = self.param {
            if cfg.sweep.as_ref().is_none_or(|s| s.parameter != p) && self.values.is_none() {
                return Err(Error::Config("--param needs --values".into()));
            }
            sw.parameter = p;
        }
        if let Some(v) = &self.values {
            sw.values = v.clone();
        }
        if let Some(m) = &self.methods {
            sw.methods = m.clone();
        }
        cfg.sweep = Some(sw);
        Ok(())
    }
}

// ---------------------------------------------------------------- commands

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: Config,
}

impl Ctx<'_> {
    fn timing(&self) -> bool {
        !self.cli.no_timing
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.cli.out)?;
        let path = self.cli.out.join(name);
        fs::write(&path, text)?;
        Ok(path)
    }

    fn strip(&self, mut sol: Solution) -> Solution {
        if !self.timing() {
            sol.stats.wall_time = Duration::ZERO;
        }
        sol
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.cli.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    method: &'static str,
    solution: &'a Solution,
}

fn solution_json(method: MethodTag, sol: &Solution) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&SolutionFile {
        method: method.label(),
        solution: sol,
    })
    .map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn limit_code(hit: bool) -> i32 {
    if hit {
        EXIT_SOLVER
    } else {
        0
    }
}

/// Executes a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.geometry.seed = s;
    }
    let mut ctx = Ctx { cli, cfg };
    match &cli.command {
        Command::Solve {
            solver,
            export_mps,
            flags,
        } => {
            flags.apply(&mut ctx.cfg.solver)?;
            ctx.cfg.validate()?;
            let inst = ctx.cfg.instance()?;
            if *export_mps {
                let model = reform::build_milp(&inst)?;
                ctx.write("model.mps", &mps::write_mps(&model))?;
            }
            let sol = ctx.strip(run_method(&inst, *solver, &ctx.cfg.solver, ctx.cfg.geometry.seed)?);
            ctx.write("solution.json", &solution_json(*solver, &sol)?)?;
            println!(
                "{} f={} f_com={} f_sen={} status={}",
                solver.label(),
                sol.f,
                sol.f_com,
                sol.f_sen,
                sol.stats.status.as_str()
            );
            Ok(limit_code(matches!(
                sol.stats.status,
                SolveStatus::NodeLimit | SolveStatus::TimeLimit
            )))
        }
        Command::Sweep { sweep, flags } => {
            flags.apply(&mut ctx.cfg.solver)?;
            sweep.apply(&mut ctx.cfg)?;
            ctx.cfg.validate()?;
            let param = ctx.sweep_label()?;
            let records = run_sweep(&ctx.cfg, &param, !cli.quiet)?;
            ctx.write("sweep.csv", &csv_text(&records, &[], ctx.timing()))?;
            Ok(limit_code(records.iter().any(Record::hit_limit)))
        }
        Command::Compare { sweep, flags } => {
            flags.apply(&mut ctx.cfg.solver)?;
            sweep.apply(&mut ctx.cfg)?;
            if ctx.cfg.sweep.is_none() {
                ctx.cfg.sweep = Some(SweepSpec {
                    parameter: SweepParam::PTx,
                    values: vec![ctx.cfg.geometry.tx_power_dbm],
                    methods: vec![MethodTag::Opt, MethodTag::Bl2, MethodTag::Bl3, MethodTag::Rand],
                });
            }
            ctx.cfg.validate()?;
            let methods = ctx.cfg.sweep.as_ref().map(|s| s.methods.clone()).unwrap_or_default();
            if methods.len() < 2 {
                return Err(Error::Config("compare needs at least two methods".into()));
            }
            let param = ctx.sweep_label()?;
            let records = run_sweep(&ctx.cfg, &param, !cli.quiet)?;
            let summary = same_region_gains(&records, methods[0], &methods[1..]);
            ctx.write("compare.csv", &csv_text(&records, &summary, ctx.timing()))?;
            let (regions, flags) = regions_csv(&records, &methods);
            ctx.write("regions.csv", &regions)?;
            ctx.report(&summary, &flags);
            Ok(limit_code(records.iter().any(Record::hit_limit)))
        }
        Command::Scenario { preset: s, flags } => {
            let p = preset(*s, ctx.cfg.geometry.seed);
            ctx.run_preset(p, flags)
        }
        Command::Oracle { guard } => {
            if let Some(g) = guard {
                ctx.cfg.solver.oracle_guard = *g;
            }
            ctx.cfg.validate()?;
            let inst = ctx.cfg.instance()?;
            let sol = ctx.strip(run_method(&inst, MethodTag::Oracle, &ctx.cfg.solver, ctx.cfg.geometry.seed)?);
            ctx.write("oracle.json", &solution_json(MethodTag::Oracle, &sol)?)?;
            println!("ES f={} f_com={} f_sen={}", sol.f, sol.f_com, sol.f_sen);
            Ok(0)
        }
        Command::ExportMps { symmetry_break } => {
            ctx.cfg.validate()?;
            let inst = ctx.cfg.instance()?;
            let mut model = reform::build_milp(&inst)?;
            if symmetry_break.unwrap_or(false) {
                model = reform::apply_symmetry_breaking(model)?;
            }
            let path = ctx.write("model.mps", &mps::write_mps(&model))?;
            println!("{} ({} columns, {} rows)", path.display(), model.n_vars(), model.n_rows());
            Ok(0)
        }
        Command::Beampattern { solver, flags } => {
            flags.apply(&mut ctx.cfg.solver)?;
            ctx.cfg.validate()?;
            let ch = ctx.cfg.channels()?;
            let inst = ctx.cfg.instance_from(&ch)?;
            let sol = ctx.strip(run_method(&inst, *solver, &ctx.cfg.solver, ctx.cfg.geometry.seed)?);
            ctx.write("solution.json", &solution_json(*solver, &sol)?)?;
            ctx.write("beampattern.csv", &beampattern_csv(&ctx.cfg, &ch, &sol)?)?;
            Ok(limit_code(matches!(
                sol.stats.status,
                SolveStatus::NodeLimit | SolveStatus::TimeLimit
            )))
        }
    }
}

impl Ctx<'_> {
    fn sweep_label(&self) -> Result<String> {
        self.cfg
            .sweep
            .as_ref()
            .map(|s| s.parameter.as_str().to_string())
            .ok_or_else(|| Error::Config("config has no sweep section; pass --param and --values".into()))
    }

    fn report(&self, summary: &[GainSummary], flags: &[(MethodTag, bool)]) {
        for s in summary {
            self.log(format!(
                "{} vs {}: {} same-region points, mean f gain {:.4}, mean f_sen gain {:.4}",
                s.reference.label(),
                s.baseline.label(),
                s.points,
                s.mean_f_gain,
                s.mean_f_sen_gain
            ));
        }
        for (m, ok) in flags {
            if !ok {
                eprintln!("warning: {} admitted count increases along the sweep", m.label());
            }
        }
    }

    fn run_preset(&self, mut p: Preset, flags: &SolverFlags) -> Result<i32> {
        for r in &mut p.runs {
            flags.apply(&mut r.config.solver)?;
            r.config.validate()?;
        }
        let name = p.scenario;
        let mut meta = serde_json::to_string_pretty(&p).map_err(|e| Error::InvalidInput(e.to_string()))?;
        meta.push('\n');
        self.write(&format!("scenario_{name}_preset.json"), &meta)?;
        let mut records = Vec::new();
        for r in &p.runs {
            records.extend(run_sweep(&r.config, &r.label, !self.cli.quiet)?);
        }
        let mut summary = Vec::new();
        match name {
            "III" => {
                let cfg = &p.runs[0].config;
                for r in &records {
                    let at = cfg.at(SweepParam::GammaTh, r.value)?;
                    let ch = at.channels()?;
                    self.write(
                        &format!("beampattern_gamma_{}.csv", r.value),
                        &beampattern_csv(&at, &ch, &r.solution)?,
                    )?;
                }
            }
            "IV" => {
                let methods = [MethodTag::Opt, MethodTag::Bl2, MethodTag::Bl3, MethodTag::Rand];
                summary = same_region_gains(&records, MethodTag::Opt, &methods[1..]);
                let (regions, flags) = regions_csv(&records, &methods);
                self.write("scenario_IV_regions.csv", &regions)?;
                self.report(&summary, &flags);
            }
            _ => {}
        }
        for r in &mut records {
            r.solution = self.strip(r.solution.clone());
        }
        self.write(&format!("scenario_{name}.csv"), &csv_text(&records, &summary, self.timing()))?;
        Ok(limit_code(records.iter().any(Record::hit_limit)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_small() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(c.geometry.n_antennas, 6);
        assert_eq!(c.instance.phase_bits, 3);
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let err = parse_config("{\n  \"geometry\": {\"n_antenas\": 4}\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n_antenas") && msg.contains("line 2"), "{msg}");
        assert_eq!(exit_code(&err), EXIT_CONFIG);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = parse_config(r#"{"instance": {"phase_bits": 2}, "sweep": {"parameter": "P_tx", "values": [20, 30]}}"#)
            .unwrap();
        assert_eq!(c.instance.phase_bits, 2);
        assert_eq!(c.geometry.n_users, 5);
        assert_eq!(c.sweep.unwrap().methods, vec![MethodTag::Opt]);
    }

    #[test]
    fn empty_sweep_rejected() {
        let e = parse_config(r#"{"sweep": {"parameter": "Q", "values": []}}"#).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn oracle_sweep_respects_guard() {
        let text = r#"{"solver": {"oracle_guard": 100}, "sweep": {"parameter": "N", "values": [2, 4], "methods": ["oracle"]}}"#;
        let e = parse_config(text).unwrap_err();
        assert!(e.to_string().contains("oracle"), "{e}");
    }

    #[test]
    fn threshold_in_db() {
        let c = InstanceConfig {
            snr_threshold: 20.0,
            snr_threshold_db: true,
            ..InstanceConfig::default()
        };
        assert!((c.params().snr_threshold - 100.0).abs() < 1e-9);
    }

    #[test]
    fn sweep_coordinates_apply() {
        let c = Config::default();
        assert_eq!(c.at(SweepParam::N, 3.0).unwrap().geometry.n_antennas, 3);
        assert!(c.at(SweepParam::Q, 1.5).is_err());
        let d = c.at(SweepParam::DCommon, 25.0).unwrap();
        assert_eq!(d.geometry.user_distances_m, vec![25.0; 5]);
    }

    #[test]
    fn self_comparison_has_zero_gain() {
        let mut c = Config::default();
        c.geometry.n_antennas = 3;
        c.instance.phase_bits = 2;
        c.sweep = sweep(SweepParam::PTx, vec![30.0, 36.0], vec![MethodTag::Oracle]);
        let rec = run_sweep(&c, "P_tx", false).unwrap();
        let mut doubled = rec.clone();
        for r in &mut doubled {
            r.method = MethodTag::Rand;
        }
        doubled.extend(rec);
        let g = same_region_gains(&doubled, MethodTag::Oracle, &[MethodTag::Rand]);
        assert_eq!(g[0].points, 2);
        assert_eq!(g[0].mean_f_gain, 0.0);
    }

    #[test]
    fn csv_line_has_fixed_columns() {
        let inst = Config::default().at(SweepParam::N, 2.0).unwrap().instance().unwrap();
        let sol = inst.evaluate_phases(&[0, 1]);
        let r = Record {
            sweep_param: "N".into(),
            value: 2.0,
            method: MethodTag::Rand,
            solution: sol,
        };
        let cols = CSV_HEADER.split(',').count();
        assert_eq!(r.csv_line(false).split(',').count(), cols);
        let g = GainSummary {
            reference: MethodTag::Opt,
            baseline: MethodTag::Rand,
            points: 0,
            mean_f_gain: f64::NAN,
            mean_f_sen_gain: f64::NAN,
        };
        assert_eq!(g.csv_line().split(',').count(), cols);
    }

    #[test]
    fn presets_are_valid() {
        for s in [Scenario::I, Scenario::II, Scenario::III, Scenario::IV] {
            for r in preset(s, 1).runs {
                r.config.validate().unwrap();
            }
        }
    }
}
