//! On-disk experiment configuration (flat JSON).

use std::path::Path;

use anyhow::{bail, Context, Result};
use heston_hjb::{
    build_trapezoid, structured_triangulation, validate, ControlInterval, CoordinateMap, HestonParams, Mesh, Payoff,
    PayoffKind, Problem, SolverConfig, TruncatedDomain,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    ValueSurface,
    ControlMap,
    LinearCompare,
    IntervalSweep,
    DeltaMap,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ValueSurface => "value_surface",
            Experiment::ControlMap => "control_map",
            Experiment::LinearCompare => "linear_compare",
            Experiment::IntervalSweep => "interval_sweep",
            Experiment::DeltaMap => "delta_map",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffName {
    Call,
    Butterfly,
    Straddle,
}

impl From<PayoffName> for PayoffKind {
    fn from(p: PayoffName) -> Self {
        match p {
            PayoffName::Call => PayoffKind::Call,
            PayoffName::Butterfly => PayoffKind::Butterfly,
            PayoffName::Straddle => PayoffKind::Straddle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: PayoffName,
    #[serde(rename = "K")]
    pub strike: f64,
    /// Butterfly half-width.
    #[serde(default)]
    pub a: f64,
}

fn default_points() -> usize {
    2
}
fn default_compare_time() -> f64 {
    0.39
}
fn default_center() -> f64 {
    -1.25
}
fn default_diameters() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
}
fn default_n_s() -> usize {
    101
}
fn default_n_v() -> usize {
    61
}
fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub r: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub xi: f64,
    pub rho: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub v_max: f64,
    pub payoff: PayoffConfig,
    pub lambda_min: f64,
    pub lambda_max: f64,
    #[serde(default = "default_points")]
    pub n_points: usize,
    pub n_y: usize,
    pub n_z: usize,
    #[serde(default)]
    pub refinements: u32,
    pub steps: usize,
    pub experiment: Experiment,
    /// `(S, v)` locations reported by the sweep.
    #[serde(default)]
    pub query_points: Vec<[f64; 2]>,
    /// Control of the linear comparison solve; defaults to `lambda_min`.
    #[serde(default)]
    pub lambda_fixed: Option<f64>,
    #[serde(default = "default_compare_time")]
    pub compare_time: f64,
    #[serde(default = "default_center")]
    pub sweep_center: f64,
    #[serde(default = "default_diameters")]
    pub sweep_diameters: Vec<f64>,
    #[serde(default = "default_n_s")]
    pub sample_n_s: usize,
    #[serde(default = "default_n_v")]
    pub sample_n_v: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Butterfly case study on `L = [-2.4, -1.6]`.
    pub fn case_study(experiment: Experiment) -> Self {
        let p = HestonParams::case_study();
        let d = TruncatedDomain::case_study();
        ExperimentConfig {
            r: p.r,
            kappa: p.kappa,
            gamma: p.gamma,
            xi: p.xi,
            rho: p.rho,
            maturity: p.maturity,
            s_min: d.s_min,
            s_max: d.s_max,
            v_max: d.v_max,
            payoff: PayoffConfig {
                kind: PayoffName::Butterfly,
                strike: 50.0,
                a: 20.0,
            },
            lambda_min: -2.4,
            lambda_max: -1.6,
            n_points: 2,
            n_y: 128,
            n_z: 96,
            refinements: 0,
            steps: 100,
            experiment,
            query_points: vec![[53.12, 0.75], [50.0, 0.09], [2.11, 2.06]],
            lambda_fixed: None,
            compare_time: default_compare_time(),
            sweep_center: default_center(),
            sweep_diameters: default_diameters(),
            sample_n_s: default_n_s(),
            sample_n_v: default_n_v(),
            seed: default_seed(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn params(&self) -> HestonParams {
        HestonParams {
            r: self.r,
            kappa: self.kappa,
            gamma: self.gamma,
            xi: self.xi,
            rho: self.rho,
            maturity: self.maturity,
        }
    }

    pub fn domain(&self) -> TruncatedDomain {
        TruncatedDomain {
            s_min: self.s_min,
            s_max: self.s_max,
            v_max: self.v_max,
        }
    }

    pub fn control(&self) -> ControlInterval {
        ControlInterval::new(self.lambda_min, self.lambda_max).with_points(self.n_points)
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(validate(self.params(), self.domain(), self.control())?)
    }

    pub fn payoff(&self) -> Result<Payoff> {
        Ok(Payoff::new(self.payoff.kind.into(), self.payoff.strike, self.payoff.a)?)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig::with_steps(self.steps)
    }

    pub fn coordinate_map(&self) -> Result<CoordinateMap> {
        Ok(CoordinateMap::from_params(&self.params())?)
    }

    /// Structured `n_y × n_z` mesh refined `refinements` times.
    pub fn mesh(&self) -> Result<Mesh> {
        let trap = build_trapezoid(&self.domain(), &self.coordinate_map()?)?;
        let base = structured_triangulation(&trap, self.n_y, self.n_z)?;
        Ok(base.refine_times(self.refinements)?)
    }

    pub fn check(&self) -> Result<()> {
        self.problem()?;
        self.payoff()?;
        if self.steps == 0 || self.n_y == 0 || self.n_z == 0 {
            bail!("steps, n_y and n_z must be positive");
        }
        if self.sample_n_s < 2 || self.sample_n_v < 2 {
            bail!("sample grid needs at least two points per axis");
        }
        if !(0.0..=self.maturity).contains(&self.compare_time) {
            bail!("compare_time must lie in [0, T]");
        }
        if let Some(l) = self.lambda_fixed {
            if !self.control().contains(l) {
                bail!("lambda_fixed must lie in [lambda_min, lambda_max]");
            }
        }
        if self.sweep_diameters.iter().any(|&d| !(d >= 0.0)) || self.sweep_diameters.windows(2).any(|w| w[1] <= w[0]) {
            bail!("sweep_diameters must be nonnegative and increasing");
        }
        for q in &self.query_points {
            if !self.domain().contains(q[0], q[1]) {
                bail!("query point ({}, {}) lies outside the domain", q[0], q[1]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        for e in [Experiment::ValueSurface, Experiment::IntervalSweep] {
            let cfg = ExperimentConfig::case_study(e);
            let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let text = r#"{"r":0.03,"kappa":7,"gamma":0.3,"xi":0.7,"rho":0.5,"T":0.5,
            "s_min":1,"s_max":100,"v_max":3,"payoff":{"kind":"call","K":50},
            "lambda_min":0,"lambda_max":0,"n_y":16,"n_z":12,"steps":10,
            "experiment":"value_surface"}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.check().unwrap();
        assert_eq!(cfg.n_points, 2);
        assert_eq!(cfg.sample_n_s, 101);
        assert_eq!(cfg.sweep_diameters.len(), 6);
        assert_eq!(cfg.payoff().unwrap().kind(), PayoffKind::Call);
        assert!(cfg.query_points.is_empty());
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut cfg = ExperimentConfig::case_study(Experiment::ValueSurface);
        cfg.lambda_min = -1.0;
        cfg.lambda_max = -2.0;
        assert!(cfg.check().is_err());
        let mut cfg = ExperimentConfig::case_study(Experiment::ValueSurface);
        cfg.payoff.a = 60.0;
        assert!(cfg.check().is_err());
        let mut cfg = ExperimentConfig::case_study(Experiment::ValueSurface);
        cfg.query_points.push([200.0, 0.1]);
        assert!(cfg.check().is_err());
        let mut cfg = ExperimentConfig::case_study(Experiment::ValueSurface);
        cfg.sweep_diameters = vec![1.0, 0.5];
        assert!(cfg.check().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"r": 0.03, "bogus": 1}"#).is_err());
    }
}
