//! Sectioned `key = value` run files (TOML).
//!
//! ```toml
//! [scenario]
//! kind = "cat"          # cat | measurement_chain | leggett_garg | arrow
//! mode = "grw"          # grw | wpr | unitary
//!
//! [state]
//! c1_sq = 0.7
//!
//! [grw]
//! tau = 1000.0
//! a = 2.0
//! n_eff = 5000.0
//! ```
//!
//! Every omitted key gets a default derived from the ones present; the fully
//! resolved file is written next to the run outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arrow::ArrowConfig;
use crate::collapse::GrwParams;
use crate::error::{Error, Result};
use crate::propagator::{Method, Potential, PropagatorConfig};
use crate::qstate::GridSpec;
use crate::scenarios::{LgConfig, Mode, ScenarioConfig, ScenarioKind, StateRecipe};

/// Mean hit gaps covered by the default horizon.
pub const DEFAULT_HORIZON_GAPS: f64 = 8.0;
/// Default steps per mean hit gap.
pub const DEFAULT_STEPS_PER_GAP: f64 = 100.0;
pub const DEFAULT_STRIDE: usize = 50;
pub const DEFAULT_LG_TRAJECTORIES: usize = 100_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub scenario: ScenarioSection,
    pub state: Option<StateSection>,
    pub grid: Option<GridSection>,
    pub grw: Option<GrwSection>,
    pub propagator: Option<PropagatorSection>,
    pub run: Option<RunSection>,
    pub potential: Option<Potential>,
    pub sweep: Option<SweepSection>,
    pub lg: Option<LgSection>,
    pub arrow: Option<ArrowSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    #[default]
    Cat,
    MeasurementChain,
    LeggettGarg,
    Arrow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: Option<String>,
    #[serde(default)]
    pub kind: FileKind,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub c1_sq: Option<f64>,
    pub c2_sq: Option<f64>,
    pub phase: Option<f64>,
    pub sigma: Option<f64>,
    pub separation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrwSection {
    pub tau: Option<f64>,
    pub a: Option<f64>,
    pub n_eff: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorSection {
    pub method: Option<Method>,
    pub dt: Option<f64>,
    pub steps_per_event_check: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: Option<f64>,
    pub split: Option<f64>,
    pub measurement_time: Option<f64>,
    pub trajectories: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Survival-time sweep over `n_eff` at fixed tau.
    pub n_eff: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LgSection {
    pub omega: Option<f64>,
    pub times: Option<[f64; 3]>,
    /// Equal spacing from t = 0, used when `times` is absent.
    pub spacing: Option<f64>,
    pub trajectories: Option<usize>,
    /// Expected hits per spacing, one run each.
    pub hits_per_interval: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrowSection {
    pub n_sites: Option<usize>,
    pub marker_fraction: Option<f64>,
    pub flip_rate: Option<f64>,
    pub horizon: Option<usize>,
    pub trials: Option<usize>,
    pub sample_every: Option<usize>,
}

/// Fully validated run description.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadedConfig {
    Scenario(ScenarioRun),
    LeggettGarg(LgRun),
    Arrow(ArrowConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub trajectories: Option<usize>,
    pub sweep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LgRun {
    /// One entry per collapse strength; the first is usually unitary.
    pub ladder: Vec<LgConfig>,
    pub hits_per_interval: Vec<f64>,
    pub trajectories: usize,
}

fn missing(field: &str) -> Error {
    Error::Validation(format!("missing required field `{field}`"))
}

/// Power-of-two grid centred on 0 holding `reach` plus seam margins with at
/// least four points per `min(σ, a)`.
fn default_grid(reach: f64, sigma: f64, a: f64) -> Result<GridSpec> {
    let half = 1.25 * (reach + 5.0 * sigma + 5.0 * a);
    let dx = 0.25 * sigma.min(a);
    let n = ((2.0 * half / dx).ceil() as usize).next_power_of_two().max(64);
    GridSpec::new(-half, half, n)
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn resolve(&self) -> Result<LoadedConfig> {
        match self.scenario.kind {
            FileKind::Cat | FileKind::MeasurementChain => self.resolve_scenario().map(LoadedConfig::Scenario),
            FileKind::LeggettGarg => self.resolve_lg().map(LoadedConfig::LeggettGarg),
            FileKind::Arrow => self.resolve_arrow().map(LoadedConfig::Arrow),
        }
    }

    fn resolve_scenario(&self) -> Result<ScenarioRun> {
        let kind = match self.scenario.kind {
            FileKind::MeasurementChain => ScenarioKind::MeasurementChain,
            _ => ScenarioKind::Cat,
        };
        let mode = self.scenario.mode.unwrap_or_default();
        let state = self.state.clone().unwrap_or_default();
        let c1_sq = match (state.c1_sq, state.c2_sq) {
            (Some(c1), Some(c2)) => {
                if (c1 + c2 - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation(format!(
                        "normalization: |c1|^2 + |c2|^2 = {} differs from 1",
                        c1 + c2
                    )));
                }
                c1
            }
            (Some(c1), None) => c1,
            (None, Some(c2)) => 1.0 - c2,
            (None, None) => return Err(missing("state.c1_sq")),
        };
        let grw = self.grw.clone().unwrap_or_default();
        let tau = grw.tau.ok_or_else(|| missing("grw.tau"))?;
        let a = grw.a.ok_or_else(|| missing("grw.a"))?;
        let params = GrwParams {
            tau,
            a,
            n_eff: grw.n_eff.unwrap_or(1.0),
        };
        params.validate()?;
        let sigma = state.sigma.unwrap_or(0.5 * a);
        let separation = state.separation.unwrap_or(10.0 * (sigma + a));
        let reach = match kind {
            ScenarioKind::Cat => 0.5 * separation,
            ScenarioKind::MeasurementChain => separation,
        };
        let grid = match self.grid {
            Some(g) => GridSpec::new(g.x_min, g.x_max, g.n_points)?,
            None => default_grid(reach, sigma, a)?,
        };
        let run = self.run.clone().unwrap_or_default();
        let gap = params.mean_gap();
        let horizon = match run.horizon {
            Some(h) => h,
            None if gap.is_finite() => DEFAULT_HORIZON_GAPS * gap,
            None => return Err(missing("run.horizon (no collapse rate to derive it from)")),
        };
        let prop = self.propagator.clone().unwrap_or_default();
        let dt = match prop.dt {
            Some(dt) => dt,
            None if gap.is_finite() && mode == Mode::Grw => gap / DEFAULT_STEPS_PER_GAP,
            None => horizon / (DEFAULT_HORIZON_GAPS * DEFAULT_STEPS_PER_GAP),
        };
        let config = ScenarioConfig {
            name: self.scenario.name.clone().unwrap_or_else(|| match kind {
                ScenarioKind::Cat => "cat".into(),
                ScenarioKind::MeasurementChain => "measurement_chain".into(),
            }),
            kind,
            mode,
            grid,
            state: StateRecipe {
                c1_sq,
                phase: state.phase.unwrap_or(0.0),
                sigma,
                separation,
            },
            grw: params,
            propagator: PropagatorConfig {
                method: prop.method.unwrap_or_default(),
                dt,
                steps_per_event_check: prop.steps_per_event_check.unwrap_or(DEFAULT_STRIDE),
            },
            potential: self.potential.clone().unwrap_or_else(Potential::free),
            horizon,
            split: run.split.unwrap_or(0.5 * (grid.x_min() + grid.x_max())),
            measurement_time: run.measurement_time.unwrap_or(0.0),
        };
        config.validate()?;
        let sweep = self.sweep.clone().unwrap_or_default().n_eff;
        for &n in &sweep {
            config.with_n_eff(n).validate()?;
        }
        Ok(ScenarioRun {
            config,
            trajectories: run.trajectories,
            sweep,
        })
    }

    fn resolve_lg(&self) -> Result<LgRun> {
        let lg = self.lg.clone().unwrap_or_default();
        let omega = lg.omega.unwrap_or(1.0);
        let times = match (lg.times, lg.spacing) {
            (Some(t), _) => t,
            (None, Some(s)) => [0.0, s, 2.0 * s],
            (None, None) => {
                let s = std::f64::consts::FRAC_PI_3 / omega;
                [0.0, s, 2.0 * s]
            }
        };
        let spacing = times[1] - times[0];
        let a = self.grw.as_ref().and_then(|g| g.a).unwrap_or(1.0);
        let ladder_hits = match (&lg.hits_per_interval, &self.grw) {
            (Some(h), _) => h.clone(),
            (None, Some(g)) => {
                let p = GrwParams {
                    tau: g.tau.ok_or_else(|| missing("grw.tau"))?,
                    a,
                    n_eff: g.n_eff.unwrap_or(1.0),
                };
                vec![p.rate() * spacing]
            }
            (None, None) => vec![0.0],
        };
        let mut ladder = Vec::with_capacity(ladder_hits.len());
        for &h in &ladder_hits {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::Validation(format!("hits_per_interval {h} must be finite and nonnegative")));
            }
            let collapse = if h > 0.0 {
                Some(GrwParams::new(spacing / h, a, 1.0)?)
            } else {
                None
            };
            let mut c = LgConfig::new(omega, times, collapse)?;
            if let Some(name) = &self.scenario.name {
                c.name = name.clone();
            }
            ladder.push(c);
        }
        Ok(LgRun {
            ladder,
            hits_per_interval: ladder_hits,
            trajectories: lg.trajectories.unwrap_or(DEFAULT_LG_TRAJECTORIES),
        })
    }

    fn resolve_arrow(&self) -> Result<ArrowConfig> {
        let s = self.arrow.clone().unwrap_or_default();
        let base = ArrowConfig::new(
            s.n_sites.unwrap_or(10_000),
            s.marker_fraction.unwrap_or(0.1),
            s.flip_rate.unwrap_or(1e-2),
            s.trials.unwrap_or(100),
        );
        let horizon = s.horizon.unwrap_or(base.horizon);
        let c = ArrowConfig {
            horizon,
            sample_every: s.sample_every.unwrap_or((horizon / 100).max(1)),
            ..base
        };
        c.validate()?;
        Ok(c)
    }
}

impl LoadedConfig {
    /// Resolved form written back next to the outputs.
    pub fn echo(&self) -> Result<String> {
        let file = match self {
            LoadedConfig::Scenario(run) => {
                let c = &run.config;
                ConfigFile {
                    scenario: ScenarioSection {
                        name: Some(c.name.clone()),
                        kind: match c.kind {
                            ScenarioKind::Cat => FileKind::Cat,
                            ScenarioKind::MeasurementChain => FileKind::MeasurementChain,
                        },
                        mode: Some(c.mode),
                    },
                    state: Some(StateSection {
                        c1_sq: Some(c.state.c1_sq),
                        c2_sq: None,
                        phase: Some(c.state.phase),
                        sigma: Some(c.state.sigma),
                        separation: Some(c.state.separation),
                    }),
                    grid: Some(GridSection {
                        x_min: c.grid.x_min(),
                        x_max: c.grid.x_max(),
                        n_points: c.grid.n_points(),
                    }),
                    grw: Some(GrwSection {
                        tau: Some(c.grw.tau),
                        a: Some(c.grw.a),
                        n_eff: Some(c.grw.n_eff),
                    }),
                    propagator: Some(PropagatorSection {
                        method: Some(c.propagator.method),
                        dt: Some(c.propagator.dt),
                        steps_per_event_check: Some(c.propagator.steps_per_event_check),
                    }),
                    run: Some(RunSection {
                        horizon: Some(c.horizon),
                        split: Some(c.split),
                        measurement_time: Some(c.measurement_time),
                        trajectories: run.trajectories,
                    }),
                    potential: Some(c.potential.clone()),
                    sweep: (!run.sweep.is_empty()).then(|| SweepSection { n_eff: run.sweep.clone() }),
                    ..Default::default()
                }
            }
            LoadedConfig::LeggettGarg(run) => {
                let first = &run.ladder[0];
                ConfigFile {
                    scenario: ScenarioSection {
                        name: Some(first.name.clone()),
                        kind: FileKind::LeggettGarg,
                        mode: None,
                    },
                    grw: Some(GrwSection {
                        tau: None,
                        a: run.ladder.iter().find_map(|c| c.collapse.map(|p| p.a)),
                        n_eff: None,
                    }),
                    lg: Some(LgSection {
                        omega: Some(first.omega),
                        times: Some(first.times),
                        spacing: None,
                        trajectories: Some(run.trajectories),
                        hits_per_interval: Some(run.hits_per_interval.clone()),
                    }),
                    ..Default::default()
                }
            }
            LoadedConfig::Arrow(c) => ConfigFile {
                scenario: ScenarioSection {
                    name: None,
                    kind: FileKind::Arrow,
                    mode: None,
                },
                arrow: Some(ArrowSection {
                    n_sites: Some(c.n_sites),
                    marker_fraction: Some(c.marker_fraction),
                    flip_rate: Some(c.flip_rate),
                    horizon: Some(c.horizon),
                    trials: Some(c.trials),
                    sample_every: Some(c.sample_every),
                }),
                ..Default::default()
            },
        };
        toml::to_string(&file).map_err(|e| Error::Validation(format!("cannot serialize config: {e}")))
    }
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    ConfigFile::parse(text, "<memory>")?.resolve()
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ConfigFile::parse(&text, &path.display().to_string())?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> ScenarioRun {
        match parse_config(text).unwrap() {
            LoadedConfig::Scenario(s) => s,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_cat_gets_defaults() {
        let s = scenario("[state]\nc1_sq = 0.7\n[grw]\ntau = 1.0\na = 2.0\n");
        let c = &s.config;
        assert_eq!(c.kind, ScenarioKind::Cat);
        assert_eq!(c.mode, Mode::Grw);
        assert_eq!(c.state.sigma, 1.0);
        assert_eq!(c.state.separation, 30.0);
        assert_eq!(c.grw.n_eff, 1.0);
        assert_eq!(c.horizon, 8.0);
        assert_eq!(c.propagator.dt, 0.01);
        assert!(c.grid.dx() <= 0.25);
        assert_eq!(c.split, 0.0);
        c.validate().unwrap();
    }

    #[test]
    fn overweight_coefficient_is_rejected() {
        let e = parse_config("[state]\nc1_sq = 1.2\n[grw]\ntau = 1.0\na = 2.0\n").unwrap_err();
        assert!(matches!(e, Error::Validation(ref m) if m.contains("normalization")), "{e}");
        let e = parse_config("[state]\nc1_sq = 0.5\nc2_sq = 0.6\n[grw]\ntau = 1.0\na = 2.0\n").unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn unresolved_width_is_rejected() {
        let text = "[state]\nc1_sq = 0.5\nsigma = 1.0\nseparation = 20.0\n[grw]\ntau = 1.0\na = 0.5\n[grid]\nx_min = -64.0\nx_max = 64.0\nn_points = 256\n";
        assert!(matches!(parse_config(text), Err(Error::UnresolvedWidth { .. })));
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = ConfigFile::parse("[state]\nc1_sq = \n", "bad.toml").unwrap_err();
        match e {
            Error::Parse { path, message } => {
                assert_eq!(path, "bad.toml");
                assert!(message.contains("line 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let e = ConfigFile::parse("[state]\nc1 = 0.5\n", "typo.toml").unwrap_err();
        assert!(matches!(e, Error::Parse { ref message, .. } if message.contains("c1")), "{e}");
    }

    #[test]
    fn missing_required_fields() {
        assert!(parse_config("[grw]\ntau = 1.0\na = 2.0\n").is_err());
        assert!(parse_config("[state]\nc1_sq = 0.5\n[grw]\na = 2.0\n").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = "[scenario]\nkind = \"measurement_chain\"\n[state]\nc1_sq = 0.3\n[grw]\ntau = 1.0\na = 2.0\n[sweep]\nn_eff = [1.0, 10.0]\n[potential]\nkind = \"harmonic\"\nomega = 0.01\n";
        let loaded = parse_config(text).unwrap();
        let echoed = loaded.echo().unwrap();
        assert_eq!(parse_config(&echoed).unwrap(), loaded);
    }

    #[test]
    fn leggett_garg_ladder() {
        let text = "[scenario]\nkind = \"leggett_garg\"\n[lg]\nomega = 2.0\ntrajectories = 1000\nhits_per_interval = [0.0, 2.0, 10.0]\n";
        let LoadedConfig::LeggettGarg(run) = parse_config(text).unwrap() else {
            panic!()
        };
        assert_eq!(run.ladder.len(), 3);
        assert!(run.ladder[0].collapse.is_none());
        let spacing = std::f64::consts::FRAC_PI_3 / 2.0;
        assert!((run.ladder[2].collapse.unwrap().rate() * spacing - 10.0).abs() < 1e-12);
        let echoed = LoadedConfig::LeggettGarg(run).echo().unwrap();
        assert!(matches!(parse_config(&echoed).unwrap(), LoadedConfig::LeggettGarg(_)));
    }

    #[test]
    fn arrow_defaults_and_horizon_check() {
        let LoadedConfig::Arrow(c) = parse_config("[scenario]\nkind = \"arrow\"\n").unwrap() else {
            panic!()
        };
        assert_eq!((c.n_sites, c.horizon, c.trials), (10_000, 5_000, 100));
        let e = parse_config("[scenario]\nkind = \"arrow\"\n[arrow]\nn_sites = 10\nhorizon = 20\n").unwrap_err();
        assert!(matches!(e, Error::InvalidHorizon { .. }));
    }
}
