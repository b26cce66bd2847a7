//! Flat `key = value` configuration files for the scan and the simulator.
//!
//! One entry per line, `#` starts a comment, lists are comma separated and
//! optional keys are simply left out.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::params::ModelParams;

/// Parsed key-value pairs, consumed key by key so leftovers can be reported.
#[derive(Debug, Clone, Default)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ExperimentError::Config {
                line: n + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(ExperimentError::Config { line: n + 1, message: format!("duplicate key {key}") });
            }
        }
        Ok(Self { entries })
    }

    fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ExperimentError> {
        self.take_raw(key)
            .map(|v| v.parse().map_err(|_| ExperimentError::InvalidValue { key: key.into(), value: v }))
            .transpose()
    }

    pub fn required<T: FromStr>(&mut self, key: &str) -> Result<T, ExperimentError> {
        self.optional(key)?.ok_or_else(|| ExperimentError::MissingKey(key.into()))
    }

    pub fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, ExperimentError> {
        let Some(raw) = self.take_raw(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| ExperimentError::InvalidValue { key: key.into(), value: s.into() }))
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Errors on the first key nobody asked for.
    pub fn finish(self) -> Result<(), ExperimentError> {
        match self.entries.into_keys().next() {
            Some(key) => Err(ExperimentError::UnknownKey(key)),
            None => Ok(()),
        }
    }
}

/// Accumulates `key = value` lines in a fixed order.
#[derive(Debug, Default)]
struct FlatWriter(String);

impl FlatWriter {
    fn put(&mut self, key: &str, value: impl Display) {
        self.0.push_str(&format!("{key} = {value}\n"));
    }

    fn put_opt(&mut self, key: &str, value: Option<impl Display>) {
        if let Some(v) = value {
            self.put(key, v);
        }
    }

    fn put_list<T: Display>(&mut self, key: &str, values: &[T]) {
        let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        self.put(key, joined.join(","));
    }
}

/// Quantities a scan computes besides the raw fluctuation records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// Per-point mean and standard error of the fluctuation field.
    Fluctuation,
    /// Spatial covariance of the field at the last time.
    Covariance,
    /// Site variance of the occupancies at the last time.
    Increments,
    /// Scaling-theory coefficients next to the measured ones.
    Coefficients,
}

impl Observable {
    pub const ALL: [Observable; 4] = [Self::Fluctuation, Self::Covariance, Self::Increments, Self::Coefficients];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fluctuation => "fluctuation",
            Self::Covariance => "covariance",
            Self::Increments => "increments",
            Self::Coefficients => "coefficients",
        }
    }
}

impl Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|o| o.name() == s).ok_or_else(|| format!("unknown observable {s}"))
    }
}

/// Configuration of a weakly asymmetric fluctuation scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub max_occupancy: usize,
    pub line_capacity: usize,
    pub stay_probability: f64,
    pub density: f64,
    pub epsilons: Vec<f64>,
    /// Largest macroscopic time; `eps^2 T` may not exceed it.
    pub horizon: f64,
    /// Fused steps `T` for every `eps`; defaults to `floor(horizon / eps^2)`.
    pub steps: Option<usize>,
    /// Number of equally spaced observation times in `(0, eps^2 T]`.
    pub time_points: usize,
    /// Macroscopic positions `x`; the site is `x / eps + mu_hat`.
    pub positions: Vec<f64>,
    /// Window width in sites; defaults to the minimal admissible width.
    pub window: Option<usize>,
    pub replicas: usize,
    pub seed: u64,
    pub observables: Vec<Observable>,
    pub csv: Option<String>,
    pub json: Option<String>,
}

impl ExperimentConfig {
    /// A configuration with every observable and no outputs.
    pub fn new(max_occupancy: usize, line_capacity: usize, stay_probability: f64, density: f64) -> Self {
        Self {
            max_occupancy,
            line_capacity,
            stay_probability,
            density,
            epsilons: vec![0.01],
            horizon: 0.1,
            steps: None,
            time_points: 5,
            positions: vec![0.0],
            window: None,
            replicas: 100,
            seed: 0,
            observables: Observable::ALL.to_vec(),
            csv: None,
            json: None,
        }
    }

    pub fn from_flat(text: &str) -> Result<Self, ExperimentError> {
        let mut f = FlatConfig::parse(text)?;
        let mut c = Self::new(
            f.required("max_occupancy")?,
            f.required("line_capacity")?,
            f.required("stay_probability")?,
            f.required("density")?,
        );
        if let Some(v) = f.list("epsilons")? {
            c.epsilons = v;
        }
        if let Some(v) = f.optional("horizon")? {
            c.horizon = v;
        }
        c.steps = f.optional("steps")?;
        if let Some(v) = f.optional("time_points")? {
            c.time_points = v;
        }
        if let Some(v) = f.list("positions")? {
            c.positions = v;
        }
        c.window = f.optional("window")?;
        if let Some(v) = f.optional("replicas")? {
            c.replicas = v;
        }
        if let Some(v) = f.optional("seed")? {
            c.seed = v;
        }
        if let Some(v) = f.list("observables")? {
            c.observables = v;
        }
        c.csv = f.optional("csv")?;
        c.json = f.optional("json")?;
        f.finish()?;
        Ok(c)
    }

    pub fn to_flat(&self) -> String {
        let mut w = FlatWriter::default();
        w.put("max_occupancy", self.max_occupancy);
        w.put("line_capacity", self.line_capacity);
        w.put("stay_probability", self.stay_probability);
        w.put("density", self.density);
        w.put_list("epsilons", &self.epsilons);
        w.put("horizon", self.horizon);
        w.put_opt("steps", self.steps);
        w.put("time_points", self.time_points);
        w.put_list("positions", &self.positions);
        w.put_opt("window", self.window);
        w.put("replicas", self.replicas);
        w.put("seed", self.seed);
        w.put_list("observables", &self.observables);
        w.put_opt("csv", self.csv.as_ref());
        w.put_opt("json", self.json.as_ref());
        w.0
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Scaled parameters at one `eps`; fails with the violated inequality.
    pub fn params(&self, epsilon: f64) -> Result<ModelParams, ExperimentError> {
        Ok(ModelParams::scaled(self.max_occupancy, self.line_capacity, self.stay_probability, self.density, epsilon)?)
    }

    pub fn wants(&self, o: Observable) -> bool {
        self.observables.contains(&o)
    }
}

/// Initial data of a single simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialShape {
    /// Product stationary law at `density`.
    Product,
    /// Product stationary law on `x >= 0`, empty to the left.
    Step,
    /// Deterministic flat data at `density`.
    Flat,
}

impl FromStr for InitialShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "product" => Ok(Self::Product),
            "step" => Ok(Self::Step),
            "flat" => Ok(Self::Flat),
            _ => Err(format!("unknown initial data {s}")),
        }
    }
}

impl Display for InitialShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Product => "product",
            Self::Step => "step",
            Self::Flat => "flat",
        })
    }
}

/// Left boundary of a simulated window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftBoundary {
    /// Empty to the left; lines may not leave on the right.
    LeftFinite,
    /// Empty to the left; lines leave freely on the right.
    Open,
    /// Stationary Bernoulli inflow at the left edge; lines leave on the right.
    Stationary,
}

impl FromStr for LeftBoundary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "left_finite" => Ok(Self::LeftFinite),
            "open" => Ok(Self::Open),
            "stationary" => Ok(Self::Stationary),
            _ => Err(format!("unknown boundary {s}")),
        }
    }
}

impl Display for LeftBoundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LeftFinite => "left_finite",
            Self::Open => "open",
            Self::Stationary => "stationary",
        })
    }
}

/// Model parameters either given directly or through the weak scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    Direct { q: f64, alpha: f64 },
    Scaled { stay_probability: f64, epsilon: f64 },
}

/// Configuration of the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub max_occupancy: usize,
    pub line_capacity: usize,
    pub source: ParamSource,
    pub density: f64,
    pub initial: InitialShape,
    pub boundary: LeftBoundary,
    pub x_left: i64,
    pub window: usize,
    /// Unfused steps.
    pub steps: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn from_flat(text: &str) -> Result<Self, ExperimentError> {
        let mut f = FlatConfig::parse(text)?;
        let max_occupancy = f.required("max_occupancy")?;
        let line_capacity = f.required("line_capacity")?;
        let q: Option<f64> = f.optional("q")?;
        let alpha: Option<f64> = f.optional("alpha")?;
        let b: Option<f64> = f.optional("stay_probability")?;
        let eps: Option<f64> = f.optional("epsilon")?;
        let source = match (q, alpha, b, eps) {
            (Some(q), Some(alpha), None, None) => ParamSource::Direct { q, alpha },
            (None, None, Some(stay_probability), Some(epsilon)) => ParamSource::Scaled { stay_probability, epsilon },
            _ => return Err(ExperimentError::MissingKey("either q and alpha or stay_probability and epsilon".into())),
        };
        let c = Self {
            max_occupancy,
            line_capacity,
            source,
            density: f.required("density")?,
            initial: f.optional("initial")?.unwrap_or(InitialShape::Product),
            boundary: f.optional("boundary")?.unwrap_or(LeftBoundary::Stationary),
            x_left: f.optional("x_left")?.unwrap_or(0),
            window: f.required("window")?,
            steps: f.required("steps")?,
            seed: f.optional("seed")?.unwrap_or(0),
        };
        f.finish()?;
        Ok(c)
    }

    pub fn to_flat(&self) -> String {
        let mut w = FlatWriter::default();
        w.put("max_occupancy", self.max_occupancy);
        w.put("line_capacity", self.line_capacity);
        match self.source {
            ParamSource::Direct { q, alpha } => {
                w.put("q", q);
                w.put("alpha", alpha);
            }
            ParamSource::Scaled { stay_probability, epsilon } => {
                w.put("stay_probability", stay_probability);
                w.put("epsilon", epsilon);
            }
        }
        w.put("density", self.density);
        w.put("initial", self.initial);
        w.put("boundary", self.boundary);
        w.put("x_left", self.x_left);
        w.put("window", self.window);
        w.put("steps", self.steps);
        w.put("seed", self.seed);
        w.0
    }

    /// Parameters checked against the stochasticity (and scaling) conditions.
    pub fn params(&self) -> Result<ModelParams, ExperimentError> {
        Ok(match self.source {
            ParamSource::Direct { q, alpha } => {
                ModelParams::stochastic(q, self.max_occupancy, self.line_capacity, alpha)?
            }
            ParamSource::Scaled { stay_probability, epsilon } => {
                ModelParams::scaled(self.max_occupancy, self.line_capacity, stay_probability, self.density, epsilon)?
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_lists() {
        let text = "# smoke\nmax_occupancy = 2\nline_capacity=1\nstay_probability = 0.8 # b\ndensity = 1\n\
                    epsilons = 0.04, 0.01\npositions = -1,0,1\nobservables = fluctuation,increments\n";
        let c = ExperimentConfig::from_flat(text).unwrap();
        assert_eq!(c.epsilons, vec![0.04, 0.01]);
        assert_eq!(c.positions, vec![-1.0, 0.0, 1.0]);
        assert_eq!(c.observables, vec![Observable::Fluctuation, Observable::Increments]);
        assert_eq!(c.steps, None);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let base = "max_occupancy = 2\nline_capacity = 1\nstay_probability = 0.8\ndensity = 1\n";
        assert!(matches!(
            ExperimentConfig::from_flat(&format!("{base}colour = red\n")),
            Err(ExperimentError::UnknownKey(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_flat(&format!("{base}density = 1\n")),
            Err(ExperimentError::Config { line: 5, .. })
        ));
        assert!(matches!(ExperimentConfig::from_flat(&format!("{base}oops\n")), Err(ExperimentError::Config { .. })));
        assert!(matches!(ExperimentConfig::from_flat("max_occupancy = 2\n"), Err(ExperimentError::MissingKey(_))));
        assert!(matches!(
            ExperimentConfig::from_flat(&format!("{base}replicas = many\n")),
            Err(ExperimentError::InvalidValue { .. })
        ));
    }

    #[test]
    fn simulation_config_round_trips() {
        let text =
            "max_occupancy = 2\nline_capacity = 2\nq = 2\nalpha = -0.05\ndensity = 0.7\nwindow = 12\nsteps = 30\n";
        let c = SimulationConfig::from_flat(text).unwrap();
        assert_eq!(c.boundary, LeftBoundary::Stationary);
        assert_eq!(SimulationConfig::from_flat(&c.to_flat()).unwrap(), c);
        assert!(c.params().unwrap().condition1());
    }

    #[test]
    fn simulation_config_needs_one_parameter_source() {
        let text = "max_occupancy = 2\nline_capacity = 2\nq = 2\nstay_probability = 0.9\ndensity = 0.7\nwindow = 4\nsteps = 3\n";
        assert!(matches!(SimulationConfig::from_flat(text), Err(ExperimentError::MissingKey(_))));
    }

    #[test]
    fn violated_condition_names_the_inequality() {
        let text = "max_occupancy = 2\nline_capacity = 1\nq = 2\nalpha = -0.5\ndensity = 0.7\nwindow = 4\nsteps = 3\n";
        let err = SimulationConfig::from_flat(text).unwrap().params().unwrap_err().to_string();
        assert!(err.contains("< alpha < 0"), "{err}");
    }

    fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
        (
            1usize..5,
            1usize..5,
            0.0f64..1.0,
            prop::collection::vec(1e-4f64..0.1, 1..4),
            prop::option::of(1usize..10_000),
            prop::collection::vec(-3.0f64..3.0, 0..5),
            prop::option::of(1usize..5000),
            any::<u64>(),
            prop::sample::subsequence(Observable::ALL.to_vec(), 0..=4),
            prop::option::of("[a-z]{1,8}\\.csv"),
        )
            .prop_map(|(i, j, b, epsilons, steps, positions, window, seed, observables, csv)| {
                ExperimentConfig {
                    epsilons,
                    steps,
                    positions,
                    window,
                    seed,
                    observables,
                    csv,
                    ..ExperimentConfig::new(i, j, b, 0.5)
                }
            })
    }

    proptest! {
        #[test]
        fn flat_and_json_round_trip(c in config_strategy()) {
            prop_assert_eq!(ExperimentConfig::from_flat(&c.to_flat()).unwrap(), c.clone());
            prop_assert_eq!(ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        }
    }
}
