//! The TOML scenario file: one experiment per document.
//!
//! ```toml
//! name = "sway_free_space_on"        # optional, defaults to the file stem
//! description = "..."
//!
//! [crane]                            # any subset of the crane parameters
//! passive_damping = 0.02             # N·m·s/rad
//! [crane.collision]                  # collision capsules, m
//! spacing = 0.4
//!
//! [mpc]                              # horizon, ts (s), weights, margins, solver
//! collision_penalty = true
//!
//! [reference]
//! waypoints = [[0.0, 0.4, -0.4, 1.0, 0.0], [1.0, 0.4, -0.4, 1.0, 0.0]]
//! v_limit = [0.3, 0.2, 0.2, 0.3, 0.6]    # joint units per s
//! a_limit = [0.3, 0.3, 0.3, 0.4, 0.8]    # joint units per s²
//!
//! [environment]
//! origin = [-11.2, -11.2, -6.0]      # m, must cover the reachable workspace
//! resolution = 0.1                   # m
//! dims = [224, 224, 190]
//! [[environment.obstacles]]
//! name = "wall"
//! min = [4.0, -1.0, -3.0]            # m
//! max = [4.4, 1.0, 2.0]
//! insert_at = 0.0                    # s
//!
//! [[disturbances]]
//! time = 1.0                         # s
//! impulse = [0.3, 0.0]               # rad/s on the two passive joints
//! repeat = 3                         # pulls, spaced in pendulum periods
//!
//! [run]
//! duration = 20.0                    # s
//! ```

use std::fmt;
use std::path::Path;

use forestry_mpc::collision::CollisionGeometry;
use forestry_mpc::crane::{join_q, passive_equilibrium, pendulum_period, CraneParams, CraneState, Joint, LinkInertia};
use forestry_mpc::crane::{Vec2, Vec5, Vec7};
use forestry_mpc::mpc::MpcConfig;
use forestry_mpc::sim::{Controller, Disturbance, Environment, ObstacleEvent, ScenarioSpec};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub description: Option<String>,
    #[serde(default)]
    pub crane: CraneSection,
    #[serde(default)]
    pub mpc: MpcConfig,
    pub reference: ReferenceSection,
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceEntry>,
    pub run: RunSection,
}

/// Overrides of the default crane. Omitted keys keep the built-in value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraneSection {
    pub joints: Option<Vec<Joint>>,
    pub links: Option<Vec<LinkInertia>>,
    /// m/s²
    pub gravity: Option<Vector3<f64>>,
    /// rad/s
    pub actuator_omega: Option<Vec5>,
    pub actuator_damping: Option<Vec5>,
    /// m²
    pub cylinder_area_pos: Option<Vec5>,
    /// m²
    pub cylinder_area_neg: Option<Vec5>,
    /// m of stroke per joint unit
    pub cylinder_gain: Option<Vec5>,
    pub q_min: Option<Vec7>,
    pub q_max: Option<Vec7>,
    pub qdd_a_min: Option<Vec5>,
    pub qdd_a_max: Option<Vec5>,
    pub u_max: Option<Vec5>,
    /// m³/s
    pub q_flow_max: Option<f64>,
    pub telescope_index: Option<usize>,
    /// N·m·s/rad
    pub passive_damping: Option<f64>,
    pub collision: Option<CollisionGeometry>,
}

impl CraneSection {
    pub fn params(&self) -> CraneParams {
        let mut p = CraneParams::default();
        macro_rules! take {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    p.$f = v.clone();
                }
            )*};
        }
        take!(
            joints, links, gravity, actuator_omega, actuator_damping, cylinder_area_pos, cylinder_area_neg,
            cylinder_gain, q_min, q_max, qdd_a_min, qdd_a_max, u_max, q_flow_max, telescope_index, passive_damping
        );
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Actuated joint waypoints (rad, rad, rad, m, rad).
    pub waypoints: Vec<Vec5>,
    pub v_limit: Vec5,
    pub a_limit: Vec5,
}

fn default_resolution() -> f64 {
    0.1
}

fn default_d_max() -> f64 {
    forestry_mpc::edf::DEFAULT_D_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub origin: Vector3<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    pub dims: [usize; 3],
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    #[serde(default)]
    pub obstacles: Vec<ObstacleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleEntry {
    pub name: String,
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    #[serde(default)]
    pub insert_at: f64,
    pub remove_at: Option<f64>,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEntry {
    pub time: f64,
    pub impulse: Vec2,
    /// Number of identical pulls.
    #[serde(default = "one")]
    pub repeat: usize,
    /// Spacing between repeated pulls, in pendulum periods at the initial pose.
    #[serde(default = "one_f")]
    pub spacing_periods: f64,
    /// Relative magnitude jitter; each pull is scaled by `1 + jitter·U(−1, 1)`
    /// drawn from the run seed.
    #[serde(default)]
    pub jitter: f64,
}

fn default_plant_dt() -> f64 {
    1e-3
}

fn default_period() -> f64 {
    0.1
}

fn default_goal_tolerance() -> f64 {
    0.05
}

fn default_controller() -> Controller {
    Controller::Mpc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// s
    pub duration: f64,
    #[serde(default = "default_plant_dt")]
    pub plant_dt: f64,
    #[serde(default = "default_period")]
    pub control_period: f64,
    /// Joint units.
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    #[serde(default = "default_controller")]
    pub controller: Controller,
    #[serde(default)]
    pub expect_collision: bool,
    #[serde(default)]
    pub seed: u64,
    /// Initial joint positions; defaults to the first waypoint with the
    /// gripper hanging at rest.
    pub initial_q: Option<Vec7>,
    pub initial_qd: Option<Vec7>,
    /// Output directory used when `--out` is not given.
    pub output: Option<String>,
}

/// A scenario that failed to load, with one message per problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics(pub Vec<String>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

impl ScenarioFile {
    /// Parses a document. Syntax errors, type errors and unknown keys are
    /// reported with their line and column.
    pub fn parse(text: &str) -> Result<Self, Diagnostics> {
        toml::from_str(text).map_err(|e| Diagnostics(vec![e.to_string().trim_end().to_owned()]))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Builds the simulation scenario. `fallback_name` is used when the
    /// document has no `name`; `seed` overrides `run.seed`.
    pub fn to_spec(&self, fallback_name: &str, seed: Option<u64>) -> Result<ScenarioSpec, Diagnostics> {
        let params = self.crane.params();
        let geometry = self.crane.collision.clone().unwrap_or_default();
        let mut problems = Vec::new();
        if let Err(e) = params.validate() {
            // the remaining steps need a usable crane model
            return Err(Diagnostics(vec![format!("crane: {e}")]));
        }

        let initial = match (self.run.initial_q, self.reference.waypoints.first()) {
            (Some(q), _) => CraneState { q, qd: self.run.initial_qd.unwrap_or_else(Vec7::zeros), qdd_a: Vec5::zeros() },
            (None, Some(w)) => CraneState {
                q: join_q(w, &passive_equilibrium(&params, w)),
                qd: self.run.initial_qd.unwrap_or_else(Vec7::zeros),
                qdd_a: Vec5::zeros(),
            },
            (None, None) => {
                problems.push("reference.waypoints: at least one waypoint is required".to_owned());
                CraneState::at_rest(Vec7::zeros())
            }
        };

        let period = pendulum_period(&params, &initial.q_a());
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.run.seed));
        let mut disturbances = Vec::new();
        for (i, d) in self.disturbances.iter().enumerate() {
            if d.repeat == 0 {
                problems.push(format!("disturbances[{i}].repeat: must be at least 1"));
            }
            if !(d.spacing_periods > 0.0) {
                problems.push(format!("disturbances[{i}].spacing_periods: must be positive, got {}", d.spacing_periods));
            }
            if !(0.0..1.0).contains(&d.jitter) {
                problems.push(format!("disturbances[{i}].jitter: must lie in [0, 1), got {}", d.jitter));
            }
            for r in 0..d.repeat {
                let scale = if d.jitter > 0.0 { 1.0 + d.jitter * rng.gen_range(-1.0..=1.0) } else { 1.0 };
                disturbances.push(Disturbance {
                    time: d.time + r as f64 * d.spacing_periods * period,
                    impulse: d.impulse * scale,
                });
            }
        }

        let env = &self.environment;
        let environment = Environment {
            origin: env.origin,
            resolution: env.resolution,
            dims: env.dims,
            d_max: env.d_max,
            obstacles: env
                .obstacles
                .iter()
                .map(|o| ObstacleEvent {
                    name: o.name.clone(),
                    min: o.min,
                    max: o.max,
                    insert_at: o.insert_at,
                    remove_at: o.remove_at,
                })
                .collect(),
        };

        let spec = ScenarioSpec {
            name: self.name.clone().unwrap_or_else(|| fallback_name.to_owned()),
            params,
            geometry,
            initial,
            waypoints: self.reference.waypoints.clone(),
            v_limit: self.reference.v_limit,
            a_limit: self.reference.a_limit,
            environment,
            disturbances,
            mpc: self.mpc.clone(),
            controller: self.run.controller,
            plant_dt: self.run.plant_dt,
            control_period: self.run.control_period,
            duration: self.run.duration,
            goal_tolerance: self.run.goal_tolerance,
            expect_collision: self.run.expect_collision,
        };
        if problems.is_empty() {
            problems = spec.diagnostics();
        }
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Diagnostics(problems))
        }
    }
}

/// Where a scenario came from: a file on disk or a bundled name.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub spec: ScenarioSpec,
}

/// Loads `source`, which is either a path to a TOML file or the name of a
/// bundled scenario.
pub fn load(source: &str, seed: Option<u64>) -> Result<LoadedScenario, Diagnostics> {
    let path = Path::new(source);
    let (text, stem) = if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Diagnostics(vec![format!("{source}: {e}")]))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_owned();
        (text, stem)
    } else if let Some(text) = crate::bundled::find(source) {
        (text.to_owned(), source.to_owned())
    } else {
        return Err(Diagnostics(vec![format!("{source}: no such file or bundled scenario")]));
    };
    let prefix = |d: Diagnostics| Diagnostics(d.0.into_iter().map(|m| format!("{source}: {m}")).collect());
    let file = ScenarioFile::parse(&text).map_err(prefix)?;
    let spec = file.to_spec(&stem, seed).map_err(prefix)?;
    Ok(LoadedScenario { file, spec })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[reference]
waypoints = [[0.0, 0.4, -0.4, 1.0, 0.0]]
v_limit = [0.3, 0.2, 0.2, 0.3, 0.6]
a_limit = [0.3, 0.3, 0.3, 0.4, 0.8]

[environment]
origin = [-11.2, -11.2, -6.0]
dims = [224, 224, 190]

[run]
duration = 5.0
"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let spec = ScenarioFile::parse(MINIMAL).unwrap().to_spec("minimal", None).unwrap();
        assert_eq!(spec.name, "minimal");
        assert_eq!(spec.mpc, MpcConfig::default());
        assert_eq!(spec.params, CraneParams::default());
        assert_eq!(spec.plant_dt, 1e-3);
        assert_eq!(spec.control_period, 0.1);
        assert_eq!(spec.controller, Controller::Mpc);
        let eq = passive_equilibrium(&spec.params, &spec.initial.q_a());
        assert_eq!(spec.initial.q_p(), eq);
    }

    #[test]
    fn unknown_key_is_reported_with_its_line() {
        let text = MINIMAL.replace("duration = 5.0", "duration = 5.0\nspeed = 2");
        let err = ScenarioFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("speed"), "{err}");
        assert!(err.contains("line 13"), "{err}");
    }

    #[test]
    fn crane_overrides_are_partial() {
        let text = format!("[crane]\nq_flow_max = 0.001\n[crane.collision]\nspacing = 0.3\n{MINIMAL}");
        let file = ScenarioFile::parse(&text).unwrap();
        let p = file.crane.params();
        assert_eq!(p.q_flow_max, 0.001);
        assert_eq!(p.u_max, CraneParams::default().u_max);
        assert_eq!(file.crane.collision.unwrap().spacing, 0.3);
    }

    #[test]
    fn repeated_pulls_are_spaced_by_the_pendulum_period() {
        let text = format!("{MINIMAL}\n[[disturbances]]\ntime = 1.0\nimpulse = [0.3, 0.0]\nrepeat = 3\n");
        let spec = ScenarioFile::parse(&text).unwrap().to_spec("x", None).unwrap();
        let period = pendulum_period(&spec.params, &spec.initial.q_a());
        let times: Vec<f64> = spec.disturbances.iter().map(|d| d.time).collect();
        assert_eq!(times.len(), 3);
        assert!((times[2] - 1.0 - 2.0 * period).abs() < 1e-12);
        assert!(spec.disturbances.iter().all(|d| d.impulse == Vec2::new(0.3, 0.0)));
    }

    #[test]
    fn jitter_depends_only_on_the_seed() {
        let text = format!("{MINIMAL}\n[[disturbances]]\ntime = 1.0\nimpulse = [0.3, 0.0]\njitter = 0.2\n");
        let file = ScenarioFile::parse(&text).unwrap();
        let a = file.to_spec("x", Some(7)).unwrap().disturbances;
        let b = file.to_spec("x", Some(7)).unwrap().disturbances;
        let c = file.to_spec("x", Some(8)).unwrap().disturbances;
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a[0].impulse[0] - 0.3).abs() <= 0.06 + 1e-12);
    }

    #[test]
    fn round_trips_through_toml() {
        let file = ScenarioFile::parse(MINIMAL).unwrap();
        assert_eq!(ScenarioFile::parse(&file.to_toml()).unwrap(), file);
    }
}
