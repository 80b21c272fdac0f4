//! Planar dynamics for the three control tasks, pixel rendering, rewards,
//! and random-policy data collection.

mod ball_in_cup;
mod cartpole;
mod dataset;
mod pendulum;
pub mod raster;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use ball_in_cup::BallInCupParams;
pub use cartpole::CartPoleParams;
pub use dataset::{collect, Dataset, DatasetMeta, Trajectory, DATASET_MAGIC, STATE_TAG};
pub use pendulum::PendulumParams;
use raster::Canvas;

use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 64;
pub const CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Pendulum,
    CartPole,
    BallInCup,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Pendulum, Task::CartPole, Task::BallInCup];

    pub fn id(self) -> u64 {
        match self {
            Task::Pendulum => 0,
            Task::CartPole => 1,
            Task::BallInCup => 2,
        }
    }

    pub fn from_id(id: u64) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Error::Format(format!("unknown task id {id}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Pendulum => "pendulum",
            Task::CartPole => "cartpole",
            Task::BallInCup => "ball_in_cup",
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            Task::Pendulum | Task::CartPole => 1,
            Task::BallInCup => 2,
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            Task::Pendulum => 1,
            Task::CartPole => 2,
            Task::BallInCup => 4,
        }
    }

    /// Names of the ground-truth probe targets, in `features` order.
    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            Task::Pendulum => &["cos_theta", "sin_theta", "theta_dot"],
            Task::CartPole => &["x_cart", "cos_theta", "sin_theta", "x_cart_dot", "theta_dot"],
            Task::BallInCup => &[
                "x_cup", "y_cup", "x_ball", "y_ball", "x_cup_dot", "y_cup_dot", "x_ball_dot", "y_ball_dot",
            ],
        }
    }

    /// Whether each probe target is a velocity (as opposed to a position).
    pub fn feature_is_velocity(self) -> Vec<bool> {
        self.feature_names().iter().map(|n| n.ends_with("_dot")).collect()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pendulum" => Ok(Task::Pendulum),
            "cartpole" | "cart_pole" => Ok(Task::CartPole),
            "ball_in_cup" | "ballincup" => Ok(Task::BallInCup),
            _ => Err(Error::InvalidArgument(format!("unknown task '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Camera {
    Static,
    /// Follows the cart horizontally (cart-pole only; other tasks ignore it).
    Moving,
}

impl Camera {
    pub fn id(self) -> u64 {
        match self {
            Camera::Static => 0,
            Camera::Moving => 1,
        }
    }

    pub fn from_id(id: u64) -> Result<Self> {
        match id {
            0 => Ok(Camera::Static),
            1 => Ok(Camera::Moving),
            _ => Err(Error::Format(format!("unknown camera id {id}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Camera::Static => "static",
            Camera::Moving => "moving",
        }
    }
}

impl FromStr for Camera {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(Camera::Static),
            "moving" => Ok(Camera::Moving),
            _ => Err(Error::InvalidArgument(format!("unknown camera '{s}'"))),
        }
    }
}

/// Ground-truth generalized coordinates and velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl EnvState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Self {
        EnvState { q, qdot }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).all(|v| v.is_finite())
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// A single rendered frame, `[height, width, 3]` row-major in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl Observation {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| quantize(p)).collect()
    }

    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Self {
        Observation {
            height,
            width,
            pixels: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }
}

pub(crate) fn quantize(p: f32) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub dt: f64,
    pub substeps: usize,
    pub resolution: usize,
    pub pendulum: PendulumParams,
    pub cartpole: CartPoleParams,
    pub ball_in_cup: BallInCupParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: 0.05,
            substeps: 2,
            resolution: DEFAULT_RESOLUTION,
            pendulum: PendulumParams::default(),
            cartpole: CartPoleParams::default(),
            ball_in_cup: BallInCupParams::default(),
        }
    }
}

/// One task under one camera with fixed physical constants.
#[derive(Clone, Copy, Debug)]
pub struct Environment {
    pub task: Task,
    pub camera: Camera,
    pub config: EnvConfig,
}

impl Environment {
    pub fn new(task: Task, camera: Camera) -> Self {
        Self::with_config(task, camera, EnvConfig::default())
    }

    pub fn with_config(task: Task, camera: Camera, config: EnvConfig) -> Self {
        Environment { task, camera, config }
    }

    pub fn action_dim(&self) -> usize {
        self.task.action_dim()
    }

    /// Symmetric per-dimension action limit.
    pub fn action_limit(&self) -> f64 {
        match self.task {
            Task::Pendulum => self.config.pendulum.max_torque,
            Task::CartPole => self.config.cartpole.max_force,
            Task::BallInCup => self.config.ball_in_cup.max_force,
        }
    }

    /// Integrates one control interval. Actions outside the limits are
    /// clipped. Fails only if the result is not finite.
    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<EnvState> {
        if action.len() != self.action_dim() {
            return Err(Error::shape("env action", &[self.action_dim()], &[action.len()]));
        }
        let lim = self.action_limit();
        let a: Vec<f64> = action
            .iter()
            .map(|v| if v.is_finite() { v.clamp(-lim, lim) } else { 0.0 })
            .collect();
        let h = self.config.dt / self.config.substeps as f64;
        let mut s = state.clone();
        for _ in 0..self.config.substeps {
            s = match self.task {
                Task::Pendulum => self.config.pendulum.integrate(&s, a[0], h),
                Task::CartPole => self.config.cartpole.integrate(&s, a[0], h),
                Task::BallInCup => self.config.ball_in_cup.integrate(&s, [a[0], a[1]], h),
            };
        }
        if !s.is_finite() {
            return Err(Error::Numeric(format!("{} state became non-finite", self.task)));
        }
        Ok(s)
    }

    /// [`Environment::step`], resetting to a fresh start state on numeric
    /// failure. The flag reports whether a reset happened.
    pub fn step_or_reset<R: Rng + ?Sized>(&self, state: &EnvState, action: &[f64], rng: &mut R) -> (EnvState, bool) {
        match self.step(state, action) {
            Ok(s) => (s, false),
            Err(_) => {
                log::warn!("{}: non-finite state, resetting", self.task);
                (self.sample_start(rng), true)
            }
        }
    }

    pub fn reward(&self, state: &EnvState) -> f64 {
        match self.task {
            Task::Pendulum => self.config.pendulum.reward(state),
            Task::CartPole => self.config.cartpole.reward(state),
            Task::BallInCup => self.config.ball_in_cup.reward(state),
        }
    }

    /// Maximum attainable reward, used to shift rewards non-positive.
    pub fn reward_max(&self) -> f64 {
        1.0
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        match self.task {
            Task::Pendulum => self.config.pendulum.sample_start(rng),
            Task::CartPole => self.config.cartpole.sample_start(rng),
            Task::BallInCup => self.config.ball_in_cup.sample_start(rng),
        }
    }

    pub fn render(&self, state: &EnvState) -> Observation {
        let n = self.config.resolution;
        let canvas = self.render_canvas(state, n);
        Observation {
            height: n,
            width: n,
            pixels: canvas.pixels,
        }
    }

    fn render_canvas(&self, state: &EnvState, n: usize) -> Canvas {
        match self.task {
            Task::Pendulum => {
                let mut c = Canvas::new(n, n, pendulum::BACKGROUND);
                self.config.pendulum.render(state, &mut c);
                c
            }
            Task::CartPole => {
                let mut c = Canvas::new(n, n, CartPoleParams::background());
                self.config.cartpole.render(state, self.camera, &mut c);
                c
            }
            Task::BallInCup => {
                let mut c = Canvas::new(n, n, BallInCupParams::background());
                self.config.ball_in_cup.render(state, &mut c);
                c
            }
        }
    }

    /// Pixel counts (at least half covered) of each object's silhouette.
    pub fn silhouette_sizes(&self, state: &EnvState) -> Vec<(&'static str, usize)> {
        let n = self.config.resolution;
        let canvas = Canvas::new(n, n, [0.0; 3]);
        match self.task {
            Task::Pendulum => {
                let p = &self.config.pendulum;
                let view = p.view(n);
                vec![("pole", canvas.footprint(&view, &p.shapes(state)[0].0))]
            }
            Task::CartPole => {
                let p = &self.config.cartpole;
                let view = p.view(state, self.camera, n);
                vec![
                    ("cart", canvas.footprint(&view, &p.cart_shape(state))),
                    ("pole", canvas.footprint(&view, &p.pole_shape(state))),
                ]
            }
            Task::BallInCup => {
                let p = &self.config.ball_in_cup;
                let view = p.view(n);
                let cup: usize = p.cup_shapes(state).iter().map(|s| canvas.footprint(&view, s)).sum();
                vec![("cup", cup), ("ball", canvas.footprint(&view, &p.ball_shape(state)))]
            }
        }
    }

    /// Horizontal pixel coordinate of a world x position in the current view.
    pub fn world_to_pixel_x(&self, state: &EnvState, x: f64) -> f64 {
        let n = self.config.resolution;
        let view = match self.task {
            Task::Pendulum => self.config.pendulum.view(n),
            Task::CartPole => self.config.cartpole.view(state, self.camera, n),
            Task::BallInCup => self.config.ball_in_cup.view(n),
        };
        view.to_pixel(x, 0.0, n, n).0
    }

    pub fn features(&self, state: &EnvState) -> Vec<f64> {
        match self.task {
            Task::Pendulum => self.config.pendulum.features(state),
            Task::CartPole => self.config.cartpole.features(state),
            Task::BallInCup => self.config.ball_in_cup.features(state),
        }
    }

    pub fn pendulum_energy(&self, state: &EnvState) -> f64 {
        self.config.pendulum.energy(state)
    }

    pub fn ball_in_cup(&self, state: &EnvState) -> bool {
        self.task == Task::BallInCup && self.config.ball_in_cup.ball_in_cup(state)
    }
}
