use std::f64::consts::PI;

use rand::Rng;

use super::raster::{Canvas, Shape, View};
use super::{wrap_angle, EnvState};

/// Torque-limited pendulum; `theta = 0` is upright, `theta = pi` hangs down.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    /// Bound on initial angular velocity for collected trajectories.
    pub start_speed: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            max_torque: 2.5,
            max_speed: 12.0,
            start_speed: 4.0,
        }
    }
}

const POLE_RADIUS: f64 = 0.08;
const VIEW_HALF_WIDTH: f64 = 1.25;
pub(super) const BACKGROUND: [f32; 3] = [0.92, 0.92, 0.88];
const POLE_COLOR: [f32; 3] = [0.85, 0.35, 0.1];
const PIVOT_COLOR: [f32; 3] = [0.15, 0.15, 0.2];

impl PendulumParams {
    fn angular_acc(&self, th: f64, torque: f64) -> f64 {
        let inertia = self.mass * self.length * self.length;
        self.gravity / self.length * th.sin() + torque / inertia
    }

    /// Kick-drift-kick step: the symmetric composition of two half-length
    /// semi-implicit Euler steps, which keeps energy error second order.
    pub fn integrate(&self, s: &EnvState, torque: f64, dt: f64) -> EnvState {
        let (th, om) = (s.q[0], s.qdot[0]);
        let om_half = om + 0.5 * dt * self.angular_acc(th, torque);
        let th = th + dt * om_half;
        let om = (om_half + 0.5 * dt * self.angular_acc(th, torque)).clamp(-self.max_speed, self.max_speed);
        EnvState::new(vec![wrap_angle(th)], vec![om])
    }

    /// Kinetic plus potential energy, zero when hanging at rest.
    pub fn energy(&self, s: &EnvState) -> f64 {
        let inertia = self.mass * self.length * self.length;
        0.5 * inertia * s.qdot[0].powi(2) + self.mass * self.gravity * self.length * (1.0 + s.q[0].cos())
    }

    pub fn reward(&self, s: &EnvState) -> f64 {
        (s.q[0].cos() + 1.0) / 2.0
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let th = wrap_angle(rng.random_range(-PI..PI));
        let om = rng.random_range(-self.start_speed..=self.start_speed);
        EnvState::new(vec![th], vec![om])
    }

    pub(super) fn shapes(&self, s: &EnvState) -> Vec<(Shape, [f32; 3])> {
        let th = s.q[0];
        let (tx, ty) = (self.length * th.sin(), self.length * th.cos());
        vec![
            (
                Shape::Capsule {
                    ax: 0.0,
                    ay: 0.0,
                    bx: tx,
                    by: ty,
                    r: POLE_RADIUS,
                },
                POLE_COLOR,
            ),
            (Shape::Disc { cx: 0.0, cy: 0.0, r: 0.05 }, PIVOT_COLOR),
        ]
    }

    pub(super) fn view(&self, width: usize) -> View {
        View::fit(0.0, 0.0, VIEW_HALF_WIDTH * self.length, width)
    }

    pub(super) fn render(&self, s: &EnvState, canvas: &mut Canvas) {
        let view = self.view(canvas.width);
        for (shape, color) in self.shapes(s) {
            canvas.draw(&view, &shape, color);
        }
    }

    /// Probe targets: cos(theta), sin(theta), theta_dot.
    pub fn features(&self, s: &EnvState) -> Vec<f64> {
        vec![s.q[0].cos(), s.q[0].sin(), s.qdot[0]]
    }
}
