use std::f64::consts::PI;

use rand::Rng;

use super::raster::{Canvas, Shape, View};
use super::{wrap_angle, Camera, EnvState};

/// Cart on a bounded rail with a passively hinged pole; `theta = 0` upright.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Full pole length; the pole's centre of mass sits at half of it.
    pub pole_length: f64,
    pub gravity: f64,
    pub max_force: f64,
    /// Cart centre stays within `[-track_half, track_half]`.
    pub track_half: f64,
    pub max_speed: f64,
    pub max_angular_speed: f64,
    pub start_speed: f64,
    pub start_angular_speed: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 1.0,
            gravity: 9.81,
            max_force: 10.0,
            track_half: 1.2,
            max_speed: 5.0,
            max_angular_speed: 15.0,
            start_speed: 1.0,
            start_angular_speed: 4.0,
        }
    }
}

const CART_HALF: (f64, f64) = (0.3, 0.15);
const POLE_RADIUS: f64 = 0.08;
const MOVING_HALF_WIDTH: f64 = 1.5;
const TICK_SPACING: f64 = 0.3;
const BACKGROUND: [f32; 3] = [0.92, 0.92, 0.88];
const RAIL_COLOR: [f32; 3] = [0.45, 0.45, 0.45];
const TICK_COLOR: [f32; 3] = [0.2, 0.2, 0.25];
const CART_COLOR: [f32; 3] = [0.15, 0.35, 0.8];
const POLE_COLOR: [f32; 3] = [0.85, 0.35, 0.1];

impl CartPoleParams {
    pub fn integrate(&self, s: &EnvState, force: f64, dt: f64) -> EnvState {
        let (x, th) = (s.q[0], s.q[1]);
        let (xd, thd) = (s.qdot[0], s.qdot[1]);
        let total = self.cart_mass + self.pole_mass;
        let half = self.pole_length / 2.0;
        let (sin, cos) = th.sin_cos();
        let temp = (force + self.pole_mass * half * thd * thd * sin) / total;
        let th_acc = (self.gravity * sin - cos * temp)
            / (half * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let x_acc = temp - self.pole_mass * half * th_acc * cos / total;

        let mut xd = (xd + x_acc * dt).clamp(-self.max_speed, self.max_speed);
        let thd = (thd + th_acc * dt).clamp(-self.max_angular_speed, self.max_angular_speed);
        let mut x = x + xd * dt;
        if x.abs() > self.track_half {
            x = x.clamp(-self.track_half, self.track_half);
            xd = 0.0;
        }
        EnvState::new(vec![x, wrap_angle(th + thd * dt)], vec![xd, thd])
    }

    /// Uprightness in [0, 1], scaled down by up to half near the rail ends.
    pub fn reward(&self, s: &EnvState) -> f64 {
        let up = (s.q[1].cos() + 1.0) / 2.0;
        let edge = ((s.q[0].abs() - 0.8 * self.track_half) / (0.2 * self.track_half)).clamp(0.0, 1.0);
        up * (1.0 - 0.5 * edge)
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let x = rng.random_range(-self.track_half..=self.track_half);
        let th = wrap_angle(rng.random_range(-PI..PI));
        let xd = rng.random_range(-self.start_speed..=self.start_speed);
        let thd = rng.random_range(-self.start_angular_speed..=self.start_angular_speed);
        EnvState::new(vec![x, th], vec![xd, thd])
    }

    pub(super) fn view(&self, s: &EnvState, camera: Camera, width: usize) -> View {
        match camera {
            Camera::Static => View::fit(0.0, 0.0, self.track_half + CART_HALF.0 + self.pole_length * 0.8, width),
            Camera::Moving => View::fit(s.q[0], 0.0, MOVING_HALF_WIDTH, width),
        }
    }

    pub(super) fn cart_shape(&self, s: &EnvState) -> Shape {
        Shape::Rect {
            cx: s.q[0],
            cy: 0.0,
            hx: CART_HALF.0,
            hy: CART_HALF.1,
        }
    }

    pub(super) fn pole_shape(&self, s: &EnvState) -> Shape {
        let (x, th) = (s.q[0], s.q[1]);
        Shape::Capsule {
            ax: x,
            ay: 0.0,
            bx: x + self.pole_length * th.sin(),
            by: self.pole_length * th.cos(),
            r: POLE_RADIUS,
        }
    }

    pub(super) fn render(&self, s: &EnvState, camera: Camera, canvas: &mut Canvas) {
        let view = self.view(s, camera, canvas.width);
        let rail_half = self.track_half + CART_HALF.0;
        canvas.draw(
            &view,
            &Shape::Rect {
                cx: 0.0,
                cy: -CART_HALF.1 - 0.03,
                hx: rail_half,
                hy: 0.03,
            },
            RAIL_COLOR,
        );
        for end in [-rail_half, rail_half] {
            canvas.draw(&view, &Shape::Rect { cx: end, cy: -0.1, hx: 0.04, hy: 0.25 }, TICK_COLOR);
        }
        let n_ticks = (rail_half / TICK_SPACING).floor() as i32;
        for i in -n_ticks..=n_ticks {
            canvas.draw(
                &view,
                &Shape::Rect {
                    cx: i as f64 * TICK_SPACING,
                    cy: -CART_HALF.1 - 0.14,
                    hx: 0.03,
                    hy: 0.06,
                },
                TICK_COLOR,
            );
        }
        canvas.draw(&view, &self.cart_shape(s), CART_COLOR);
        canvas.draw(&view, &self.pole_shape(s), POLE_COLOR);
    }

    pub(super) fn background() -> [f32; 3] {
        BACKGROUND
    }

    /// Probe targets: x, cos(theta), sin(theta), x_dot, theta_dot.
    pub fn features(&self, s: &EnvState) -> Vec<f64> {
        vec![s.q[0], s.q[1].cos(), s.q[1].sin(), s.qdot[0], s.qdot[1]]
    }
}
