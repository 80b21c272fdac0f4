use std::f64::consts::PI;

use rand::Rng;

use super::raster::{Canvas, Shape, View};
use super::EnvState;

/// Planar ball-in-cup. `q = [cup_x, cup_y, ball_x, ball_y]`; the string is
/// anchored at the cup's floor centre, which is the cup position itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallInCupParams {
    pub cup_mass: f64,
    pub cup_damping: f64,
    pub max_force: f64,
    /// Cup position stays inside `[-x, x] × [-y, y]`.
    pub region: (f64, f64),
    pub string_length: f64,
    pub gravity: f64,
    pub ball_radius: f64,
    pub cup_inner_half_width: f64,
    pub cup_height: f64,
    pub max_ball_speed: f64,
    pub start_cup_speed: f64,
    pub start_ball_speed: f64,
}

impl Default for BallInCupParams {
    fn default() -> Self {
        BallInCupParams {
            cup_mass: 1.0,
            cup_damping: 10.0,
            max_force: 20.0,
            region: (0.4, 0.25),
            string_length: 0.3,
            gravity: 9.81,
            ball_radius: 0.07,
            cup_inner_half_width: 0.1,
            cup_height: 0.15,
            max_ball_speed: 10.0,
            start_cup_speed: 0.5,
            start_ball_speed: 1.0,
        }
    }
}

const WALL: f64 = 0.03;
const BACKGROUND: [f32; 3] = [0.92, 0.92, 0.88];
const CUP_COLOR: [f32; 3] = [0.15, 0.35, 0.8];
const BALL_COLOR: [f32; 3] = [0.85, 0.35, 0.1];
const STRING_COLOR: [f32; 3] = [0.5, 0.5, 0.5];

impl BallInCupParams {
    /// Ball position relative to the cup anchor.
    fn relative(s: &EnvState) -> (f64, f64) {
        (s.q[2] - s.q[0], s.q[3] - s.q[1])
    }

    fn interior(&self) -> (f64, f64, f64) {
        // (half width, floor, rim) of the region the ball centre can occupy
        (
            self.cup_inner_half_width - self.ball_radius,
            self.ball_radius,
            self.cup_height,
        )
    }

    pub fn ball_in_cup(&self, s: &EnvState) -> bool {
        let (dx, dy) = Self::relative(s);
        let (hw, floor, rim) = self.interior();
        dx.abs() <= hw && dy >= floor - 1e-9 && dy <= rim
    }

    pub fn integrate(&self, s: &EnvState, force: [f64; 2], dt: f64) -> EnvState {
        let was_inside = self.ball_in_cup(s);
        let (_, rel_y_before) = Self::relative(s);

        let mut cup = [s.q[0], s.q[1]];
        let mut cup_v = [s.qdot[0], s.qdot[1]];
        let bounds = [self.region.0, self.region.1];
        for k in 0..2 {
            let acc = (force[k] - self.cup_damping * cup_v[k]) / self.cup_mass;
            cup_v[k] += acc * dt;
            cup[k] += cup_v[k] * dt;
            if cup[k].abs() > bounds[k] {
                cup[k] = cup[k].clamp(-bounds[k], bounds[k]);
                cup_v[k] = 0.0;
            }
        }

        let mut bv = [s.qdot[2], s.qdot[3] - self.gravity * dt];
        let speed = (bv[0] * bv[0] + bv[1] * bv[1]).sqrt();
        if speed > self.max_ball_speed {
            bv = [bv[0] * self.max_ball_speed / speed, bv[1] * self.max_ball_speed / speed];
        }
        let mut ball = [s.q[2] + bv[0] * dt, s.q[3] + bv[1] * dt];

        // inextensible string: acts only when taut
        let d = [ball[0] - cup[0], ball[1] - cup[1]];
        let dist = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if dist > self.string_length {
            let n = [d[0] / dist, d[1] / dist];
            ball = [cup[0] + n[0] * self.string_length, cup[1] + n[1] * self.string_length];
            let rel = [bv[0] - cup_v[0], bv[1] - cup_v[1]];
            let outward = rel[0] * n[0] + rel[1] * n[1];
            if outward > 0.0 {
                bv = [bv[0] - outward * n[0], bv[1] - outward * n[1]];
            }
        }

        // a ball that is (or drops) inside the cup rests on the floor and walls
        let (hw, floor, rim) = self.interior();
        let (rx, ry) = (ball[0] - cup[0], ball[1] - cup[1]);
        let entering = rel_y_before >= rim && rx.abs() <= hw && ry <= rim;
        if was_inside || entering {
            let cx = rx.clamp(-hw, hw);
            let cy = ry.max(floor);
            if cx != rx {
                bv[0] = cup_v[0];
            }
            if cy != ry {
                bv[1] = bv[1].max(cup_v[1]);
            }
            ball = [cup[0] + cx, cup[1] + cy];
        }

        EnvState::new(
            vec![cup[0], cup[1], ball[0], ball[1]],
            vec![cup_v[0], cup_v[1], bv[0], bv[1]],
        )
    }

    /// 1 when the ball sits in the cup, otherwise minus the distance from the
    /// ball to the cup mouth (floored at -1).
    pub fn reward(&self, s: &EnvState) -> f64 {
        if self.ball_in_cup(s) {
            return 1.0;
        }
        let (dx, dy) = Self::relative(s);
        let dist = (dx * dx + (dy - self.cup_height).powi(2)).sqrt();
        -dist.min(1.0)
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let cx = rng.random_range(-self.region.0..=self.region.0);
        let cy = rng.random_range(-self.region.1..=self.region.1);
        let ang = rng.random_range(-PI..PI);
        let r = self.string_length * rng.random_range(0.0f64..=1.0).sqrt();
        let bs = self.start_ball_speed;
        let cs = self.start_cup_speed;
        EnvState::new(
            vec![cx, cy, cx + r * ang.cos(), cy + r * ang.sin()],
            vec![
                rng.random_range(-cs..=cs),
                rng.random_range(-cs..=cs),
                rng.random_range(-bs..=bs),
                rng.random_range(-bs..=bs),
            ],
        )
    }

    pub(super) fn view(&self, width: usize) -> View {
        let reach = self.string_length + self.ball_radius;
        let half = (self.region.0 + reach).max(self.region.1 + reach) + 0.05;
        View::fit(0.0, 0.0, half, width)
    }

    pub(super) fn cup_shapes(&self, s: &EnvState) -> [Shape; 3] {
        let (cx, cy) = (s.q[0], s.q[1]);
        let w = self.cup_inner_half_width;
        let h = self.cup_height;
        [
            Shape::Rect {
                cx,
                cy: cy - WALL / 2.0,
                hx: w + WALL,
                hy: WALL / 2.0,
            },
            Shape::Rect {
                cx: cx - w - WALL / 2.0,
                cy: cy + h / 2.0,
                hx: WALL / 2.0,
                hy: h / 2.0 + WALL / 2.0,
            },
            Shape::Rect {
                cx: cx + w + WALL / 2.0,
                cy: cy + h / 2.0,
                hx: WALL / 2.0,
                hy: h / 2.0 + WALL / 2.0,
            },
        ]
    }

    pub(super) fn ball_shape(&self, s: &EnvState) -> Shape {
        Shape::Disc {
            cx: s.q[2],
            cy: s.q[3],
            r: self.ball_radius,
        }
    }

    pub(super) fn render(&self, s: &EnvState, canvas: &mut Canvas) {
        let view = self.view(canvas.width);
        canvas.draw(
            &view,
            &Shape::Capsule {
                ax: s.q[0],
                ay: s.q[1],
                bx: s.q[2],
                by: s.q[3],
                r: 0.006,
            },
            STRING_COLOR,
        );
        for shape in self.cup_shapes(s) {
            canvas.draw(&view, &shape, CUP_COLOR);
        }
        canvas.draw(&view, &self.ball_shape(s), BALL_COLOR);
    }

    pub(super) fn background() -> [f32; 3] {
        BACKGROUND
    }

    /// Probe targets: cup x/y, ball x/y, then their velocities.
    pub fn features(&self, s: &EnvState) -> Vec<f64> {
        s.q.iter().chain(&s.qdot).copied().collect()
    }
}
