//! Signed-distance rasterizer. Each shape is evaluated at pixel centres and
//! composited with coverage `clamp(0.5 - d, 0, 1)` where `d` is the signed
//! distance in pixels, giving one pixel of anti-aliasing.

pub type Rgb = [f32; 3];

/// Maps world coordinates (metres, y up) to pixel coordinates (y down).
#[derive(Clone, Copy, Debug)]
pub struct View {
    pub center_x: f64,
    pub center_y: f64,
    /// Pixels per metre.
    pub scale: f64,
}

impl View {
    /// View of `half_width` metres either side of `(cx, cy)` on a canvas
    /// `width` pixels wide.
    pub fn fit(cx: f64, cy: f64, half_width: f64, width: usize) -> Self {
        View {
            center_x: cx,
            center_y: cy,
            scale: width as f64 / (2.0 * half_width),
        }
    }

    pub fn to_pixel(&self, x: f64, y: f64, width: usize, height: usize) -> (f64, f64) {
        (
            (x - self.center_x) * self.scale + width as f64 / 2.0,
            height as f64 / 2.0 - (y - self.center_y) * self.scale,
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Capsule { ax: f64, ay: f64, bx: f64, by: f64, r: f64 },
    /// Axis-aligned rectangle given by centre and half extents.
    Rect { cx: f64, cy: f64, hx: f64, hy: f64 },
}

impl Shape {
    /// Signed distance in world units (negative inside).
    pub fn distance(&self, px: f64, py: f64) -> f64 {
        match *self {
            Shape::Disc { cx, cy, r } => ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() - r,
            Shape::Capsule { ax, ay, bx, by, r } => {
                let (dx, dy) = (bx - ax, by - ay);
                let (qx, qy) = (px - ax, py - ay);
                let len2 = dx * dx + dy * dy;
                let h = if len2 > 0.0 {
                    ((qx * dx + qy * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                ((qx - h * dx).powi(2) + (qy - h * dy).powi(2)).sqrt() - r
            }
            Shape::Rect { cx, cy, hx, hy } => {
                let qx = (px - cx).abs() - hx;
                let qy = (py - cy).abs() - hy;
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                outside + qx.max(qy).min(0.0)
            }
        }
    }

    /// World-space bounding box (min_x, min_y, max_x, max_y).
    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Disc { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
            Shape::Capsule { ax, ay, bx, by, r } => {
                (ax.min(bx) - r, ay.min(by) - r, ax.max(bx) + r, ay.max(by) + r)
            }
            Shape::Rect { cx, cy, hx, hy } => (cx - hx, cy - hy, cx + hx, cy + hy),
        }
    }
}

/// Row-major RGB canvas with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, background: Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&background);
        }
        Canvas {
            width,
            height,
            pixels,
        }
    }

    /// Composites `shape` over the canvas; returns the summed coverage.
    pub fn draw(&mut self, view: &View, shape: &Shape, color: Rgb) -> f64 {
        let (x0, y0, x1, y1) = shape.bounds();
        let (px0, py1) = view.to_pixel(x0, y0, self.width, self.height);
        let (px1, py0) = view.to_pixel(x1, y1, self.width, self.height);
        let clamp = |v: f64, hi: usize| v.clamp(0.0, hi as f64) as usize;
        let (ix0, ix1) = (clamp(px0 - 1.0, self.width), clamp(px1 + 2.0, self.width));
        let (iy0, iy1) = (clamp(py0 - 1.0, self.height), clamp(py1 + 2.0, self.height));
        let inv = 1.0 / view.scale;
        let mut total = 0.0;
        for iy in iy0..iy1 {
            let wy = view.center_y - ((iy as f64 + 0.5) - self.height as f64 / 2.0) * inv;
            for ix in ix0..ix1 {
                let wx = view.center_x + ((ix as f64 + 0.5) - self.width as f64 / 2.0) * inv;
                let d = shape.distance(wx, wy) * view.scale;
                let cov = (0.5 - d).clamp(0.0, 1.0);
                if cov <= 0.0 {
                    continue;
                }
                total += cov;
                let c = cov as f32;
                let p = &mut self.pixels[(iy * self.width + ix) * 3..][..3];
                for k in 0..3 {
                    p[k] = p[k] * (1.0 - c) + color[k] * c;
                }
            }
        }
        total
    }

    /// Number of pixels at least half covered by `shape`.
    pub fn footprint(&self, view: &View, shape: &Shape) -> usize {
        let mut n = 0;
        for iy in 0..self.height {
            for ix in 0..self.width {
                let wx = view.center_x + ((ix as f64 + 0.5) - self.width as f64 / 2.0) / view.scale;
                let wy = view.center_y - ((iy as f64 + 0.5) - self.height as f64 / 2.0) / view.scale;
                if shape.distance(wx, wy) * view.scale <= 0.0 {
                    n += 1;
                }
            }
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_coverage_approximates_area() {
        let mut c = Canvas::new(64, 64, [0.0; 3]);
        let view = View::fit(0.0, 0.0, 1.0, 64);
        let r = 0.3;
        let cov = c.draw(&view, &Shape::Disc { cx: 0.1, cy: -0.2, r }, [1.0; 3]);
        let area_px = std::f64::consts::PI * (r * view.scale).powi(2);
        assert!((cov - area_px).abs() / area_px < 0.02, "{cov} vs {area_px}");
    }

    #[test]
    fn rect_distance_signs() {
        let s = Shape::Rect { cx: 0.0, cy: 0.0, hx: 1.0, hy: 0.5 };
        assert!(s.distance(0.0, 0.0) < 0.0);
        assert!((s.distance(2.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((s.distance(0.0, 0.25) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn pixels_stay_in_unit_range() {
        let mut c = Canvas::new(16, 16, [0.9, 0.9, 0.9]);
        let view = View::fit(0.0, 0.0, 1.0, 16);
        for _ in 0..3 {
            c.draw(&view, &Shape::Capsule { ax: -1.0, ay: -1.0, bx: 1.0, by: 0.7, r: 0.2 }, [0.1, 0.9, 0.2]);
        }
        assert!(c.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
