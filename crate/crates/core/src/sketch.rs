//! Procedural binary line drawings used as desk-scale exemplars and test
//! sketches.

use crate::image::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

/// Stamps round-brush strokes onto a white canvas.
#[derive(Clone, Debug)]
pub struct Pen {
    image: GrayImage,
    radius: f64,
}

impl Pen {
    pub fn new(width: usize, height: usize, radius: f64) -> Self {
        Pen {
            image: GrayImage::filled(width, height, 1.0),
            radius,
        }
    }

    pub fn dot(&mut self, cx: f64, cy: f64) {
        let r = self.radius;
        let (w, h) = (self.image.width() as isize, self.image.height() as isize);
        let x0 = (cx - r).floor() as isize;
        let y0 = (cy - r).floor() as isize;
        for y in y0.max(0)..=((cy + r).ceil() as isize).min(h - 1) {
            for x in x0.max(0)..=((cx + r).ceil() as isize).min(w - 1) {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    self.image.set(x as usize, y as usize, 0.0);
                }
            }
        }
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)]) {
        if let [only] = pts {
            self.dot(only.0, only.1);
        }
        for seg in pts.windows(2) {
            let ((ax, ay), (bx, by)) = (seg[0], seg[1]);
            let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
            let steps = (len * 4.0).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                self.dot(ax + t * (bx - ax), ay + t * (by - ay));
            }
        }
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64)) {
        self.polyline(&[a, b]);
    }

    /// Elliptical arc from angle `start` spanning `sweep` radians.
    pub fn arc(&mut self, c: (f64, f64), rx: f64, ry: f64, start: f64, sweep: f64) {
        let n = ((rx.max(ry) * sweep.abs()).ceil() as usize).max(8);
        let pts: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let a = start + sweep * i as f64 / n as f64;
                (c.0 + rx * a.cos(), c.1 + ry * a.sin())
            })
            .collect();
        self.polyline(&pts);
    }

    pub fn finish(self) -> GrayImage {
        self.image
    }
}

/// A random doodle of lines, ellipses, arcs and waves; deterministic in
/// `seed`. Stroke width is about 3 px.
pub fn draw(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pen = Pen::new(width, height, 1.6);
    let (w, h) = (width as f64, height as f64);
    let strokes = ((w * h) / 3000.0).round().max(2.0) as usize;
    let pt = |rng: &mut ChaCha8Rng| {
        (
            rng.random_range(0.15..0.85) * w,
            rng.random_range(0.15..0.85) * h,
        )
    };
    for _ in 0..strokes {
        match rng.random_range(0..4) {
            0 => {
                let (a, b) = (pt(&mut rng), pt(&mut rng));
                pen.line(a, b);
            }
            1 => {
                let c = pt(&mut rng);
                let rx = rng.random_range(0.08..0.3) * w;
                let ry = rng.random_range(0.08..0.3) * h;
                pen.arc(c, rx, ry, 0.0, TAU);
            }
            2 => {
                let c = pt(&mut rng);
                let r = rng.random_range(0.1..0.35) * w.min(h);
                let start = rng.random_range(0.0..TAU);
                let sweep = rng.random_range(1.5..4.5);
                pen.arc(c, r, r, start, sweep);
            }
            _ => {
                let (a, b) = (pt(&mut rng), pt(&mut rng));
                let amp = rng.random_range(0.03..0.08) * w.min(h);
                let waves = rng.random_range(1.0..3.0);
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len = (dx * dx + dy * dy).sqrt().max(1.0);
                let (nx, ny) = (-dy / len, dx / len);
                let pts: Vec<(f64, f64)> = (0..=64)
                    .map(|i| {
                        let t = i as f64 / 64.0;
                        let off = amp * (t * waves * TAU).sin();
                        (a.0 + t * dx + off * nx, a.1 + t * dy + off * ny)
                    })
                    .collect();
                pen.polyline(&pts);
            }
        }
    }
    pen.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drawings_are_deterministic_binary_and_inked() {
        let a = draw(96, 80, 7);
        assert_eq!(a, draw(96, 80, 7));
        assert_ne!(a, draw(96, 80, 8));
        assert!(a.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(a.ink_count() > 100);
    }

    #[test]
    fn pen_strokes() {
        let mut pen = Pen::new(10, 10, 0.5);
        pen.line((0.5, 5.5), (9.5, 5.5));
        let img = pen.finish();
        assert_eq!(img.ink_count(), 10);
        assert!((0..10).all(|x| img.is_ink(x, 5)));
    }
}
