//! Procedural corpora for tests and desk-scale experiments.
//!
//! * bars: single vertical or horizontal bars, for checking that STDP
//!   pretraining develops oriented filters.
//! * glyphs: handwritten-character stand-ins. Each class is a prototype of
//!   two to four quadratic strokes; each sample redraws the prototype with
//!   jittered control points and a small random affine transform.

use std::path::Path;

use crate::episodes::{ClassCorpus, ClassRecord};
use crate::error::Result;
use crate::pixels::PixelGrid;
use crate::rng::SimRng;

/// Bar image: `length` pixels long, `width` wide, top-left at `(x, y)`.
pub fn bar_image(side: usize, vertical: bool, x: usize, y: usize, length: usize, width: usize) -> PixelGrid {
    let mut img = PixelGrid::zeros(side, side);
    let (w, h) = if vertical { (width, length) } else { (length, width) };
    for yy in y..(y + h).min(side) {
        for xx in x..(x + w).min(side) {
            img.set(xx, yy, 1.0);
        }
    }
    img
}

/// Two classes ("vertical", "horizontal") of randomly placed bars.
pub fn bar_corpus(side: usize, per_class: usize, rng: &mut SimRng) -> ClassCorpus {
    let length = side / 2;
    let width = 2;
    let classes = [true, false]
        .into_iter()
        .map(|vertical| ClassRecord {
            id: if vertical { "vertical".into() } else { "horizontal".into() },
            images: (0..per_class)
                .map(|_| {
                    let (xmax, ymax) = if vertical { (side - width, side - length) } else { (side - length, side - width) };
                    let x = rng.below(xmax + 1);
                    let y = rng.below(ymax + 1);
                    bar_image(side, vertical, x, y, length, width)
                })
                .collect(),
        })
        .collect();
    ClassCorpus { classes }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlyphStyle {
    /// Canvas side in pixels.
    pub side: usize,
    /// Stroke half-width as a fraction of the canvas.
    pub thickness: f32,
    /// Std-dev of control-point jitter (canvas fractions).
    pub jitter: f32,
    /// Max rotation (radians) of the per-sample affine.
    pub max_rotation: f32,
    /// Max relative scale change of the per-sample affine.
    pub max_scale: f32,
    /// Max translation (canvas fractions).
    pub max_shift: f32,
}

impl Default for GlyphStyle {
    fn default() -> Self {
        Self {
            side: 28,
            thickness: 0.045,
            jitter: 0.035,
            max_rotation: 0.15,
            max_scale: 0.1,
            max_shift: 0.05,
        }
    }
}

type Stroke = [(f32, f32); 3];

fn random_prototype(rng: &mut SimRng) -> Vec<Stroke> {
    let n = 2 + rng.below(3);
    (0..n)
        .map(|_| {
            let p0 = (rng.range_f32(0.15, 0.85), rng.range_f32(0.15, 0.85));
            let p2 = (rng.range_f32(0.15, 0.85), rng.range_f32(0.15, 0.85));
            let p1 = (rng.range_f32(0.1, 0.9), rng.range_f32(0.1, 0.9));
            [p0, p1, p2]
        })
        .collect()
}

fn dist_to_segment(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn render(strokes: &[Stroke], style: &GlyphStyle) -> PixelGrid {
    const SEGMENTS: usize = 16;
    let side = style.side;
    let mut img = PixelGrid::zeros(side, side);
    let polylines: Vec<Vec<(f32, f32)>> = strokes
        .iter()
        .map(|[p0, p1, p2]| {
            (0..=SEGMENTS)
                .map(|k| {
                    let t = k as f32 / SEGMENTS as f32;
                    let u = 1.0 - t;
                    (
                        u * u * p0.0 + 2.0 * u * t * p1.0 + t * t * p2.0,
                        u * u * p0.1 + 2.0 * u * t * p1.1 + t * t * p2.1,
                    )
                })
                .collect()
        })
        .collect();
    let px = 1.0 / side as f32;
    for y in 0..side {
        for x in 0..side {
            let p = ((x as f32 + 0.5) * px, (y as f32 + 0.5) * px);
            let d = polylines
                .iter()
                .flat_map(|pl| pl.windows(2).map(move |s| dist_to_segment(p, s[0], s[1])))
                .fold(f32::INFINITY, f32::min);
            // one-pixel soft edge
            let v = ((style.thickness - d) / px + 0.5).clamp(0.0, 1.0);
            img.set(x, y, v);
        }
    }
    img
}

fn distort(proto: &[Stroke], style: &GlyphStyle, rng: &mut SimRng) -> Vec<Stroke> {
    let angle = rng.range_f32(-style.max_rotation, style.max_rotation);
    let scale = 1.0 + rng.range_f32(-style.max_scale, style.max_scale);
    let shift = (
        rng.range_f32(-style.max_shift, style.max_shift),
        rng.range_f32(-style.max_shift, style.max_shift),
    );
    let (s, c) = angle.sin_cos();
    proto
        .iter()
        .map(|stroke| {
            let mut out = *stroke;
            for p in out.iter_mut() {
                let jx = p.0 + style.jitter * rng.normal() - 0.5;
                let jy = p.1 + style.jitter * rng.normal() - 0.5;
                *p = (
                    scale * (c * jx - s * jy) + 0.5 + shift.0,
                    scale * (s * jx + c * jy) + 0.5 + shift.1,
                );
            }
            out
        })
        .collect()
}

/// `n_classes` glyph classes with `per_class` samples each, bright strokes on
/// a dark background.
pub fn glyph_corpus(n_classes: usize, per_class: usize, style: &GlyphStyle, rng: &mut SimRng) -> ClassCorpus {
    let classes = (0..n_classes)
        .map(|c| {
            let proto = random_prototype(rng);
            ClassRecord {
                id: format!("glyph{c:04}"),
                images: (0..per_class).map(|_| render(&distort(&proto, style, rng), style)).collect(),
            }
        })
        .collect();
    ClassCorpus { classes }
}

/// Writes a corpus as `<root>/<class_id>/<NN>.png`. With `dark_strokes` the
/// images are inverted first, matching Omniglot's native polarity.
pub fn write_corpus(corpus: &ClassCorpus, root: &Path, dark_strokes: bool) -> Result<()> {
    for class in &corpus.classes {
        let dir = root.join(&class.id);
        std::fs::create_dir_all(&dir)?;
        for (i, img) in class.images.iter().enumerate() {
            let img = if dark_strokes { img.invert() } else { img.clone() };
            img.save_png(&dir.join(format!("{i:02}.png")))?;
        }
    }
    Ok(())
}
