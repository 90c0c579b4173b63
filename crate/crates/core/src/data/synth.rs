//! Procedural "toy faces": an identity is a fixed set of geometric and color
//! parameters; an instance renders it under a random similarity transform,
//! brightness change and background.

use rand::Rng;

use crate::detection::BBox;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Head half-height in pixels at scale 1, as a fraction of the shorter tile side.
const NOMINAL_HALF_HEIGHT: f32 = 0.25;
/// Box coordinates are snapped to this grid so integer translations are exact.
const BOX_QUANTUM: f32 = 64.0;
const MAX_RETRIES: usize = 64;
const SUPERSAMPLE: usize = 2;

/// Identity geometry in head units (head half-height = 1) and colors.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticIdentity {
    pub id: u32,
    /// Head half-width.
    pub head_width: f32,
    pub eye_dx: f32,
    pub eye_dy: f32,
    pub eye_radius: f32,
    pub mouth_dy: f32,
    pub mouth_half_width: f32,
    pub mouth_half_height: f32,
    /// Hair covers the head above `-hair_line`.
    pub hair_line: f32,
    /// Cheek mark: side (-1 or 1) and radius, if any.
    pub mark: Option<(f32, f32)>,
    pub skin: [f32; 3],
    pub hair: [f32; 3],
    pub eyes: [f32; 3],
    pub mouth: [f32; 3],
}

fn color(rng: &mut impl Rng, lo: f32, hi: f32) -> [f32; 3] {
    [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)]
}

impl SyntheticIdentity {
    /// Deterministic in `(seed, id)`.
    pub fn generate(seed: u64, id: u32) -> Self {
        let mut rng = seed::rng(seed, "identity", &[u64::from(id)]);
        SyntheticIdentity {
            id,
            head_width: rng.gen_range(0.68..0.88),
            eye_dx: rng.gen_range(0.25..0.45),
            eye_dy: rng.gen_range(0.05..0.35),
            eye_radius: rng.gen_range(0.09..0.18),
            mouth_dy: rng.gen_range(0.38..0.62),
            mouth_half_width: rng.gen_range(0.12..0.4),
            mouth_half_height: rng.gen_range(0.04..0.11),
            hair_line: rng.gen_range(0.4..0.85),
            mark: rng
                .gen_bool(0.6)
                .then(|| (if rng.gen_bool(0.5) { -1.0 } else { 1.0 }, rng.gen_range(0.08..0.14))),
            skin: color(&mut rng, 0.35, 0.95),
            hair: color(&mut rng, 0.0, 0.6),
            eyes: color(&mut rng, 0.0, 0.3),
            mouth: color(&mut rng, 0.3, 0.95),
        }
    }

    /// Color of the face at head-unit coordinates `(u, v)`, if inside the head.
    fn shade(&self, u: f32, v: f32) -> Option<[f32; 3]> {
        if (u / self.head_width).powi(2) + v * v > 1.0 {
            return None;
        }
        let inside = |cx: f32, cy: f32, r: f32| (u - cx).powi(2) + (v - cy).powi(2) <= r * r;
        if (inside(-self.eye_dx, -self.eye_dy, self.eye_radius))
            || inside(self.eye_dx, -self.eye_dy, self.eye_radius)
        {
            return Some(self.eyes);
        }
        if u.abs() <= self.mouth_half_width && (v - self.mouth_dy).abs() <= self.mouth_half_height {
            return Some(self.mouth);
        }
        if let Some((side, r)) = self.mark {
            if inside(side * 0.5 * self.head_width, 0.2, r) {
                return Some(self.eyes);
            }
        }
        if v < -self.hair_line {
            return Some(self.hair);
        }
        Some(self.skin)
    }
}

/// Per-instance variation. Translation is in pixels from the tile center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nuisance {
    /// Radians, counter-clockwise in image coordinates.
    pub rotation: f32,
    pub scale: f32,
    pub tx: f32,
    pub ty: f32,
    /// Multiplicative brightness offset: pixels scale by `1 + brightness`.
    pub brightness: f32,
    pub background: u64,
}

impl Nuisance {
    pub fn none() -> Self {
        Nuisance {
            rotation: 0.0,
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
            brightness: 0.0,
            background: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceRanges {
    pub max_rotation_deg: f32,
    pub scale: (f32, f32),
    /// Maximum shift as a fraction of tile size.
    pub max_shift: f32,
    pub max_brightness: f32,
}

impl Default for NuisanceRanges {
    fn default() -> Self {
        NuisanceRanges {
            max_rotation_deg: 30.0,
            scale: (0.7, 1.3),
            max_shift: 0.15,
            max_brightness: 0.2,
        }
    }
}

impl NuisanceRanges {
    pub fn sample(&self, rng: &mut impl Rng, canvas: (usize, usize)) -> Nuisance {
        let sym = |rng: &mut dyn rand::RngCore, m: f32| {
            if m > 0.0 {
                rng.gen_range(-m..=m)
            } else {
                0.0
            }
        };
        Nuisance {
            rotation: sym(rng, self.max_rotation_deg).to_radians(),
            scale: if self.scale.0 < self.scale.1 {
                rng.gen_range(self.scale.0..=self.scale.1)
            } else {
                self.scale.0
            },
            tx: sym(rng, self.max_shift) * canvas.1 as f32,
            ty: sym(rng, self.max_shift) * canvas.0 as f32,
            brightness: sym(rng, self.max_brightness),
            background: rng.gen(),
        }
    }
}

fn head_pixels(canvas: (usize, usize), scale: f32) -> f32 {
    canvas.0.min(canvas.1) as f32 * NOMINAL_HALF_HEIGHT * scale
}

fn quantize(v: f32) -> f32 {
    (v * BOX_QUANTUM).round() / BOX_QUANTUM
}

/// Tight box of the rotated head ellipse.
pub fn face_box(identity: &SyntheticIdentity, n: &Nuisance, canvas: (usize, usize)) -> BBox {
    let s = head_pixels(canvas, n.scale);
    let (a, b) = (identity.head_width * s, s);
    let (sin, cos) = n.rotation.sin_cos();
    let hw = ((a * cos).powi(2) + (b * sin).powi(2)).sqrt();
    let hh = ((a * sin).powi(2) + (b * cos).powi(2)).sqrt();
    let cx = canvas.1 as f32 / 2.0 + n.tx;
    let cy = canvas.0 as f32 / 2.0 + n.ty;
    BBox::new(
        quantize(cx - hw),
        quantize(cy - hh),
        quantize(cx + hw),
        quantize(cy + hh),
    )
}

fn background(n: &Nuisance, canvas: (usize, usize)) -> Tensor {
    let (h, w) = canvas;
    let mut rng = seed::rng(n.background, "background", &[]);
    let base = color(&mut rng, 0.1, 0.9);
    let tilt = color(&mut rng, -0.3, 0.3);
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let (sa, ca) = angle.sin_cos();
    let mut img = Tensor::zeros(&[3, h, w]);
    let data = img.data_mut();
    for y in 0..h {
        for x in 0..w {
            let t = ((x as f32 / w as f32 - 0.5) * ca + (y as f32 / h as f32 - 0.5) * sa) * 2.0;
            for c in 0..3 {
                let noise: f32 = rng.gen_range(-0.04..0.04);
                data[(c * h + y) * w + x] = (base[c] + tilt[c] * t + noise).clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// Render a tile; pixels are in `[0, 1]`, layout `[3, H, W]`.
pub fn render_face(identity: &SyntheticIdentity, n: &Nuisance, canvas: (usize, usize)) -> Tensor {
    let (h, w) = canvas;
    let mut img = background(n, canvas);
    let s = head_pixels(canvas, n.scale);
    let (sin, cos) = n.rotation.sin_cos();
    let cx = w as f32 / 2.0 + n.tx;
    let cy = h as f32 / 2.0 + n.ty;
    let gain = 1.0 + n.brightness;
    let sub = SUPERSAMPLE as f32;
    let data = img.data_mut();
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 3];
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f32 + (sx as f32 + 0.5) / sub - cx;
                    let py = y as f32 + (sy as f32 + 0.5) / sub - cy;
                    // Inverse rotation into head units.
                    let u = (cos * px + sin * py) / s;
                    let v = (-sin * px + cos * py) / s;
                    if let Some(col) = identity.shade(u, v) {
                        for c in 0..3 {
                            acc[c] += col[c];
                        }
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let cover = hits as f32 / (sub * sub);
            for c in 0..3 {
                let i = (c * h + y) * w + x;
                let face = (acc[c] / hits as f32 * gain).clamp(0.0, 1.0);
                data[i] = data[i] * (1.0 - cover) + face * cover;
            }
        }
    }
    img
}

/// Render with fixed nuisance; errors if the face does not fit the tile.
pub fn synth_face(
    identity: &SyntheticIdentity,
    n: &Nuisance,
    canvas: (usize, usize),
) -> Result<(Tensor, BBox, u32)> {
    let b = face_box(identity, n, canvas);
    if b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > canvas.1 as f32 || b.y2 > canvas.0 as f32 {
        return Err(Error::Input(format!(
            "face {} does not fit a {}x{} tile",
            identity.id, canvas.0, canvas.1
        )));
    }
    Ok((render_face(identity, n, canvas), b, identity.id))
}

/// Sample nuisance until the face fits, up to a fixed number of attempts.
pub fn synth_face_sampled(
    identity: &SyntheticIdentity,
    ranges: &NuisanceRanges,
    canvas: (usize, usize),
    rng: &mut impl Rng,
) -> Result<(Tensor, BBox, Nuisance)> {
    for _ in 0..MAX_RETRIES {
        let n = ranges.sample(rng, canvas);
        if let Ok((img, b, _)) = synth_face(identity, &n, canvas) {
            return Ok((img, b, n));
        }
    }
    Err(Error::Input(format!(
        "no nuisance in {MAX_RETRIES} attempts fits face {} in a {}x{} tile",
        identity.id, canvas.0, canvas.1
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_deterministic() {
        assert_eq!(SyntheticIdentity::generate(3, 7), SyntheticIdentity::generate(3, 7));
        assert_ne!(SyntheticIdentity::generate(3, 7), SyntheticIdentity::generate(3, 8));
    }

    #[test]
    fn zero_nuisance_twice_is_identical() {
        let id = SyntheticIdentity::generate(1, 2);
        let a = synth_face(&id, &Nuisance::none(), (48, 48)).unwrap();
        let b = synth_face(&id, &Nuisance::none(), (48, 48)).unwrap();
        assert_eq!(a.0.data(), b.0.data());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn translation_moves_box() {
        let id = SyntheticIdentity::generate(1, 3);
        let a = face_box(&id, &Nuisance::none(), (64, 64));
        let n = Nuisance {
            tx: 5.0,
            ty: -3.0,
            ..Nuisance::none()
        };
        let b = face_box(&id, &n, (64, 64));
        assert_eq!((b.x1 - a.x1, b.y1 - a.y1, b.x2 - a.x2, b.y2 - a.y2), (5.0, -3.0, 5.0, -3.0));
    }

    #[test]
    fn oversized_face_is_rejected() {
        let id = SyntheticIdentity::generate(1, 4);
        let n = Nuisance {
            scale: 3.0,
            ..Nuisance::none()
        };
        assert!(synth_face(&id, &n, (48, 48)).is_err());
    }

    #[test]
    fn pixels_in_unit_range() {
        let id = SyntheticIdentity::generate(9, 1);
        let mut rng = seed::rng(0, "t", &[]);
        let (img, b, _) = synth_face_sampled(&id, &NuisanceRanges::default(), (48, 48), &mut rng).unwrap();
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(b.is_valid() && b.x2 <= 48.0 && b.y2 <= 48.0);
    }
}
