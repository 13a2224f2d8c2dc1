//! Z-buffer rasterizer for surface grids: pinhole cameras, one point light,
//! Lambertian shading and procedural albedo textures.

use std::f64::consts::PI;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::surface::SurfaceState;
use crate::error::{CoreError, Result};
use crate::raster::BinaryMask;

type V3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    Checker,
    Noise,
    Stripes,
    Gradient,
    /// Uniform albedo, the textureless case.
    Plain,
}

impl TextureKind {
    pub const ALL: [TextureKind; 5] =
        [TextureKind::Checker, TextureKind::Noise, TextureKind::Stripes, TextureKind::Gradient, TextureKind::Plain];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub id: u32,
    pub kind: TextureKind,
    /// Textures marked unknown are never used for training.
    pub known: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub id: u32,
    pub position: V3,
    pub target: V3,
    pub up: V3,
    pub focal_px: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Light {
    pub id: u32,
    pub position: V3,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub ambient: f64,
    pub camera_distance: f64,
    /// Focal length as a multiple of the image width.
    pub focal_scale: f64,
    pub texture_seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { width: 224, height: 224, ambient: 0.15, camera_distance: 3.2, focal_scale: 1.15, texture_seed: 17 }
    }
}

#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub image: RgbImage,
    /// Pixels covered by the surface.
    pub footprint: BinaryMask,
    pub state_id: u32,
    pub texture_id: u32,
    pub illumination_id: u32,
    pub camera_id: u32,
}

/// Lights, cameras and textures that make up a dataset's rendering setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub config: RenderConfig,
    pub textures: Vec<TextureSpec>,
    pub lights: Vec<Light>,
    pub cameras: Vec<Camera>,
}

impl Scene {
    /// `textures` ids map onto [`TextureKind::ALL`] in order.
    pub fn standard(
        config: RenderConfig,
        textures: usize,
        lights: usize,
        cameras: usize,
        unknown_texture: Option<u32>,
    ) -> Result<Self> {
        if textures == 0 || textures > TextureKind::ALL.len() || lights == 0 || cameras == 0 {
            return Err(CoreError::Argument(format!(
                "need 1..={} textures and at least one light and camera (got {textures}, {lights}, {cameras})",
                TextureKind::ALL.len()
            )));
        }
        if config.width < 8 || config.height < 8 {
            return Err(CoreError::Argument("render size must be at least 8x8".into()));
        }
        let textures = (0..textures as u32)
            .map(|id| TextureSpec { id, kind: TextureKind::ALL[id as usize], known: Some(id) != unknown_texture })
            .collect();
        let lights = (0..lights as u32)
            .map(|id| {
                let a = 2.0 * PI * id as f64 / lights as f64 + 0.4;
                Light { id, position: [1.8 * a.cos(), 1.8 * a.sin(), 2.6], intensity: 1.0 }
            })
            .collect();
        let d = config.camera_distance;
        let focal_px = config.focal_scale * config.width as f64;
        let cameras = (0..cameras as u32)
            .map(|id| {
                let position = if id == 0 {
                    [0.0, 0.0, d]
                } else {
                    let tilt = 20f64.to_radians();
                    let az = 2.0 * PI * (id - 1) as f64 / (cameras - 1) as f64 + PI / 4.0;
                    [d * tilt.sin() * az.cos(), d * tilt.sin() * az.sin(), d * tilt.cos()]
                };
                Camera { id, position, target: [0.0; 3], up: [0.0, 1.0, 0.0], focal_px }
            })
            .collect();
        Ok(Self { config, textures, lights, cameras })
    }

    pub fn render(
        &self,
        state: &SurfaceState,
        texture_id: u32,
        illumination_id: u32,
        camera_id: u32,
    ) -> Result<RenderedFrame> {
        let tex = self
            .textures
            .get(texture_id as usize)
            .ok_or_else(|| CoreError::Argument(format!("unknown texture id {texture_id}")))?;
        let light = self
            .lights
            .get(illumination_id as usize)
            .ok_or_else(|| CoreError::Argument(format!("unknown illumination id {illumination_id}")))?;
        let cam = self
            .cameras
            .get(camera_id as usize)
            .ok_or_else(|| CoreError::Argument(format!("unknown camera id {camera_id}")))?;
        let texture = Texture::new(tex.kind, self.config.texture_seed ^ texture_id as u64);
        let (image, footprint) = rasterize(state, &texture, light, cam, &self.config)?;
        Ok(RenderedFrame {
            image,
            footprint,
            state_id: state.state_id,
            texture_id,
            illumination_id,
            camera_id,
        })
    }
}

struct Texture {
    kind: TextureKind,
    lattice: Vec<f64>,
}

const LATTICE: usize = 12;

impl Texture {
    fn new(kind: TextureKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = (0..LATTICE * LATTICE * 2).map(|_| rng.random::<f64>()).collect();
        Self { kind, lattice }
    }

    fn value_noise(&self, u: f64, v: f64, octave: usize) -> f64 {
        let base = octave * LATTICE * LATTICE;
        let n = (LATTICE - 1) as f64;
        let (fx, fy) = (u.clamp(0.0, 1.0) * n, v.clamp(0.0, 1.0) * n);
        let (x0, y0) = ((fx as usize).min(LATTICE - 2), (fy as usize).min(LATTICE - 2));
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - x0 as f64), smooth(fy - y0 as f64));
        let at = |x: usize, y: usize| self.lattice[base + y * LATTICE + x];
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bot = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bot * ty
    }

    /// Albedo in [0, 1] at texture coordinates (u, v) in [0, 1]^2.
    fn albedo(&self, u: f64, v: f64) -> V3 {
        let mix = |a: V3, b: V3, t: f64| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t];
        match self.kind {
            TextureKind::Checker => {
                let parity = ((u * 8.0).floor() as i64 + (v * 8.0).floor() as i64).rem_euclid(2);
                if parity == 0 {
                    [0.85, 0.22, 0.16]
                } else {
                    [0.95, 0.88, 0.70]
                }
            }
            TextureKind::Noise => {
                let n = 0.65 * self.value_noise(u, v, 0) + 0.35 * self.value_noise((u * 3.0).fract(), (v * 3.0).fract(), 1);
                mix([0.45, 0.10, 0.55], [0.20, 0.85, 0.75], n)
            }
            TextureKind::Stripes => {
                let t = 0.5 + 0.5 * (2.0 * PI * 6.0 * (u + 0.5 * v)).sin();
                mix([0.10, 0.30, 0.85], [0.98, 0.98, 0.95], t)
            }
            TextureKind::Gradient => [0.25 + 0.75 * u, 0.9 * v, 0.9 - 0.6 * u],
            TextureKind::Plain => [0.8, 0.8, 0.8],
        }
    }
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn normalize(a: V3) -> V3 {
    let n = dot(a, a).sqrt();
    if n > 0.0 {
        [a[0] / n, a[1] / n, a[2] / n]
    } else {
        a
    }
}

pub(crate) fn vertex_normals(s: &SurfaceState) -> Vec<V3> {
    let (rows, cols) = (s.rows(), s.cols());
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let du = sub(s.at(r, (c + 1).min(cols - 1)), s.at(r, c.saturating_sub(1)));
            let dv = sub(s.at((r + 1).min(rows - 1), c), s.at(r.saturating_sub(1), c));
            out.push(normalize(cross(du, dv)));
        }
    }
    out
}

struct Fragment {
    depth: f64,
    uv: [f64; 2],
    pos: V3,
    normal: V3,
}

fn rasterize(
    s: &SurfaceState,
    texture: &Texture,
    light: &Light,
    cam: &Camera,
    cfg: &RenderConfig,
) -> Result<(RgbImage, BinaryMask)> {
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let forward = normalize(sub(cam.target, cam.position));
    let right = normalize(cross(forward, cam.up));
    let cam_up = cross(right, forward);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let near = 1e-3;

    let (rows, cols) = (s.rows(), s.cols());
    let normals = vertex_normals(s);
    // screen x, screen y, camera depth
    let proj: Vec<V3> = s
        .points()
        .iter()
        .map(|&p| {
            let d = sub(p, cam.position);
            let (x, y, z) = (dot(d, right), dot(d, cam_up), dot(d, forward));
            [cx + cam.focal_px * x / z, cy - cam.focal_px * y / z, z]
        })
        .collect();

    let mut frags: Vec<Option<Fragment>> = (0..w * h).map(|_| None).collect();
    let uv_of = |i: usize| [(i % cols) as f64 / (cols - 1) as f64, (i / cols) as f64 / (rows - 1) as f64];

    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let i00 = r * cols + c;
            let (i01, i10, i11) = (i00 + 1, i00 + cols, i00 + cols + 1);
            for tri in [[i00, i01, i11], [i00, i11, i10]] {
                let [a, b, cc] = tri.map(|i| proj[i]);
                if a[2] <= near || b[2] <= near || cc[2] <= near {
                    continue;
                }
                let area = (b[0] - a[0]) * (cc[1] - a[1]) - (b[1] - a[1]) * (cc[0] - a[0]);
                if area.abs() < 1e-12 {
                    continue;
                }
                let x0 = a[0].min(b[0]).min(cc[0]).floor().max(0.0) as usize;
                let x1 = (a[0].max(b[0]).max(cc[0]).ceil() as i64).min(w as i64 - 1);
                let y0 = a[1].min(b[1]).min(cc[1]).floor().max(0.0) as usize;
                let y1 = (a[1].max(b[1]).max(cc[1]).ceil() as i64).min(h as i64 - 1);
                if x1 < 0 || y1 < 0 {
                    continue;
                }
                for py in y0..=y1 as usize {
                    for px in x0..=x1 as usize {
                        let (sx, sy) = (px as f64 + 0.5, py as f64 + 0.5);
                        let edge = |p: V3, q: V3| (q[0] - p[0]) * (sy - p[1]) - (q[1] - p[1]) * (sx - p[0]);
                        let l0 = edge(b, cc) / area;
                        let l1 = edge(cc, a) / area;
                        let l2 = edge(a, b) / area;
                        if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                            continue;
                        }
                        let wts = [l0 / a[2], l1 / b[2], l2 / cc[2]];
                        let depth = 1.0 / (wts[0] + wts[1] + wts[2]);
                        let slot = &mut frags[py * w + px];
                        if slot.as_ref().is_some_and(|f| f.depth <= depth) {
                            continue;
                        }
                        let mut uv = [0.0; 2];
                        let mut pos = [0.0; 3];
                        let mut normal = [0.0; 3];
                        for (k, &vi) in tri.iter().enumerate() {
                            let wk = wts[k] * depth;
                            let tuv = uv_of(vi);
                            let p = s.points()[vi];
                            let n = normals[vi];
                            for j in 0..2 {
                                uv[j] += wk * tuv[j];
                            }
                            for j in 0..3 {
                                pos[j] += wk * p[j];
                                normal[j] += wk * n[j];
                            }
                        }
                        *slot = Some(Fragment { depth, uv, pos, normal: normalize(normal) });
                    }
                }
            }
        }
    }

    let mut img = RgbImage::new(cfg.width, cfg.height);
    let mut mask = BinaryMask::new(w, h);
    let d_ref = dot(light.position, light.position).sqrt();
    for (idx, f) in frags.iter().enumerate() {
        let Some(f) = f else { continue };
        let (px, py) = (idx % w, idx / w);
        let mut n = f.normal;
        if dot(n, sub(cam.position, f.pos)) < 0.0 {
            n = [-n[0], -n[1], -n[2]];
        }
        let l = sub(light.position, f.pos);
        let dist = dot(l, l).sqrt();
        let diffuse = (dot(n, l) / dist).max(0.0) * light.intensity * (d_ref / dist).powi(2);
        let shade = cfg.ambient + (1.0 - cfg.ambient) * diffuse;
        let alb = texture.albedo(f.uv[0], f.uv[1]);
        let to_u8 = |v: f64| (v * shade * 255.0).round().clamp(0.0, 255.0) as u8;
        img.put_pixel(px as u32, py as u32, Rgb([to_u8(alb[0]), to_u8(alb[1]), to_u8(alb[2])]));
        mask.set(px, py, true);
    }
    if mask.is_empty() {
        return Err(CoreError::Render(format!(
            "state {} is entirely outside the view of camera {}",
            s.state_id, cam.id
        )));
    }
    Ok((img, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_normals_of_flat_plane_point_up() {
        let s = SurfaceState::rest(0, 5, 5);
        for n in vertex_normals(&s) {
            assert!((n[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scene_id_validation() {
        let scene = Scene::standard(RenderConfig::default(), 4, 2, 2, Some(3)).unwrap();
        assert!(!scene.textures[3].known);
        assert!(scene.textures[0].known);
        let s = SurfaceState::rest(0, 9, 9);
        assert!(scene.render(&s, 4, 0, 0).is_err());
        assert!(scene.render(&s, 0, 2, 0).is_err());
        assert!(Scene::standard(RenderConfig::default(), 6, 1, 1, None).is_err());
    }
}
