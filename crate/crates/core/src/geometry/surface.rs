use std::path::Path;

use ismo_nn::Tensor;

use crate::error::{CoreError, Result};

pub const DEFAULT_GRID: usize = 73;

/// A regular grid of 3-D points. The rest configuration spans [-1, 1]^2 at z = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceState {
    pub state_id: u32,
    rows: usize,
    cols: usize,
    points: Vec<[f64; 3]>,
}

/// Relative deviation of 4-neighbour edge lengths from the rest spacing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeAudit {
    pub mean_rel_dev: f64,
    pub max_rel_dev: f64,
    pub edges: usize,
}

impl EdgeAudit {
    pub fn passes(&self, mean_tol: f64, max_tol: f64) -> bool {
        self.mean_rel_dev < mean_tol && self.max_rel_dev < max_tol
    }
}

impl SurfaceState {
    pub fn new(state_id: u32, rows: usize, cols: usize, points: Vec<[f64; 3]>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(CoreError::Shape(format!("surface grid must be at least 2x2, got {rows}x{cols}")));
        }
        if points.len() != rows * cols {
            return Err(CoreError::Shape(format!(
                "surface has {} points, expected {rows}x{cols}",
                points.len()
            )));
        }
        Ok(Self { state_id, rows, cols, points })
    }

    /// The flat rest grid.
    pub fn rest(state_id: u32, rows: usize, cols: usize) -> Self {
        let mut points = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let (x, y) = rest_xy(r, c, rows, cols);
                points.push([x, y, 0.0]);
            }
        }
        Self { state_id, rows, cols, points }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> [f64; 3] {
        self.points[r * self.cols + c]
    }

    pub fn rest_spacing(&self) -> (f64, f64) {
        (2.0 / (self.cols - 1) as f64, 2.0 / (self.rows - 1) as f64)
    }

    pub fn edge_audit(&self) -> EdgeAudit {
        let (hx, hy) = self.rest_spacing();
        let (mut sum, mut max, mut n) = (0.0, 0.0f64, 0usize);
        let mut visit = |a: [f64; 3], b: [f64; 3], rest: f64| {
            let d = dist(a, b);
            let dev = (d - rest).abs() / rest;
            sum += dev;
            max = max.max(dev);
            n += 1;
        };
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c + 1 < self.cols {
                    visit(self.at(r, c), self.at(r, c + 1), hx);
                }
                if r + 1 < self.rows {
                    visit(self.at(r, c), self.at(r + 1, c), hy);
                }
            }
        }
        EdgeAudit { mean_rel_dev: sum / n as f64, max_rel_dev: max, edges: n }
    }

    /// Mean distance of the points from the rest grid, a simple deformation size.
    pub fn deformation_magnitude(&self) -> f64 {
        let mut sum = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (x, y) = rest_xy(r, c, self.rows, self.cols);
                sum += dist(self.at(r, c), [x, y, 0.0]);
            }
        }
        sum / self.points.len() as f64
    }

    /// Channel-first `[3, rows, cols]` tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let plane = self.rows * self.cols;
        let mut data = vec![0f32; 3 * plane];
        for (i, p) in self.points.iter().enumerate() {
            for k in 0..3 {
                data[k * plane + i] = p[k] as f32;
            }
        }
        Tensor::from_vec(&[3, self.rows, self.cols], data).expect("consistent shape")
    }

    /// Inverse of [`to_tensor`](Self::to_tensor); accepts `[3, r, c]` or `[1, 3, r, c]`.
    pub fn from_tensor<T: ismo_nn::Scalar>(state_id: u32, t: &Tensor<T>) -> Result<Self> {
        let (rows, cols) = match t.shape() {
            [3, r, c] | [1, 3, r, c] => (*r, *c),
            s => return Err(CoreError::Shape(format!("expected a [3,H,W] surface tensor, got {s:?}"))),
        };
        let plane = rows * cols;
        let d = t.data();
        let points = (0..plane).map(|i| [d[i].f64(), d[plane + i].f64(), d[2 * plane + i].f64()]).collect();
        Self::new(state_id, rows, cols, points)
    }

    /// Little-endian f32, row-major `rows x cols x 3`.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * 12);
        for p in &self.points {
            for v in p {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_f32_bytes(state_id: u32, rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != rows * cols * 12 {
            return Err(CoreError::Shape(format!(
                "surface file has {} bytes, expected {} for a {rows}x{cols} grid",
                bytes.len(),
                rows * cols * 12
            )));
        }
        let points = bytes
            .chunks_exact(12)
            .map(|ch| {
                let f = |i: usize| f32::from_le_bytes(ch[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
                [f(0), f(1), f(2)]
            })
            .collect();
        Self::new(state_id, rows, cols, points)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_f32_bytes()).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path, state_id: u32, rows: usize, cols: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_f32_bytes(state_id, rows, cols, &bytes)
    }
}

pub(crate) fn rest_xy(r: usize, c: usize, rows: usize, cols: usize) -> (f64, f64) {
    (-1.0 + 2.0 * c as f64 / (cols - 1) as f64, -1.0 + 2.0 * r as f64 / (rows - 1) as f64)
}

#[inline]
pub(crate) fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
