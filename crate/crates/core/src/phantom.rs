//! Synthetic inclusions and their material fields.

use crate::error::{Error, Result};
use crate::fem::MaterialField;
use crate::mesh::{Mesh, PixelGrid, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disc { center: Point, radius: f64 },
    /// Axis-aligned `[x0, x1] × [y0, y1]`.
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Axis-aligned with semi-axes `(a, b)`.
    Ellipse { center: Point, a: f64, b: f64 },
}

impl Shape {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Shape::Disc { center, radius } => {
                (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) < radius * radius
            }
            Shape::Rect { x0, x1, y0, y1 } => p[0] > x0 && p[0] < x1 && p[1] > y0 && p[1] < y1,
            Shape::Ellipse { center, a, b } => {
                ((p[0] - center[0]) / a).powi(2) + ((p[1] - center[1]) / b).powi(2) < 1.0
            }
        }
    }

    /// `(xmin, xmax, ymin, ymax)`.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Disc { center, radius } => (
                center[0] - radius,
                center[0] + radius,
                center[1] - radius,
                center[1] + radius,
            ),
            Shape::Rect { x0, x1, y0, y1 } => (x0, x1, y0, y1),
            Shape::Ellipse { center, a, b } => (center[0] - a, center[0] + a, center[1] - b, center[1] + b),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Rect { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
            Shape::Ellipse { a, b, .. } => std::f64::consts::PI * a * b,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Disc { .. } => "disc",
            Shape::Rect { .. } => "rect",
            Shape::Ellipse { .. } => "ellipse",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Shape::Disc { center, radius } => vec![center[0], center[1], radius],
            Shape::Rect { x0, x1, y0, y1 } => vec![x0, x1, y0, y1],
            Shape::Ellipse { center, a, b } => vec![center[0], center[1], a, b],
        }
    }

    pub fn from_params(kind: &str, p: &[f64]) -> Result<Self> {
        let want = match kind {
            "disc" => 3,
            "rect" | "ellipse" => 4,
            _ => return Err(Error::InvalidPhantom(format!("unknown shape `{kind}`"))),
        };
        if p.len() != want {
            return Err(Error::InvalidPhantom(format!("{kind} takes {want} numbers, got {}", p.len())));
        }
        let s = match kind {
            "disc" => Shape::Disc {
                center: [p[0], p[1]],
                radius: p[2],
            },
            "rect" => Shape::Rect {
                x0: p[0],
                x1: p[1],
                y0: p[2],
                y1: p[3],
            },
            _ => Shape::Ellipse {
                center: [p[0], p[1]],
                a: p[2],
                b: p[3],
            },
        };
        Ok(s)
    }
}

/// A shape and the values it imposes; `None` leaves that parameter alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub shape: Shape,
    pub values: [Option<f64>; 3],
}

impl Inclusion {
    pub fn perturbs(&self, p: usize) -> bool {
        self.values[p].is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Phantom {
    pub inclusions: Vec<Inclusion>,
}

const CONNECTIVITY_GRID: usize = 256;

impl Phantom {
    pub fn new(inclusions: Vec<Inclusion>) -> Self {
        Phantom { inclusions }
    }

    /// Shapes strictly inside the unit square, positive size and values,
    /// and the complement of the union reachable from the boundary.
    pub fn validate(&self) -> Result<()> {
        for (i, inc) in self.inclusions.iter().enumerate() {
            let (x0, x1, y0, y1) = inc.shape.bbox();
            let ok_size = match inc.shape {
                Shape::Disc { radius, .. } => radius > 0.0,
                Shape::Rect { x0, x1, y0, y1 } => x1 > x0 && y1 > y0,
                Shape::Ellipse { a, b, .. } => a > 0.0 && b > 0.0,
            };
            if !ok_size {
                return Err(Error::InvalidPhantom(format!("inclusion {i} has empty extent")));
            }
            if !(x0 > 0.0 && x1 < 1.0 && y0 > 0.0 && y1 < 1.0) {
                return Err(Error::InvalidPhantom(format!(
                    "inclusion {i} ({}) leaves the open unit square",
                    inc.shape.kind()
                )));
            }
            if inc.values.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidPhantom(format!("inclusion {i} has a nonpositive value")));
            }
            if inc.values.iter().all(Option::is_none) {
                return Err(Error::InvalidPhantom(format!("inclusion {i} perturbs no parameter")));
            }
        }
        if !self.complement_connected(CONNECTIVITY_GRID) {
            return Err(Error::InvalidPhantom("complement of the inclusions is not connected to the boundary".into()));
        }
        Ok(())
    }

    fn complement_connected(&self, n: usize) -> bool {
        let h = 1.0 / n as f64;
        let inside: Vec<bool> = (0..n * n)
            .map(|k| {
                let p = [((k % n) as f64 + 0.5) * h, ((k / n) as f64 + 0.5) * h];
                self.inclusions.iter().any(|i| i.shape.contains(p))
            })
            .collect();
        let mut seen = vec![false; n * n];
        let mut stack: Vec<usize> = (0..n * n)
            .filter(|&k| {
                let (i, j) = (k % n, k / n);
                (i == 0 || j == 0 || i == n - 1 || j == n - 1) && !inside[k]
            })
            .collect();
        for &k in &stack {
            seen[k] = true;
        }
        while let Some(k) = stack.pop() {
            let (i, j) = (k % n, k / n);
            let mut push = |q: usize| {
                if !inside[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if i > 0 {
                push(k - 1);
            }
            if i + 1 < n {
                push(k + 1);
            }
            if j > 0 {
                push(k - n);
            }
            if j + 1 < n {
                push(k + n);
            }
        }
        (0..n * n).all(|k| inside[k] || seen[k])
    }

    /// Whether `p` lies in a shape perturbing parameter `param`
    /// (`None` means any parameter).
    pub fn covers(&self, p: Point, param: Option<usize>) -> bool {
        self.inclusions
            .iter()
            .any(|i| param.is_none_or(|q| i.perturbs(q)) && i.shape.contains(p))
    }

    /// Pixel-center rasterization of the support.
    pub fn rasterize(&self, grid: &PixelGrid, param: Option<usize>) -> Vec<bool> {
        grid.centers().into_iter().map(|c| self.covers(c, param)).collect()
    }
}

/// Background field with each element overridden when its centroid lies in
/// an inclusion; later inclusions win on overlap.
pub fn build_phantom_material(mesh: &Mesh, background: [f64; 3], phantom: &Phantom) -> Result<MaterialField> {
    phantom.validate()?;
    let ne = mesh.num_elements();
    let mut fields = [vec![background[0]; ne], vec![background[1]; ne], vec![background[2]; ne]];
    for e in 0..ne {
        let c = mesh.centroid(e);
        for inc in phantom.inclusions.iter().filter(|i| i.shape.contains(c)) {
            for (p, v) in inc.values.iter().enumerate() {
                if let Some(v) = v {
                    fields[p][e] = *v;
                }
            }
        }
    }
    let [l, m, r] = fields;
    MaterialField::new(l, m, r)
}
