//! Structured triangulations of the unit square, the Neumann/Dirichlet
//! boundary split, and the region families (pixels, test balls) whose
//! per-element overlap weights drive the sensitivity integrals.
//!
//! The Dirichlet part of the boundary is the top side `{y = 1}`; the
//! Neumann part is the other three sides, parametrized by arclength
//! `s ∈ [0, 3]` counterclockwise from `(0, 1)`: down the left side, along
//! the bottom, then up the right side.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Total arclength of the Neumann boundary (three unit sides).
pub const NEUMANN_LENGTH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    /// Outward unit normal of the unit square on this side.
    pub fn outward_normal(self) -> Point {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    pub fn is_neumann(self) -> bool {
        self != Side::Top
    }

    fn of_edge(a: Point, b: Point) -> Option<Side> {
        const EPS: f64 = 1e-12;
        if a[0].abs() < EPS && b[0].abs() < EPS {
            Some(Side::Left)
        } else if (a[0] - 1.0).abs() < EPS && (b[0] - 1.0).abs() < EPS {
            Some(Side::Right)
        } else if a[1].abs() < EPS && b[1].abs() < EPS {
            Some(Side::Bottom)
        } else if (a[1] - 1.0).abs() < EPS && (b[1] - 1.0).abs() < EPS {
            Some(Side::Top)
        } else {
            None
        }
    }
}

/// Arclength coordinate of a point on the Neumann boundary.
pub fn neumann_arclength(p: Point, side: Side) -> f64 {
    match side {
        Side::Left => 1.0 - p[1],
        Side::Bottom => 1.0 + p[0],
        Side::Right => 2.0 + p[1],
        Side::Top => f64::NAN,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshScheme {
    /// Each grid cell split by its lower-left to upper-right diagonal (2n² triangles).
    RightDiagonal,
    /// Each grid cell split into four triangles through its center (4n² triangles).
    Crossed,
}

impl MeshScheme {
    pub fn name(self) -> &'static str {
        match self {
            MeshScheme::RightDiagonal => "right",
            MeshScheme::Crossed => "crossed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "right" | "right-diagonal" => Some(MeshScheme::RightDiagonal),
            "crossed" => Some(MeshScheme::Crossed),
            _ => None,
        }
    }
}

/// A boundary edge, oriented counterclockwise around the square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub side: Side,
    pub element: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    element_areas: Vec<f64>,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    /// Builds a mesh from raw node and triangle lists, validating orientation
    /// and recovering the labelled boundary.
    pub fn from_parts(nodes: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut element_areas = Vec::with_capacity(triangles.len());
        for (e, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {e} references a missing node"
                )));
            }
            let area = signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {e} has non-positive signed area {area:e}"
                )));
            }
            element_areas.push(area);
        }

        // Edge -> (uses, element, oriented pair as it appears in the element).
        let mut edges: BTreeMap<(usize, usize), (usize, usize, [usize; 2])> = BTreeMap::new();
        for (e, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                let entry = edges.entry(key).or_insert((0, e, [a, b]));
                entry.0 += 1;
            }
        }

        let mut boundary_edges = Vec::new();
        for (uses, element, pair) in edges.into_values() {
            if uses != 1 {
                continue;
            }
            let (a, b) = (nodes[pair[0]], nodes[pair[1]]);
            let side = Side::of_edge(a, b).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "boundary edge {pair:?} does not lie on the unit square boundary"
                ))
            })?;
            let length = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            boundary_edges.push(BoundaryEdge {
                nodes: pair,
                side,
                element,
                length,
            });
        }

        let mut mesh = Mesh {
            nodes,
            triangles,
            boundary_edges,
            element_areas,
        };
        mesh.sort_boundary();
        Ok(mesh)
    }

    // Neumann edges by arclength first, then Dirichlet edges by decreasing x.
    fn sort_boundary(&mut self) {
        let nodes = &self.nodes;
        let key = |e: &BoundaryEdge| -> (u8, f64) {
            let mid = [
                0.5 * (nodes[e.nodes[0]][0] + nodes[e.nodes[1]][0]),
                0.5 * (nodes[e.nodes[0]][1] + nodes[e.nodes[1]][1]),
            ];
            if e.side.is_neumann() {
                (0, neumann_arclength(mid, e.side))
            } else {
                (1, -mid[0])
            }
        };
        self.boundary_edges
            .sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite coordinates"));
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn element_areas(&self) -> &[f64] {
        &self.element_areas
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.element_areas.iter().sum()
    }

    pub fn vertices(&self, element: usize) -> [Point; 3] {
        let t = self.triangles[element];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn centroid(&self, element: usize) -> Point {
        let [a, b, c] = self.vertices(element);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Nodes lying on the Dirichlet side `{y = 1}`.
    pub fn is_dirichlet_node(&self, node: usize) -> bool {
        (self.nodes[node][1] - 1.0).abs() < 1e-12
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                let a = self.nodes[t[k]];
                let b = self.nodes[t[(k + 1) % 3]];
                h = h.max(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Indices into [`Mesh::boundary_edges`] of Neumann edges, in arclength order.
    pub fn neumann_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary_edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.side.is_neumann())
            .map(|(i, _)| i)
    }

    /// Arclength interval `[start, end]` covered by a Neumann edge.
    pub fn edge_arclength(&self, edge: usize) -> (f64, f64) {
        let e = &self.boundary_edges[edge];
        let s0 = neumann_arclength(self.nodes[e.nodes[0]], e.side);
        let s1 = neumann_arclength(self.nodes[e.nodes[1]], e.side);
        (s0.min(s1), s0.max(s1))
    }

    /// Plain-text export: a `nodes N` block of `x y` lines followed by a
    /// `triangles T` block of `a b c` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "nodes {}", self.nodes.len()).unwrap();
        for p in &self.nodes {
            writeln!(out, "{} {}", p[0], p[1]).unwrap();
        }
        writeln!(out, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let count = |line: Option<&str>, tag: &str| -> Result<usize> {
            let line = line.ok_or_else(|| Error::Parse(format!("missing `{tag}` header")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(tag) {
                return Err(Error::Parse(format!("expected `{tag}` header, got `{line}`")));
            }
            it.next()
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad count in `{line}`")))
        };
        let n_nodes = count(lines.next(), "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = lines.next().ok_or_else(|| Error::Parse("truncated node list".into()))?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("node `{line}`: {e}")))?;
            if v.len() != 2 {
                return Err(Error::Parse(format!("node `{line}` needs two coordinates")));
            }
            nodes.push([v[0], v[1]]);
        }
        let n_tri = count(lines.next(), "triangles")?;
        let mut triangles = Vec::with_capacity(n_tri);
        for _ in 0..n_tri {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated triangle list".into()))?;
            let v: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("triangle `{line}`: {e}")))?;
            if v.len() != 3 {
                return Err(Error::Parse(format!("triangle `{line}` needs three nodes")));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        Mesh::from_parts(nodes, triangles)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Mesh::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Structured triangulation of `[0,1]²` with `n` cells per side.
///
/// Nodes are numbered row by row from `y = 0` upward; for the crossed scheme
/// each row of cell centers follows its lower grid row, which keeps the
/// stiffness bandwidth proportional to `n`.
pub fn generate_unit_square_mesh(n: usize, scheme: MeshScheme) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "mesh needs at least 2 subdivisions per side, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let mut nodes = Vec::new();
    let mut grid = vec![0usize; (n + 1) * (n + 1)];
    let mut center = vec![0usize; n * n];
    for j in 0..=n {
        for i in 0..=n {
            grid[j * (n + 1) + i] = nodes.len();
            nodes.push([i as f64 * h, j as f64 * h]);
        }
        if scheme == MeshScheme::Crossed && j < n {
            for i in 0..n {
                center[j * n + i] = nodes.len();
                nodes.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            }
        }
    }
    // Exact endpoints avoid 1 - ε coordinates from i * h.
    for p in nodes.iter_mut() {
        for c in p.iter_mut() {
            if (*c - 1.0).abs() < 1e-14 {
                *c = 1.0;
            }
        }
    }

    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let a = grid[j * (n + 1) + i];
            let b = grid[j * (n + 1) + i + 1];
            let c = grid[(j + 1) * (n + 1) + i + 1];
            let d = grid[(j + 1) * (n + 1) + i];
            match scheme {
                MeshScheme::RightDiagonal => {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
                MeshScheme::Crossed => {
                    let o = center[j * n + i];
                    triangles.push([a, b, o]);
                    triangles.push([b, c, o]);
                    triangles.push([c, d, o]);
                    triangles.push([d, a, o]);
                }
            }
        }
    }
    Mesh::from_parts(nodes, triangles)
}

/// One connected piece of the Neumann boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Indices into [`Mesh::boundary_edges`], contiguous in arclength.
    pub edges: Vec<usize>,
    pub start: f64,
    pub end: f64,
}

impl Patch {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPatchSet {
    patches: Vec<Patch>,
    dirichlet_edges: Vec<usize>,
}

impl BoundaryPatchSet {
    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn dirichlet_edges(&self) -> &[usize] {
        &self.dirichlet_edges
    }

    pub fn patch_lengths(&self) -> Vec<f64> {
        self.patches.iter().map(Patch::length).collect()
    }

    /// Arclength breakpoints `[s_0, s_1, ..., s_m]` of the patches.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.patches.iter().map(|p| p.start).collect();
        if let Some(last) = self.patches.last() {
            b.push(last.end);
        }
        b
    }

    /// Rebuilds the same geometric patches on another mesh (typically a
    /// refinement), assigning each Neumann edge by its midpoint.
    pub fn transfer(&self, mesh: &Mesh) -> Result<BoundaryPatchSet> {
        let bounds = self.breakpoints();
        build_from_breakpoints(mesh, &bounds)
    }
}

fn build_from_breakpoints(mesh: &Mesh, bounds: &[f64]) -> Result<BoundaryPatchSet> {
    let m = bounds.len() - 1;
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); m];
    for e in mesh.neumann_edges() {
        let (s0, s1) = mesh.edge_arclength(e);
        let mid = 0.5 * (s0 + s1);
        let idx = bounds.partition_point(|&b| b <= mid).saturating_sub(1).min(m - 1);
        edges[idx].push(e);
    }
    let mut patches = Vec::with_capacity(m);
    for (l, list) in edges.into_iter().enumerate() {
        if list.is_empty() {
            return Err(Error::InvalidPatch {
                index: l,
                message: "no boundary edge falls inside the patch".into(),
            });
        }
        let start = mesh.edge_arclength(list[0]).0;
        let end = mesh.edge_arclength(*list.last().unwrap()).1;
        patches.push(Patch {
            edges: list,
            start,
            end,
        });
    }
    let dirichlet_edges = mesh
        .boundary_edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.side.is_neumann())
        .map(|(i, _)| i)
        .collect();
    Ok(BoundaryPatchSet {
        patches,
        dirichlet_edges,
    })
}

/// Splits the Neumann boundary into `m` contiguous patches of near-equal
/// arclength. Each edge goes to the patch whose nominal interval
/// `[3l/m, 3(l+1)/m)` contains its midpoint.
pub fn partition_neumann_boundary(mesh: &Mesh, m: usize) -> Result<BoundaryPatchSet> {
    let n_edges = mesh.neumann_edges().count();
    if m == 0 || m > n_edges {
        return Err(Error::InvalidArgument(format!(
            "patch count {m} must lie in 1..={n_edges} (number of Neumann edges)"
        )));
    }
    let nominal: Vec<f64> = (0..=m)
        .map(|l| NEUMANN_LENGTH * l as f64 / m as f64)
        .collect();
    // Patch start/end are stored edge-aligned, so `transfer` reproduces the
    // snapped geometry exactly on refined meshes.
    build_from_breakpoints(mesh, &nominal)
}

/// A measurable subset of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Domain,
    Empty,
    /// Axis-aligned cell `[x0, x1) × [y0, y1)`.
    Pixel { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Open disc.
    Ball { center: Point, radius: f64 },
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Region::Domain => true,
            Region::Empty => false,
            Region::Pixel { x0, x1, y0, y1 } => p[0] >= x0 && p[0] < x1 && p[1] >= y0 && p[1] < y1,
            Region::Ball { center, radius } => {
                (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) < radius * radius
            }
        }
    }

    /// Axis-aligned bounding box `(xmin, xmax, ymin, ymax)`.
    pub fn bbox(&self) -> Option<(f64, f64, f64, f64)> {
        match *self {
            Region::Domain => Some((f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY)),
            Region::Empty => None,
            Region::Pixel { x0, x1, y0, y1 } => Some((x0, x1, y0, y1)),
            Region::Ball { center, radius } => Some((
                center[0] - radius,
                center[0] + radius,
                center[1] - radius,
                center[1] + radius,
            )),
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Region::Domain | Region::Empty => [0.5, 0.5],
            Region::Pixel { x0, x1, y0, y1 } => [0.5 * (x0 + x1), 0.5 * (y0 + y1)],
            Region::Ball { center, .. } => center,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Region::Domain => "domain".into(),
            Region::Empty => "empty".into(),
            Region::Pixel { x0, x1, y0, y1 } => format!("pixel {x0} {x1} {y0} {y1}"),
            Region::Ball { center, radius } => format!("ball {} {} {}", center[0], center[1], radius),
        }
    }
}

/// Sparse per-element overlap fractions of a region: `(element, w_e)` with
/// `w_e ∈ (0, 1]` approximating `|element ∩ region| / |element|`.
pub type ElementWeights = Vec<(usize, f64)>;

/// Default subdivision level: 4 per edge, i.e. 16 congruent subtriangles.
pub const DEFAULT_SUBDIVISION: usize = 4;

/// Barycentric centroids of the `level²` congruent subtriangles.
fn subtriangle_centroids(level: usize) -> Vec<(f64, f64)> {
    let n = level as f64;
    let mut out = Vec::with_capacity(level * level);
    for i in 0..level {
        for j in 0..level - i {
            out.push(((i as f64 + 1.0 / 3.0) / n, (j as f64 + 1.0 / 3.0) / n));
            if i + j + 2 <= level {
                out.push(((i as f64 + 2.0 / 3.0) / n, (j as f64 + 2.0 / 3.0) / n));
            }
        }
    }
    out
}

pub fn region_quadrature_weights(mesh: &Mesh, region: &Region) -> ElementWeights {
    region_quadrature_weights_with(mesh, region, DEFAULT_SUBDIVISION)
}

/// Overlap weights by centroid counting on a `level × level` subdivision.
pub fn region_quadrature_weights_with(mesh: &Mesh, region: &Region, level: usize) -> ElementWeights {
    let Some((xmin, xmax, ymin, ymax)) = region.bbox() else {
        return Vec::new();
    };
    if matches!(region, Region::Domain) {
        return (0..mesh.num_elements()).map(|e| (e, 1.0)).collect();
    }
    let samples = subtriangle_centroids(level.max(1));
    let total = samples.len() as f64;
    let mut out = Vec::new();
    for e in 0..mesh.num_elements() {
        let [a, b, c] = mesh.vertices(e);
        let exmin = a[0].min(b[0]).min(c[0]);
        let exmax = a[0].max(b[0]).max(c[0]);
        let eymin = a[1].min(b[1]).min(c[1]);
        let eymax = a[1].max(b[1]).max(c[1]);
        if exmax < xmin || exmin > xmax || eymax < ymin || eymin > ymax {
            continue;
        }
        let hits = samples
            .iter()
            .filter(|&&(s, t)| {
                let p = [
                    a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]),
                    a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1]),
                ];
                region.contains(p)
            })
            .count();
        if hits > 0 {
            out.push((e, hits as f64 / total));
        }
    }
    out
}

/// Measure of a region as seen through its element weights.
pub fn weighted_area(mesh: &Mesh, weights: &ElementWeights) -> f64 {
    weights.iter().map(|&(e, w)| w * mesh.element_areas()[e]).sum()
}

/// A family of regions together with their element overlap weights.
pub trait RegionSet {
    fn regions(&self) -> &[Region];
    fn memberships(&self) -> &[ElementWeights];
    fn len(&self) -> usize {
        self.regions().len()
    }
    fn is_empty(&self) -> bool {
        self.regions().is_empty()
    }
}

/// `nx × ny` axis-aligned pixels covering the unit square; pixel
/// `k = j * nx + i` spans column `i`, row `j` (row 0 at `y = 0`).
#[derive(Debug, Clone)]
pub struct PixelGrid {
    pub nx: usize,
    pub ny: usize,
    pixels: Vec<Region>,
    membership: Vec<ElementWeights>,
}

impl PixelGrid {
    pub fn build(mesh: &Mesh, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("pixel grid must be non-empty".into()));
        }
        let mut pixels = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x1 = if i + 1 == nx { 1.0 + 1e-12 } else { (i + 1) as f64 / nx as f64 };
                let y1 = if j + 1 == ny { 1.0 + 1e-12 } else { (j + 1) as f64 / ny as f64 };
                pixels.push(Region::Pixel {
                    x0: i as f64 / nx as f64,
                    x1,
                    y0: j as f64 / ny as f64,
                    y1,
                });
            }
        }
        let membership = pixels
            .iter()
            .map(|p| region_quadrature_weights(mesh, p))
            .collect();
        Ok(PixelGrid {
            nx,
            ny,
            pixels,
            membership,
        })
    }

    /// Pixel index containing a point (clamped to the grid).
    pub fn locate(&self, p: Point) -> usize {
        let i = ((p[0] * self.nx as f64).floor() as isize).clamp(0, self.nx as isize - 1) as usize;
        let j = ((p[1] * self.ny as f64).floor() as isize).clamp(0, self.ny as isize - 1) as usize;
        j * self.nx + i
    }

    pub fn centers(&self) -> Vec<Point> {
        self.pixels.iter().map(Region::center).collect()
    }
}

impl RegionSet for PixelGrid {
    fn regions(&self) -> &[Region] {
        &self.pixels
    }
    fn memberships(&self) -> &[ElementWeights] {
        &self.membership
    }
}

/// Test balls on a `k × k` grid of cell centers.
#[derive(Debug, Clone)]
pub struct TestBallSet {
    balls: Vec<Region>,
    membership: Vec<ElementWeights>,
}

impl TestBallSet {
    pub fn grid(mesh: &Mesh, per_side: usize, radius: f64) -> Result<Self> {
        if per_side == 0 {
            return Err(Error::InvalidArgument("need at least one test ball".into()));
        }
        let centers = (0..per_side * per_side).map(|k| {
            let (i, j) = (k % per_side, k / per_side);
            [
                (i as f64 + 0.5) / per_side as f64,
                (j as f64 + 0.5) / per_side as f64,
            ]
        });
        Self::from_balls(mesh, centers.map(|c| (c, radius)).collect())
    }

    pub fn from_balls(mesh: &Mesh, balls: Vec<(Point, f64)>) -> Result<Self> {
        let mut regions = Vec::with_capacity(balls.len());
        for (center, radius) in balls {
            let clearance = center[0].min(1.0 - center[0]).min(center[1]).min(1.0 - center[1]);
            if !(radius > 0.0) || clearance <= radius {
                return Err(Error::InvalidArgument(format!(
                    "ball at ({}, {}) with radius {radius} is not inside the open domain",
                    center[0], center[1]
                )));
            }
            regions.push(Region::Ball { center, radius });
        }
        let membership = regions
            .iter()
            .map(|b| region_quadrature_weights(mesh, b))
            .collect();
        Ok(TestBallSet {
            balls: regions,
            membership,
        })
    }

    pub fn centers_and_radii(&self) -> Vec<(Point, f64)> {
        self.balls
            .iter()
            .map(|b| match *b {
                Region::Ball { center, radius } => (center, radius),
                _ => unreachable!("test ball set holds balls only"),
            })
            .collect()
    }
}

impl RegionSet for TestBallSet {
    fn regions(&self) -> &[Region] {
        &self.balls
    }
    fn memberships(&self) -> &[ElementWeights] {
        &self.membership
    }
}
