//! Experiment configuration and its line-oriented text format.
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Phantom inclusions are repeated `shape = ...` lines in `[phantom]`:
//! `shape = <disc|rect|ellipse> <numbers...> [lambda[=v]] [mu[=v]] [rho[=v]]`.
//! A bare parameter name uses the inclusion value from `[material]`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::MeshScheme;
use crate::phantom::{Inclusion, Phantom, Shape};
use crate::tsvd::{EnergyCriterion, TruncationMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MonoTest,
    Constrained,
    Combined,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MonoTest => "mono_test",
            Method::Constrained => "constrained",
            Method::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mono_test" => Some(Method::MonoTest),
            "constrained" => Some(Method::Constrained),
            "combined" => Some(Method::Combined),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Single,
    Disjoint,
}

impl Support {
    pub fn name(self) -> &'static str {
        match self {
            Support::Single => "single",
            Support::Disjoint => "disjoint",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single" => Some(Support::Single),
            "disjoint" => Some(Support::Disjoint),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mesh_n: usize,
    pub scheme: MeshScheme,
    /// Subdivisions of the mesh that generates the data; `0` reuses `mesh_n`.
    pub data_mesh_n: usize,
    pub patches: usize,
    pub pixels_x: usize,
    pub pixels_y: usize,
    pub balls_per_side: usize,
    pub ball_radius: f64,
    /// `(λ₀, μ₀, ρ₀)`.
    pub background: [f64; 3],
    /// `(λ₁, μ₁, ρ₁)`.
    pub inclusion: [f64; 3],
    /// `(λ_min, μ_min, ρ_min)`; `None` uses `inclusion − background`.
    pub min_contrast: Option<[f64; 3]>,
    /// Test constants; `None` uses the largest admissible ones.
    pub test_constants: Option<[f64; 3]>,
    pub phantom: Phantom,
    pub delta: f64,
    pub seed: u64,
    pub method: Method,
    pub support: Support,
    pub tau: f64,
    pub criterion: EnergyCriterion,
    pub truncation: TruncationMode,
    pub tol: f64,
    pub max_iter: usize,
    pub polish_rounds: usize,
    pub threshold: f64,
    pub write_sensitivities: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mesh_n: 51,
            scheme: MeshScheme::RightDiagonal,
            data_mesh_n: 0,
            patches: 19,
            pixels_x: 20,
            pixels_y: 20,
            balls_per_side: 10,
            ball_radius: 0.045,
            background: [1.0; 3],
            inclusion: [2.0; 3],
            min_contrast: None,
            test_constants: None,
            phantom: Phantom::new(vec![Inclusion {
                shape: Shape::Disc {
                    center: [0.5, 0.5],
                    radius: 0.15,
                },
                values: [Some(2.0); 3],
            }]),
            delta: 0.0,
            seed: 1,
            method: Method::Constrained,
            support: Support::Single,
            tau: 0.99,
            criterion: EnergyCriterion::Linear,
            truncation: TruncationMode::PerPixel,
            tol: 1e-8,
            max_iter: 5000,
            polish_rounds: 50,
            threshold: 0.5,
            write_sensitivities: true,
            out: PathBuf::from("out"),
        }
    }
}

const PARAMS: [&str; 3] = ["lambda", "mu", "rho"];

fn triple(line: usize, v: &str) -> Result<[f64; 3]> {
    let vals: Vec<f64> = v
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config {
            line,
            message: format!("`{v}`: {e}"),
        })?;
    vals.try_into().map_err(|_| Error::Config {
        line,
        message: format!("expected three numbers, got `{v}`"),
    })
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| Error::Config {
        line,
        message: format!("{key}: `{v}`: {e}"),
    })
}

fn word<T>(line: usize, key: &str, v: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
    parse(v).ok_or_else(|| Error::Config {
        line,
        message: format!("{key}: unknown value `{v}`"),
    })
}

fn fmt_triple(t: [f64; 3]) -> String {
    format!("{} {} {}", t[0], t[1], t[2])
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        let mut phantom_seen = false;
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
                section = name.trim().to_string();
                if section == "phantom" && !phantom_seen {
                    phantom_seen = true;
                    c.phantom = Phantom::default();
                }
                continue;
            }
            let (key, v) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            let (key, v) = (key.trim(), v.trim());
            match (section.as_str(), key) {
                ("mesh", "n") => c.mesh_n = num(line, key, v)?,
                ("mesh", "scheme") => c.scheme = word(line, key, v, MeshScheme::parse)?,
                ("mesh", "data_n") => c.data_mesh_n = num(line, key, v)?,
                ("measurement", "patches") => c.patches = num(line, key, v)?,
                ("pixels", "nx") => c.pixels_x = num(line, key, v)?,
                ("pixels", "ny") => c.pixels_y = num(line, key, v)?,
                ("balls", "per_side") => c.balls_per_side = num(line, key, v)?,
                ("balls", "radius") => c.ball_radius = num(line, key, v)?,
                ("material", "background") => c.background = triple(line, v)?,
                ("material", "inclusion") => c.inclusion = triple(line, v)?,
                ("material", "min_contrast") => c.min_contrast = Some(triple(line, v)?),
                ("test", "constants") => c.test_constants = Some(triple(line, v)?),
                ("phantom", "shape") => c.phantom.inclusions.push(parse_shape(line, v, c.inclusion)?),
                ("noise", "delta") => c.delta = num(line, key, v)?,
                ("noise", "seed") => c.seed = num(line, key, v)?,
                ("method", "name") => c.method = word(line, key, v, Method::parse)?,
                ("method", "support") => c.support = word(line, key, v, Support::parse)?,
                ("tsvd", "tau") => c.tau = num(line, key, v)?,
                ("tsvd", "criterion") => c.criterion = word(line, key, v, EnergyCriterion::parse)?,
                ("tsvd", "mode") => c.truncation = word(line, key, v, TruncationMode::parse)?,
                ("solver", "tol") => c.tol = num(line, key, v)?,
                ("solver", "max_iter") => c.max_iter = num(line, key, v)?,
                ("solver", "polish_rounds") => c.polish_rounds = num(line, key, v)?,
                ("solver", "threshold") => c.threshold = num(line, key, v)?,
                ("output", "dir") => c.out = PathBuf::from(v),
                ("output", "sensitivities") => c.write_sensitivities = num(line, key, v)?,
                _ => {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown key `{key}` in section [{section}]"),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        writeln!(w, "[mesh]\nn = {}\nscheme = {}\ndata_n = {}", self.mesh_n, self.scheme.name(), self.data_mesh_n).unwrap();
        writeln!(w, "\n[measurement]\npatches = {}", self.patches).unwrap();
        writeln!(w, "\n[pixels]\nnx = {}\nny = {}", self.pixels_x, self.pixels_y).unwrap();
        writeln!(w, "\n[balls]\nper_side = {}\nradius = {}", self.balls_per_side, self.ball_radius).unwrap();
        writeln!(w, "\n[material]\nbackground = {}", fmt_triple(self.background)).unwrap();
        writeln!(w, "inclusion = {}", fmt_triple(self.inclusion)).unwrap();
        if let Some(t) = self.min_contrast {
            writeln!(w, "min_contrast = {}", fmt_triple(t)).unwrap();
        }
        if let Some(t) = self.test_constants {
            writeln!(w, "\n[test]\nconstants = {}", fmt_triple(t)).unwrap();
        }
        writeln!(w, "\n[phantom]").unwrap();
        for inc in &self.phantom.inclusions {
            let nums: Vec<String> = inc.shape.params().iter().map(f64::to_string).collect();
            write!(w, "shape = {} {}", inc.shape.kind(), nums.join(" ")).unwrap();
            for (p, v) in inc.values.iter().enumerate() {
                if let Some(v) = v {
                    write!(w, " {}={}", PARAMS[p], v).unwrap();
                }
            }
            writeln!(w).unwrap();
        }
        writeln!(w, "\n[noise]\ndelta = {}\nseed = {}", self.delta, self.seed).unwrap();
        writeln!(w, "\n[method]\nname = {}\nsupport = {}", self.method.name(), self.support.name()).unwrap();
        writeln!(
            w,
            "\n[tsvd]\ntau = {}\ncriterion = {}\nmode = {}",
            self.tau,
            self.criterion.name(),
            self.truncation.name()
        )
        .unwrap();
        writeln!(
            w,
            "\n[solver]\ntol = {}\nmax_iter = {}\npolish_rounds = {}\nthreshold = {}",
            self.tol, self.max_iter, self.polish_rounds, self.threshold
        )
        .unwrap();
        writeln!(
            w,
            "\n[output]\ndir = {}\nsensitivities = {}",
            self.out.display(),
            self.write_sensitivities
        )
        .unwrap();
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::Config { line: 0, message });
        if self.mesh_n < 2 {
            return bad(format!("mesh n = {} must be at least 2", self.mesh_n));
        }
        if self.data_mesh_n != 0 && self.data_mesh_n % self.mesh_n != 0 {
            return bad(format!("data_n = {} must be a multiple of n = {}", self.data_mesh_n, self.mesh_n));
        }
        if self.patches == 0 || self.pixels_x == 0 || self.pixels_y == 0 || self.balls_per_side == 0 {
            return bad("patch, pixel and ball counts must be positive".into());
        }
        let phys = self.background.iter().chain(&self.inclusion).chain(self.min_contrast.iter().flatten());
        if phys.clone().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("material values must be positive".into());
        }
        if !(self.ball_radius > 0.0) {
            return bad("ball radius must be positive".into());
        }
        if let Some(t) = self.test_constants {
            if t.iter().any(|v| !(*v >= 0.0)) || !(t.iter().sum::<f64>() > 0.0) {
                return bad("test constants must be nonnegative with positive sum".into());
            }
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return bad(format!("delta = {} must be ≥ 0", self.delta));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau = {} must lie in (0,1)", self.tau));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold = {} must lie in (0,1)", self.threshold));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("solver tolerance and iteration budget must be positive".into());
        }
        self.phantom.validate().or_else(|e| bad(e.to_string()))
    }

    /// `(λ_min, μ_min, ρ_min)` actually used for the box bounds.
    pub fn effective_min_contrast(&self) -> Result<[f64; 3]> {
        if let Some(t) = self.min_contrast {
            return Ok(t);
        }
        let d = [
            self.inclusion[0] - self.background[0],
            self.inclusion[1] - self.background[1],
            self.inclusion[2] - self.background[2],
        ];
        if d.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config {
                line: 0,
                message: "inclusion values must exceed the background unless min_contrast is given".into(),
            });
        }
        Ok(d)
    }
}

fn parse_shape(line: usize, v: &str, defaults: [f64; 3]) -> Result<Inclusion> {
    let mut toks = v.split_whitespace();
    let kind = toks.next().ok_or_else(|| Error::Config {
        line,
        message: "empty shape".into(),
    })?;
    let mut nums = Vec::new();
    let mut values = [None; 3];
    for t in toks {
        let (name, val) = match t.split_once('=') {
            Some((n, v)) => (n, Some(v)),
            None => (t, None),
        };
        if let Some(p) = PARAMS.iter().position(|q| *q == name) {
            values[p] = Some(match val {
                Some(v) => num(line, name, v)?,
                None => defaults[p],
            });
        } else {
            nums.push(num::<f64>(line, "shape", t)?);
        }
    }
    if values.iter().all(Option::is_none) {
        values = defaults.map(Some);
    }
    let shape = Shape::from_params(kind, &nums).map_err(|e| Error::Config {
        line,
        message: e.to_string(),
    })?;
    Ok(Inclusion { shape, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn shape_defaults_and_overrides() {
        let text = "[material]\ninclusion = 3 4 5\n[phantom]\nshape = disc 0.5 0.5 0.1\nshape = rect 0.2 0.3 0.2 0.3 mu rho=7\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.phantom.inclusions[0].values, [Some(3.0), Some(4.0), Some(5.0)]);
        assert_eq!(c.phantom.inclusions[1].values, [None, Some(4.0), Some(7.0)]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match ExperimentConfig::parse("[mesh]\nn = 10\nbogus = 1\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("[tsvd]\ntau = 1.5\n").is_err());
        assert!(ExperimentConfig::parse("[method]\nname = magic\n").is_err());
        assert!(ExperimentConfig::parse("[phantom]\nshape = disc 0.05 0.5 0.1\n").is_err());
    }

    fn shape_strategy() -> impl Strategy<Value = Inclusion> {
        (0.3f64..0.7, 0.3f64..0.7, 0.01f64..0.2, 0.01f64..0.2, 0u8..3, proptest::bool::ANY, 1.0f64..5.0).prop_map(
            |(x, y, a, b, kind, only_mu, v)| {
                let shape = match kind {
                    0 => Shape::Disc {
                        center: [x, y],
                        radius: a,
                    },
                    1 => Shape::Rect {
                        x0: x - a,
                        x1: x + b,
                        y0: y - b,
                        y1: y + a,
                    },
                    _ => Shape::Ellipse { center: [x, y], a, b },
                };
                let values = if only_mu { [None, Some(v), None] } else { [Some(v), Some(v + 1.0), Some(2.5)] };
                Inclusion { shape, values }
            },
        )
    }

    proptest! {
        #[test]
        fn parse_serialize_parse(
            n in 2usize..80, m in 1usize..30, px in 1usize..40,
            bg in 0.5f64..2.0, inc in 2.5f64..4.0,
            delta in 0.0f64..0.5, seed in any::<u64>(), tau in 0.01f64..0.999,
            shape in shape_strategy(), method in 0u8..3, disjoint in proptest::bool::ANY,
            consts in proptest::option::of((0.0f64..1.0, 0.1f64..1.0, 0.0f64..1.0)),
        ) {
            let c = ExperimentConfig {
                mesh_n: n,
                data_mesh_n: 2 * n,
                patches: m,
                pixels_x: px,
                pixels_y: px + 1,
                background: [bg, bg * 1.1, bg * 0.9],
                inclusion: [inc; 3],
                test_constants: consts.map(|(a, b, c)| [a, b, c]),
                phantom: Phantom::new(vec![shape]),
                delta,
                seed,
                tau,
                method: [Method::MonoTest, Method::Constrained, Method::Combined][method as usize],
                support: if disjoint { Support::Disjoint } else { Support::Single },
                criterion: EnergyCriterion::Squared,
                ..ExperimentConfig::default()
            };
            let once = ExperimentConfig::parse(&c.to_text()).unwrap();
            prop_assert_eq!(&once, &c);
            let twice = ExperimentConfig::parse(&once.to_text()).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
