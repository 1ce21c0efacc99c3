//! End-to-end experiments: forward data, the three reconstruction
//! pipelines, scoring and artifact files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::config::{ExperimentConfig, Method, Support};
use crate::constrained::{
    compute_box_bounds, disjoint_constraints, minimize_disjoint_supports, minimize_single_support,
    shifted_data, single_support_constraints, BoxBounds, BoxConstraints, ReconstructionResult, SolverOptions,
};
use crate::error::{Error, Result};
use crate::fem::MaterialField;
use crate::mesh::{
    generate_unit_square_mesh, partition_neumann_boundary, BoundaryPatchSet, Mesh, PixelGrid, RegionSet,
    TestBallSet,
};
use crate::monotonicity::{
    admissible_constants, linearized_test_noiseless, linearized_test_noisy, MarkedBallSet, TestConstants,
};
use crate::ntd::{add_noise, assemble_ntd, build_load_basis, gap_matrix, ntd_from_solutions, solve_basis};
use crate::ntd::{BasisSolutions, LoadBasis, NtdMatrix};
use crate::phantom::build_phantom_material;
use crate::sensitivity::{sensitivities_from_solutions, SensitivityStack};
use crate::tsvd::{combined_reconstruct, truncate_stack_with, CombinedConstraints, TruncatedStack};

/// Names of the parameters, in block order.
pub const PARAM_NAMES: [&str; 3] = ["lambda", "mu", "rho"];

/// Everything that does not depend on the noise realization.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub mesh: Mesh,
    pub patches: BoundaryPatchSet,
    pub basis: LoadBasis,
    pub background: MaterialField,
    pub solutions: BasisSolutions,
    /// Background NtD on the inversion mesh.
    pub ntd_background: NtdMatrix,
    /// Background and true NtD on the data mesh.
    pub data_background: NtdMatrix,
    pub ntd_truth: NtdMatrix,
    /// `U = Λ̄₀ − Λ̄`.
    pub gap: DMatrix<f64>,
    pub grid: PixelGrid,
    pub balls: TestBallSet,
    pub pixel_stack: SensitivityStack,
    pub ball_stack: SensitivityStack,
    pub bounds: BoxBounds,
    pub constants: TestConstants,
}

/// One noisy (or clean) measurement of the gap.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub delta: f64,
    pub seed: u64,
    /// Realized `‖noise‖_F`, used for every `+δI` shift.
    pub abs_noise: f64,
    /// `Λ̄^δ = Λ̄ − Λ̄₀ + noise`.
    pub noisy_difference: DMatrix<f64>,
    /// `U^δ = −Λ̄^δ`.
    pub data: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct MonoOutcome {
    pub marks: MarkedBallSet,
    pub raster: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub result: ReconstructionResult,
    pub constraints: Vec<BoxConstraints>,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mesh = generate_unit_square_mesh(c.mesh_n, c.scheme)?;
        let patches = partition_neumann_boundary(&mesh, c.patches)?;
        let basis = build_load_basis(&mesh, &patches)?;
        let ne = mesh.num_elements();
        let background = MaterialField::uniform(ne, c.background[0], c.background[1], c.background[2])?;
        let solutions = solve_basis(&mesh, &background, &basis)?;
        let ntd_background = ntd_from_solutions(&solutions, &background, &basis)?;

        let (data_background, ntd_truth) = if c.data_mesh_n == 0 || c.data_mesh_n == c.mesh_n {
            let truth = build_phantom_material(&mesh, c.background, &c.phantom)?;
            (ntd_background.clone(), assemble_ntd(&mesh, &truth, &basis)?)
        } else {
            let fine = generate_unit_square_mesh(c.data_mesh_n, c.scheme)?;
            let fine_basis = build_load_basis(&fine, &patches.transfer(&fine)?)?;
            let fine_bg = MaterialField::uniform(fine.num_elements(), c.background[0], c.background[1], c.background[2])?;
            let truth = build_phantom_material(&fine, c.background, &c.phantom)?;
            (assemble_ntd(&fine, &fine_bg, &fine_basis)?, assemble_ntd(&fine, &truth, &fine_basis)?)
        };
        let gap = gap_matrix(&data_background, &ntd_truth)?;

        let grid = PixelGrid::build(&mesh, c.pixels_x, c.pixels_y)?;
        let balls = TestBallSet::grid(&mesh, c.balls_per_side, c.ball_radius)?;
        let stack = |set: &dyn RegionSet| {
            sensitivities_from_solutions(
                &mesh,
                &solutions.displacements,
                set.regions(),
                set.memberships(),
                &background.id(),
                basis.id(),
            )
        };
        let pixel_stack = stack(&grid);
        let ball_stack = stack(&balls);

        let mins = c.effective_min_contrast()?;
        let bounds = compute_box_bounds(c.background[0], c.background[1], c.background[2], mins[0], mins[1], mins[2])?;
        let constants = match c.test_constants {
            Some(t) => TestConstants::new(t[0], t[1], t[2])?,
            None => admissible_constants(
                c.background[0],
                c.inclusion[0],
                c.background[1],
                c.inclusion[1],
                c.background[2],
                c.inclusion[2],
            )?,
        };
        Ok(Setup {
            config: c.clone(),
            mesh,
            patches,
            basis,
            background,
            solutions,
            ntd_background,
            data_background,
            ntd_truth,
            gap,
            grid,
            balls,
            pixel_stack,
            ball_stack,
            bounds,
            constants,
        })
    }

    /// Noise of relative size `delta` added to `Λ̄ − Λ̄₀`.
    pub fn measure(&self, delta: f64, seed: u64) -> Result<Measurement> {
        let sample = add_noise(&(-&self.gap), delta, seed)?;
        Ok(Measurement {
            delta,
            seed,
            abs_noise: sample.abs_norm,
            data: -&sample.matrix,
            noisy_difference: sample.matrix,
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.config.tol,
            max_iter: self.config.max_iter,
            polish_rounds: self.config.polish_rounds,
        }
    }

    /// Noiseless test when `delta = 0`, noisy test otherwise.
    pub fn mono_test(&self, meas: &Measurement) -> Result<MonoOutcome> {
        let marks = if meas.delta == 0.0 {
            linearized_test_noiseless(&meas.data, &self.ball_stack, &self.constants)?
        } else {
            linearized_test_noisy(&meas.noisy_difference, &self.ball_stack, &self.constants, meas.abs_noise)?
        };
        let raster = marks.rasterize(&self.balls.centers_and_radii(), &self.grid);
        Ok(MonoOutcome { marks, raster })
    }

    fn constraints(&self, meas: &Measurement, support: Support) -> Result<Vec<BoxConstraints>> {
        let u_pd = shifted_data(&meas.data, meas.abs_noise);
        Ok(match support {
            Support::Single => vec![single_support_constraints(&self.pixel_stack, &u_pd, self.bounds)?],
            Support::Disjoint => disjoint_constraints(&self.pixel_stack, &u_pd, self.bounds)?.to_vec(),
        })
    }

    pub fn constrained(&self, meas: &Measurement, support: Support) -> Result<Reconstruction> {
        let constraints = self.constraints(meas, support)?;
        let opts = self.solver_options();
        let mut result = match support {
            Support::Single => minimize_single_support(&self.pixel_stack, &meas.data, &constraints[0], &opts)?,
            Support::Disjoint => {
                let c: [BoxConstraints; 3] = constraints.clone().try_into().expect("three blocks");
                minimize_disjoint_supports(&self.pixel_stack, &meas.data, &c, &opts)?
            }
        };
        result.threshold(self.config.threshold)?;
        Ok(Reconstruction { result, constraints })
    }

    pub fn truncate(&self) -> Result<TruncatedStack> {
        truncate_stack_with(&self.pixel_stack, self.config.tau, self.config.criterion, self.config.truncation)
    }

    /// Box bounds come from the untruncated stack; the residual uses `truncated`.
    pub fn combined(&self, meas: &Measurement, support: Support, truncated: &TruncatedStack) -> Result<Reconstruction> {
        let constraints = self.constraints(meas, support)?;
        let cc = match support {
            Support::Single => CombinedConstraints::Single(constraints[0].clone()),
            Support::Disjoint => {
                CombinedConstraints::Disjoint(Box::new(constraints.clone().try_into().expect("three blocks")))
            }
        };
        let mut result = combined_reconstruct(truncated, &meas.data, &cc, &self.solver_options())?;
        result.threshold(self.config.threshold)?;
        Ok(Reconstruction { result, constraints })
    }

    /// Union support for `Single`, one mask per parameter for `Disjoint`.
    pub fn truth_masks(&self, support: Support) -> Vec<Vec<bool>> {
        match support {
            Support::Single => vec![self.config.phantom.rasterize(&self.grid, None)],
            Support::Disjoint => (0..3).map(|p| self.config.phantom.rasterize(&self.grid, Some(p))).collect(),
        }
    }

    pub fn score(&self, masks: &[Vec<bool>], support: Support) -> Result<Vec<f64>> {
        let truth = self.truth_masks(support);
        if truth.len() != masks.len() {
            return Err(Error::IncompatibleOperands(format!(
                "{} masks for {} truth supports",
                masks.len(),
                truth.len()
            )));
        }
        masks.iter().zip(&truth).map(|(m, t)| score_jaccard(m, t)).collect()
    }
}

/// `|A ∩ B| / |A ∪ B|`, and `1` when both are empty.
pub fn score_jaccard(mask: &[bool], truth: &[bool]) -> Result<f64> {
    if mask.len() != truth.len() {
        return Err(Error::IncompatibleOperands(format!(
            "mask has {} pixels, truth {}",
            mask.len(),
            truth.len()
        )));
    }
    let inter = mask.iter().zip(truth).filter(|(a, b)| **a && **b).count();
    let union = mask.iter().zip(truth).filter(|(a, b)| **a || **b).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Binary 8-bit PGM, top row at `y = 1`, scaled linearly from `[0, max]`.
/// Returns the file bytes and the scale (value mapped to 255).
pub fn pgm(values: &[f64], nx: usize, ny: usize) -> (Vec<u8>, f64) {
    let max = values.iter().fold(0.0f64, |a, v| a.max(*v));
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for j in (0..ny).rev() {
        for i in 0..nx {
            let v = values[j * nx + i].max(0.0);
            out.push(if max > 0.0 { (255.0 * v / max).round() as u8 } else { 0 });
        }
    }
    (out, max)
}

/// Rows of `0`/`1`, top row at `y = 1`.
pub fn mask_to_text(mask: &[bool], nx: usize, ny: usize) -> String {
    let mut s = String::with_capacity((nx + 1) * ny);
    for j in (0..ny).rev() {
        for i in 0..nx {
            s.push(if mask[j * nx + i] { '1' } else { '0' });
        }
        s.push('\n');
    }
    s
}

pub fn mask_from_text(text: &str) -> Result<(Vec<bool>, usize, usize)> {
    let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let ny = rows.len();
    let nx = rows.first().map_or(0, |r| r.len());
    let mut mask = vec![false; nx * ny];
    for (r, row) in rows.iter().enumerate() {
        if row.len() != nx {
            return Err(Error::Parse("ragged mask rows".into()));
        }
        let j = ny - 1 - r;
        for (i, ch) in row.chars().enumerate() {
            mask[j * nx + i] = match ch {
                '0' => false,
                '1' => true,
                _ => return Err(Error::Parse(format!("mask character `{ch}`"))),
            };
        }
    }
    Ok((mask, nx, ny))
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Writes files under one root and remembers what it wrote.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    files: Vec<(String, u64)>,
    scales: Vec<(String, f64)>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(ArtifactWriter {
            root: root.to_path_buf(),
            files: Vec::new(),
            scales: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes.as_ref())?;
        self.files.push((rel.to_string(), fnv(bytes.as_ref())));
        Ok(())
    }

    pub fn raster(&mut self, rel: &str, values: &[f64], nx: usize, ny: usize) -> Result<()> {
        let (bytes, scale) = pgm(values, nx, ny);
        self.scales.push((rel.to_string(), scale));
        self.write(rel, bytes)
    }

    pub fn files(&self) -> Vec<PathBuf> {
        self.files.iter().map(|(r, _)| self.root.join(r)).collect()
    }
}

/// Which parts of the pipeline a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Forward,
    Test,
    Reconstruct,
    Combined,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Forward => "forward",
            Stage::Test => "test",
            Stage::Reconstruct => "reconstruct",
            Stage::Combined => "combined",
            Stage::All => "all",
        }
    }

    fn methods(self) -> Vec<Method> {
        match self {
            Stage::Forward => vec![],
            Stage::Test => vec![Method::MonoTest],
            Stage::Reconstruct => vec![Method::Constrained],
            Stage::Combined => vec![Method::Combined],
            Stage::All => vec![Method::MonoTest, Method::Constrained, Method::Combined],
        }
    }

    pub fn for_method(m: Method) -> Stage {
        match m {
            Method::MonoTest => Stage::Test,
            Method::Constrained => Stage::Reconstruct,
            Method::Combined => Stage::Combined,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    /// `(method, mask name, Jaccard)`.
    pub scores: Vec<(String, String, f64)>,
    pub files: Vec<PathBuf>,
}

fn write_forward(w: &mut ArtifactWriter, s: &Setup, meas: &Measurement) -> Result<()> {
    let c = &s.config;
    w.write("mesh.txt", s.mesh.to_text())?;
    w.write("ntd_background.txt", s.ntd_background.to_text(None))?;
    w.write("ntd_truth.txt", s.ntd_truth.to_text(None))?;
    let header = |name: &str| {
        vec![
            ("m", c.patches.to_string()),
            ("kind", name.to_string()),
            ("delta", meas.delta.to_string()),
            ("seed", meas.seed.to_string()),
            ("abs_noise", format!("{:e}", meas.abs_noise)),
        ]
    };
    w.write("gap.txt", crate::linalg::matrix_to_text(&header("clean")[..2], &s.gap))?;
    w.write("gap_noisy.txt", crate::linalg::matrix_to_text(&header("noisy"), &meas.data))?;
    let (nx, ny) = (s.grid.nx, s.grid.ny);
    for (name, mask) in [("union", s.config.phantom.rasterize(&s.grid, None))]
        .into_iter()
        .chain((0..3).map(|p| (PARAM_NAMES[p], s.config.phantom.rasterize(&s.grid, Some(p)))))
    {
        let vals: Vec<f64> = mask.iter().map(|b| *b as u8 as f64).collect();
        w.raster(&format!("truth_{name}.pgm"), &vals, nx, ny)?;
    }
    if c.write_sensitivities {
        for (dir, stack) in [("pixels", &s.pixel_stack), ("balls", &s.ball_stack)] {
            for k in 0..stack.len() {
                w.write(&format!("sensitivity/{dir}/{k:04}.txt"), stack.entry_to_text(k))?;
            }
        }
    }
    Ok(())
}

fn write_reconstruction(w: &mut ArtifactWriter, s: &Setup, dir: &str, rec: &Reconstruction) -> Result<()> {
    let r = &rec.result;
    let (nx, ny) = (s.grid.nx, s.grid.ny);
    w.write(&format!("{dir}/reconstruction.csv"), r.to_csv(&s.grid.centers()))?;
    w.write(&format!("{dir}/solver_log.csv"), r.log_csv())?;
    let mut bounds = String::from("pixel,block,beta,capped,upper\n");
    for (b, c) in rec.constraints.iter().enumerate() {
        for k in 0..c.len() {
            writeln!(bounds, "{k},{},{:e},{},{:e}", r.names[b], c.beta[k], c.capped[k] as u8, c.upper[k]).unwrap();
        }
    }
    w.write(&format!("{dir}/bounds.csv"), bounds)?;
    for (b, name) in r.names.iter().enumerate() {
        w.raster(&format!("{dir}/{name}.pgm"), &r.coefficients[b], nx, ny)?;
        w.write(&format!("{dir}/mask_{name}.txt"), mask_to_text(&r.masks[b], nx, ny))?;
    }
    let mut info = String::new();
    writeln!(info, "objective = {:e}", r.objective).unwrap();
    writeln!(info, "iterations = {}", r.iterations).unwrap();
    writeln!(info, "projected_gradient = {:e}", r.projected_gradient).unwrap();
    writeln!(info, "converged = {}", r.converged).unwrap();
    writeln!(info, "threshold = {}", r.threshold.unwrap_or(f64::NAN)).unwrap();
    for (b, c) in rec.constraints.iter().enumerate() {
        writeln!(info, "capped_{} = {}", r.names[b], c.capped_count()).unwrap();
    }
    w.write(&format!("{dir}/solver.txt"), info)
}

fn support_masks_names(support: Support) -> Vec<&'static str> {
    match support {
        Support::Single => vec!["zeta"],
        Support::Disjoint => vec!["alpha", "beta", "gamma"],
    }
}

/// Runs `stage` for `config` and writes its artifacts into `config.out`.
pub fn run_stage(config: &ExperimentConfig, stage: Stage) -> Result<RunSummary> {
    let setup = Setup::new(config).map_err(|e| e.in_stage("forward"))?;
    let meas = setup.measure(config.delta, config.seed).map_err(|e| e.in_stage("forward"))?;
    let mut w = ArtifactWriter::new(&config.out)?;
    w.write("config.txt", config.to_text())?;
    write_forward(&mut w, &setup, &meas).map_err(|e| e.in_stage("forward"))?;
    let (nx, ny) = (setup.grid.nx, setup.grid.ny);
    let support = config.support;
    let mut scores = Vec::new();
    for method in stage.methods() {
        match method {
            Method::MonoTest => {
                let out = setup.mono_test(&meas).map_err(|e| e.in_stage("test"))?;
                let balls = setup.balls.centers_and_radii();
                w.write("mono_test/marked_balls.csv", out.marks.to_csv(&balls))?;
                let vals: Vec<f64> = out.raster.iter().map(|b| *b as u8 as f64).collect();
                w.raster("mono_test/marked.pgm", &vals, nx, ny)?;
                w.write("mono_test/mask_marked.txt", mask_to_text(&out.raster, nx, ny))?;
                let j = setup.score(std::slice::from_ref(&out.raster), Support::Single)?;
                scores.push((method.name().to_string(), "marked".to_string(), j[0]));
            }
            Method::Constrained => {
                let rec = setup.constrained(&meas, support).map_err(|e| e.in_stage("reconstruct"))?;
                write_reconstruction(&mut w, &setup, "constrained", &rec)?;
                let j = setup.score(&rec.result.masks, support)?;
                for (name, v) in support_masks_names(support).into_iter().zip(j) {
                    scores.push((method.name().to_string(), name.to_string(), v));
                }
            }
            Method::Combined => {
                let tr = setup.truncate().map_err(|e| e.in_stage("combined"))?;
                w.write("combined/spectra.csv", tr.spectra_csv())?;
                let rec = setup.combined(&meas, support, &tr).map_err(|e| e.in_stage("combined"))?;
                write_reconstruction(&mut w, &setup, "combined", &rec)?;
                let j = setup.score(&rec.result.masks, support)?;
                for (name, v) in support_masks_names(support).into_iter().zip(j) {
                    scores.push((method.name().to_string(), name.to_string(), v));
                }
            }
        }
    }
    if !scores.is_empty() {
        w.write("scores.txt", scores_text(&scores))?;
    }
    write_manifest(&mut w, &setup, &meas, stage)?;
    Ok(RunSummary {
        out: config.out.clone(),
        scores,
        files: w.files(),
    })
}

fn scores_text(scores: &[(String, String, f64)]) -> String {
    let mut s = String::from("method,mask,jaccard\n");
    for (m, n, v) in scores {
        writeln!(s, "{m},{n},{v}").unwrap();
    }
    s
}

fn write_manifest(w: &mut ArtifactWriter, s: &Setup, meas: &Measurement, stage: Stage) -> Result<()> {
    let mut m = String::new();
    writeln!(m, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(m, "stage = {}", stage.name()).unwrap();
    writeln!(m, "seed = {}", meas.seed).unwrap();
    writeln!(m, "delta = {}", meas.delta).unwrap();
    writeln!(m, "abs_noise = {:e}", meas.abs_noise).unwrap();
    writeln!(m, "elements = {}", s.mesh.num_elements()).unwrap();
    writeln!(m, "nodes = {}", s.mesh.num_nodes()).unwrap();
    writeln!(m, "basis = {}", s.basis.id()).unwrap();
    writeln!(m, "background = {}", s.background.id()).unwrap();
    writeln!(m, "truth = {}", s.ntd_truth.material_id).unwrap();
    let b = s.bounds;
    writeln!(m, "box = {} {} {} tau1={} tau2={}", b.a_max, b.b_max, b.c_max, b.tau1, b.tau2).unwrap();
    let c = s.constants;
    writeln!(m, "test_constants = {} {} {}", c.c_lambda, c.c_mu, c.c_rho).unwrap();
    for (rel, scale) in &w.scales {
        writeln!(m, "scale {rel} = {scale:e}").unwrap();
    }
    for (rel, h) in &w.files {
        writeln!(m, "file {rel} {h:016x}").unwrap();
    }
    m.push_str("\n# config\n");
    for line in s.config.to_text().lines() {
        writeln!(m, "# {line}").unwrap();
    }
    w.write("manifest.txt", m)
}

/// Runs the method named in the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    run_stage(config, Stage::for_method(config.method))
}

/// Rescores the masks already present under `config.out`.
pub fn score_artifacts(config: &ExperimentConfig) -> Result<Vec<(String, String, f64)>> {
    let mesh = generate_unit_square_mesh(config.mesh_n, config.scheme)?;
    let grid = PixelGrid::build(&mesh, config.pixels_x, config.pixels_y)?;
    let mut scores = Vec::new();
    for (dir, name, param) in [
        ("mono_test", "marked", None),
        ("constrained", "zeta", None),
        ("constrained", "alpha", Some(0)),
        ("constrained", "beta", Some(1)),
        ("constrained", "gamma", Some(2)),
        ("combined", "zeta", None),
        ("combined", "alpha", Some(0)),
        ("combined", "beta", Some(1)),
        ("combined", "gamma", Some(2)),
    ] {
        let path = config.out.join(dir).join(format!("mask_{name}.txt"));
        if !path.exists() {
            continue;
        }
        let (mask, nx, ny) = mask_from_text(&std::fs::read_to_string(&path)?)?;
        if (nx, ny) != (grid.nx, grid.ny) {
            return Err(Error::IncompatibleOperands(format!(
                "{} is {nx}x{ny}, config grid is {}x{}",
                path.display(),
                grid.nx,
                grid.ny
            )));
        }
        let truth = config.phantom.rasterize(&grid, param);
        let method = if dir == "mono_test" { "mono_test" } else { dir };
        scores.push((method.to_string(), name.to_string(), score_jaccard(&mask, &truth)?));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument(format!("no masks found under {}", config.out.display())));
    }
    std::fs::write(config.out.join("scores.txt"), scores_text(&scores))?;
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{Inclusion, Phantom, Shape};

    #[test]
    fn jaccard_examples() {
        let t = vec![true, true, false, false];
        assert_eq!(score_jaccard(&t, &t).unwrap(), 1.0);
        assert_eq!(score_jaccard(&[true, false], &[false, true]).unwrap(), 0.0);
        assert_eq!(score_jaccard(&[false; 3], &[false; 3]).unwrap(), 1.0);
        let mut truth = vec![false; 200];
        truth[..100].iter_mut().for_each(|b| *b = true);
        let mut mask = truth.clone();
        mask[150] = true;
        assert_eq!(score_jaccard(&mask, &truth).unwrap(), 100.0 / 101.0);
        assert!(score_jaccard(&[true], &[true, false]).is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        let mask: Vec<bool> = (0..12).map(|k| k % 3 == 0).collect();
        let (back, nx, ny) = mask_from_text(&mask_to_text(&mask, 4, 3)).unwrap();
        assert_eq!((back, nx, ny), (mask, 4, 3));
    }

    #[test]
    fn pgm_scales_to_max() {
        let (bytes, scale) = pgm(&[0.0, 0.5, 1.0, 0.25], 2, 2);
        assert_eq!(scale, 1.0);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[255, 64, 0, 128]);
    }

    fn small_config(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            mesh_n: 12,
            patches: 8,
            pixels_x: 6,
            pixels_y: 6,
            balls_per_side: 4,
            ball_radius: 0.1,
            phantom: Phantom::new(vec![Inclusion {
                shape: Shape::Disc {
                    center: [0.5, 0.5],
                    radius: 0.2,
                },
                values: [Some(2.0); 3],
            }]),
            max_iter: 300,
            out: out.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn stages_write_expected_files_and_rescore() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config(dir.path());
        c.delta = 0.01;
        let summary = run_stage(&c, Stage::All).unwrap();
        for rel in [
            "manifest.txt",
            "mesh.txt",
            "gap_noisy.txt",
            "mono_test/marked_balls.csv",
            "mono_test/marked.pgm",
            "constrained/reconstruction.csv",
            "constrained/solver_log.csv",
            "combined/spectra.csv",
            "combined/zeta.pgm",
            "sensitivity/pixels/0000.txt",
        ] {
            assert!(dir.path().join(rel).exists(), "{rel}");
        }
        let rescored = score_artifacts(&c).unwrap();
        assert_eq!(rescored, summary.scores);
    }

    #[test]
    fn finer_data_mesh_keeps_gap_psd() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config(dir.path());
        c.data_mesh_n = 24;
        let s = Setup::new(&c).unwrap();
        assert_eq!(s.data_background.basis_id, s.ntd_background.basis_id);
        assert!(crate::linalg::min_eigenvalue(&s.gap) > -1e-12 * s.gap.norm());
    }
}
