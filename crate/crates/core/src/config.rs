//! TOML run configurations.
//!
//! Scalar fields (`f`, `y_d`, `g_sh`, `g0`) accept a number, an expression over
//! `x1, x2` (see [`crate::expr`]) or `"file:PATH"` naming a grid dump relative to
//! the config file. Every diagnostic carries the line of the offending key.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::beta::PiecewiseLinearBeta;
use crate::certificates::{CertifyOptions, Tolerances};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Field, Grid2D, Rect};
use crate::io;
use crate::objective::{default_schedule, OptimizeOptions, ProblemParams};
use crate::solvers::{NewtonOptions, ZetaPolicy, ZetaRule};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FieldSpec {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "unit_rect")]
    pub domain: [f64; 4],
    #[serde(default = "centered_rect")]
    pub e_rect: [f64; 4],
}

fn unit_rect() -> [f64; 4] {
    [0.0, 1.0, 0.0, 1.0]
}

fn centered_rect() -> [f64; 4] {
    [0.25, 0.75, 0.25, 0.75]
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(default = "half")]
    pub s: f64,
    pub f: FieldSpec,
    pub y_d: FieldSpec,
    #[serde(default = "zero_spec")]
    pub g_sh: FieldSpec,
}

fn half() -> f64 {
    0.5
}

fn zero_spec() -> FieldSpec {
    FieldSpec::Number(0.0)
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BetaSection {
    /// `relu`, `neg_part`, `linear` or `custom`.
    #[serde(default = "relu_kind")]
    pub kind: String,
    #[serde(default)]
    pub slope: Option<f64>,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    #[serde(default)]
    pub slopes: Vec<f64>,
    #[serde(default)]
    pub value_at_zero: f64,
    #[serde(default = "half")]
    pub delta: f64,
}

fn relu_kind() -> String {
    "relu".into()
}

impl Default for BetaSection {
    fn default() -> Self {
        Self { kind: relu_kind(), slope: None, breakpoints: vec![], slopes: vec![], value_at_zero: 0.0, delta: 0.5 }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    /// `midpoint`, `left`, `right` or `mollified`.
    pub zeta_rule: String,
    pub kink_tolerance: Option<f64>,
    /// Initial state for `solve`.
    pub g: FieldSpec,
}

impl Default for SolverSection {
    fn default() -> Self {
        let n = NewtonOptions::default();
        Self { tol: n.tol, max_iter: n.max_iter, zeta_rule: "midpoint".into(), kink_tolerance: None, g: zero_spec() }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    pub step0: f64,
    pub max_iter: usize,
    pub cert_tol: f64,
    pub g0: FieldSpec,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let o = OptimizeOptions::default();
        Self { step0: o.step0, max_iter: o.max_iter, cert_tol: o.cert_tol, g0: zero_spec() }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySection {
    pub n_samples: usize,
    pub seed: u64,
    pub tol_a: Option<f64>,
    pub tol_n: Option<f64>,
    pub tol_p: f64,
    pub tol_w: f64,
    pub vi_accept: f64,
    pub closure_radius: f64,
}

impl Default for CertifySection {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            n_samples: 1000,
            seed: 0,
            tol_a: None,
            tol_n: None,
            tol_p: t.tol_p,
            tol_w: t.tol_w,
            vi_accept: t.vi_accept,
            closure_radius: t.closure_radius,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    /// Explicit decreasing `γ` values; empty means `0.1 · 2^{−k}`, `k = 0..=10`.
    pub schedule: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MmsSection {
    /// Interior node counts across, one per refinement level.
    pub levels: Vec<usize>,
    /// Exact state; must vanish on the boundary.
    pub exact: String,
    /// Laplacian of the exact state.
    pub laplacian: String,
    /// Control used for the manufactured forcing.
    #[serde(default = "zero_spec")]
    pub g: FieldSpec,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub epsilon: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub grid: GridSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub beta: BetaSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub path: PathSection,
    pub mms: Option<MmsSection>,
    #[serde(default)]
    pub sweep: SweepSection,
    pub output_dir: Option<PathBuf>,
}

/// A parsed configuration with the source kept for diagnostics.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub raw: RawConfig,
    source: String,
    base_dir: PathBuf,
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| Error::Config { line: 0, msg: format!("cannot read {}: {e}", path.display()) })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&source, &base)
    }

    pub fn parse(source: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map_or(0, |s| line_of_offset(source, s.start));
            Error::Config { line, msg: e.message().to_string() }
        })?;
        let cfg = Self { raw, source: source.to_string(), base_dir: base_dir.to_path_buf() };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Line of `key` inside `[section]`, or of the section header, or 0.
    pub fn line_of(&self, section: &str, key: &str) -> usize {
        let mut in_section = false;
        let mut header = 0;
        for (i, line) in self.source.lines().enumerate() {
            let t = line.trim();
            if t.starts_with('[') {
                in_section = t.trim_start_matches('[').trim_end_matches(']').trim() == section;
                if in_section {
                    header = i + 1;
                }
                continue;
            }
            if in_section {
                if let Some((k, _)) = t.split_once('=') {
                    if k.trim() == key {
                        return i + 1;
                    }
                }
            }
        }
        header
    }

    fn err(&self, section: &str, key: &str, msg: impl Into<String>) -> Error {
        Error::Config { line: self.line_of(section, key), msg: format!("[{section}] {key}: {}", msg.into()) }
    }

    fn validate(&self) -> Result<()> {
        let r = &self.raw;
        self.grid().map_err(|e| self.err("grid", "nx", e.to_string()))?;
        if !(r.problem.epsilon > 0.0) {
            return Err(self.err("problem", "epsilon", "must be > 0"));
        }
        if !(r.problem.alpha >= 0.0) {
            return Err(self.err("problem", "alpha", "must be >= 0"));
        }
        if !(r.problem.s > 0.0 && r.problem.s < 2.0 && r.problem.s != 1.0) {
            return Err(self.err("problem", "s", "must lie in (0,1) or (1,2)"));
        }
        self.beta()?;
        if !(r.solver.tol > 0.0) || r.solver.max_iter == 0 {
            return Err(self.err("solver", "tol", "tol must be > 0 and max_iter >= 1"));
        }
        self.zeta_policy()?;
        if !(r.optimize.step0 > 0.0) {
            return Err(self.err("optimize", "step0", "must be > 0"));
        }
        if r.certify.n_samples == 0 {
            return Err(self.err("certify", "n_samples", "must be >= 1"));
        }
        let s = &r.path.schedule;
        if s.iter().any(|&g| !(g > 0.0)) || s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(self.err("path", "schedule", "must be positive and strictly decreasing"));
        }
        if let Some(m) = &r.mms {
            if m.levels.len() < 2 || m.levels.iter().any(|&n| n < 3) {
                return Err(self.err("mms", "levels", "need at least two levels with >= 3 nodes"));
            }
            Expr::parse(&m.exact).map_err(|e| self.err("mms", "exact", e.to_string()))?;
            Expr::parse(&m.laplacian).map_err(|e| self.err("mms", "laplacian", e.to_string()))?;
        }
        if r.sweep.epsilon.iter().any(|&e| !(e > 0.0)) {
            return Err(self.err("sweep", "epsilon", "values must be > 0"));
        }
        if r.sweep.alpha.iter().any(|&a| !(a >= 0.0)) {
            return Err(self.err("sweep", "alpha", "values must be >= 0"));
        }
        for (sec, key, spec) in [
            ("problem", "f", &r.problem.f),
            ("problem", "y_d", &r.problem.y_d),
            ("problem", "g_sh", &r.problem.g_sh),
            ("optimize", "g0", &r.optimize.g0),
            ("solver", "g", &r.solver.g),
        ] {
            if let FieldSpec::Text(t) = spec {
                if !t.starts_with("file:") {
                    Expr::parse(t).map_err(|e| self.err(sec, key, e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        let g = &self.raw.grid;
        Self::grid_with(g.nx, g.ny, g.domain, g.e_rect)
    }

    fn grid_with(nx: usize, ny: usize, d: [f64; 4], e: [f64; 4]) -> Result<Grid2D> {
        Grid2D::new(nx, ny, Rect::new(d[0], d[1], d[2], d[3]), Rect::new(e[0], e[1], e[2], e[3]))
    }

    /// Grid with `nx` interior nodes across and the matching count vertically (MMS levels).
    pub fn grid_level(&self, nx: usize) -> Result<Grid2D> {
        let g = &self.raw.grid;
        let (lx, ly) = (g.domain[1] - g.domain[0], g.domain[3] - g.domain[2]);
        let ny = (((nx + 1) as f64 * ly / lx).round() as usize).saturating_sub(1);
        Self::grid_with(nx, ny, g.domain, g.e_rect)
    }

    pub fn beta(&self) -> Result<PiecewiseLinearBeta> {
        let b = &self.raw.beta;
        let res = match b.kind.as_str() {
            "relu" => Ok(PiecewiseLinearBeta::relu()),
            "neg_part" => Ok(PiecewiseLinearBeta::neg_part()),
            "linear" => PiecewiseLinearBeta::linear(b.slope.unwrap_or(1.0)),
            "custom" => PiecewiseLinearBeta::new(b.breakpoints.clone(), b.slopes.clone(), b.value_at_zero, b.delta),
            other => return Err(self.err("beta", "kind", format!("unknown kind `{other}`"))),
        };
        res.map_err(|e| self.err("beta", "kind", e.to_string()))
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions { tol: self.raw.solver.tol, max_iter: self.raw.solver.max_iter }
    }

    pub fn zeta_policy(&self) -> Result<ZetaPolicy> {
        let s = &self.raw.solver;
        let rule = match s.zeta_rule.as_str() {
            "midpoint" => ZetaRule::Midpoint,
            "left" => ZetaRule::LeftDerivative,
            "right" => ZetaRule::RightDerivative,
            "mollified" => ZetaRule::AtLimitOfMollified,
            other => return Err(self.err("solver", "zeta_rule", format!("unknown rule `{other}`"))),
        };
        match s.kink_tolerance {
            Some(t) => ZetaPolicy::with_tolerance(rule, t, &self.beta()?)
                .map_err(|e| self.err("solver", "kink_tolerance", e.to_string())),
            None => Ok(ZetaPolicy::new(rule)),
        }
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        let o = &self.raw.optimize;
        OptimizeOptions { step0: o.step0, max_iter: o.max_iter, cert_tol: o.cert_tol, newton: self.newton() }
    }

    pub fn certify_options(&self, seed: Option<u64>) -> Result<CertifyOptions> {
        let c = &self.raw.certify;
        Ok(CertifyOptions {
            tolerances: Tolerances {
                tol_a: c.tol_a,
                tol_n: c.tol_n,
                tol_p: c.tol_p,
                tol_w: c.tol_w,
                vi_accept: c.vi_accept,
                closure_radius: c.closure_radius,
                ..Tolerances::default()
            },
            n_samples: c.n_samples,
            seed: seed.unwrap_or(c.seed),
            newton: self.newton(),
            zeta_policy: self.zeta_policy()?,
        })
    }

    pub fn schedule(&self) -> Vec<f64> {
        if self.raw.path.schedule.is_empty() {
            default_schedule()
        } else {
            self.raw.path.schedule.clone()
        }
    }

    /// Evaluates a field spec on `grid` with `eps` available to expressions.
    pub fn field(&self, section: &str, key: &str, spec: &FieldSpec, grid: &Grid2D, eps: f64) -> Result<Field> {
        match spec {
            FieldSpec::Number(c) => Ok(Field::constant(grid.len(), *c)),
            FieldSpec::Text(t) => match t.strip_prefix("file:") {
                Some(rel) => {
                    let path = self.base_dir.join(rel.trim());
                    io::read_dump(&path, grid).map_err(|e| self.err(section, key, e.to_string()))
                }
                None => {
                    let ex = Expr::parse(t).map_err(|e| self.err(section, key, e.to_string()))?;
                    let f = Field::from_fn(grid, |x, y| ex.eval(x, y, eps));
                    Field::from_vec(f.into_vec()).map_err(|e| self.err(section, key, e.to_string()))
                }
            },
        }
    }

    pub fn params(&self) -> Result<ProblemParams> {
        self.params_with(self.raw.problem.epsilon, self.raw.problem.alpha)
    }

    /// Problem instance with `ε` and `α` overridden (parameter sweeps).
    pub fn params_with(&self, eps: f64, alpha: f64) -> Result<ProblemParams> {
        let pr = &self.raw.problem;
        let grid = self.grid()?;
        let f = self.field("problem", "f", &pr.f, &grid, eps)?;
        let y_d = self.field("problem", "y_d", &pr.y_d, &grid, eps)?;
        let g_sh = self.field("problem", "g_sh", &pr.g_sh, &grid, eps)?;
        ProblemParams::new(grid, eps, alpha, pr.s, f, y_d, g_sh, self.beta()?)
            .map_err(|e| self.err("problem", "g_sh", e.to_string()))
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.raw.output_dir.as_ref().map(|p| self.base_dir.join(p))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }
}
