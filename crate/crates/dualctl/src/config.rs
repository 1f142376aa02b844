//! TOML experiment configuration with row-major matrix literals and
//! documented defaults.

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::bounds::Method;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{default_channel_blocks, PerformanceIndex, SystemModel};
use crate::sdp::log_grid;
use crate::spectral::FrequencyGrid;
use crate::synthesis::{Candidate, DualOptions, LambdaSearch};

/// Matrix literal: row-major nested list, `"scaled-identity: c"`,
/// `"identity"` or `"diagonal: [d1, d2, ...]"`.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    ScaledIdentity(f64),
    Diagonal(Vec<f64>),
}

impl MatrixSpec {
    /// Resolves the literal; shorthand forms need the dimension.
    pub fn resolve(&self, n: usize) -> Result<Mat> {
        match self {
            MatrixSpec::ScaledIdentity(c) => Ok(Mat::identity(n, n) * *c),
            MatrixSpec::Diagonal(d) => {
                if d.len() != n {
                    return Err(Error::Config(format!("diagonal has {} entries, expected {n}", d.len())));
                }
                Ok(Mat::from_diagonal(&crate::linalg::Vector::from_column_slice(d)))
            }
            MatrixSpec::Rows(rows) => Ok(Mat::from_fn(rows.len(), rows.first().map_or(0, |r| r.len()), |i, j| rows[i][j])),
        }
    }

    /// Resolves and checks the shape.
    pub fn resolve_shape(&self, rows: usize, cols: usize, what: &str) -> Result<Mat> {
        let m = self.resolve(rows)?;
        if m.shape() != (rows, cols) {
            return Err(Error::Config(format!("{what} must be {rows}x{cols}, got {}x{}", m.nrows(), m.ncols())));
        }
        Ok(m)
    }

    /// Row-major literal of a matrix.
    pub fn from_mat(m: &Mat) -> Self {
        MatrixSpec::Rows((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
    }
}

fn parse_shorthand(s: &str) -> std::result::Result<MatrixSpec, String> {
    let s = s.trim();
    if s == "identity" {
        return Ok(MatrixSpec::ScaledIdentity(1.0));
    }
    let (kind, val) = s.split_once(':').ok_or_else(|| format!("unrecognized matrix shorthand {s:?}"))?;
    let val = val.trim();
    match kind.trim() {
        "scaled-identity" => val.parse::<f64>().map(MatrixSpec::ScaledIdentity).map_err(|e| format!("scaled-identity: {e}")),
        "diagonal" => {
            let inner = val.strip_prefix('[').and_then(|v| v.strip_suffix(']')).ok_or("diagonal expects [d1, ...]")?;
            inner
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse::<f64>().map_err(|e| format!("diagonal entry {t:?}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(MatrixSpec::Diagonal)
        }
        other => Err(format!("unknown matrix shorthand {other:?}; expected scaled-identity, diagonal or identity")),
    }
}

impl<'de> Deserialize<'de> for MatrixSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = MatrixSpec;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a row-major list of numeric rows or a matrix shorthand string")
            }
            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<MatrixSpec, E> {
                parse_shorthand(s).map_err(E::custom)
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<MatrixSpec, A::Error> {
                let mut rows: Vec<Vec<f64>> = Vec::new();
                while let Some(r) = seq.next_element::<Vec<f64>>()? {
                    if let Some(first) = rows.first() {
                        if first.len() != r.len() {
                            return Err(de::Error::custom(format!(
                                "malformed matrix literal: row {} has {} entries, row 1 has {}",
                                rows.len() + 1,
                                r.len(),
                                first.len()
                            )));
                        }
                    }
                    rows.push(r);
                }
                if rows.is_empty() || rows[0].is_empty() {
                    return Err(de::Error::custom("malformed matrix literal: empty matrix"));
                }
                Ok(MatrixSpec::Rows(rows))
            }
        }
        d.deserialize_any(V)
    }
}

impl Serialize for MatrixSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MatrixSpec::Rows(r) => r.serialize(s),
            MatrixSpec::ScaledIdentity(c) => format!("scaled-identity: {c:e}").serialize(s),
            MatrixSpec::Diagonal(d) => {
                let items: Vec<String> = d.iter().map(|v| format!("{v:e}")).collect();
                format!("diagonal: [{}]", items.join(", ")).serialize(s)
            }
        }
    }
}

/// True system; either explicit matrices or the chained example family.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub a: Option<MatrixSpec>,
    pub b: Option<MatrixSpec>,
    pub chained: Option<ChainedSpec>,
    pub sigma_w: f64,
}

/// Chained plant: `coupling` on the diagonal and first superdiagonal, B = e_n.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChainedSpec {
    pub n_x: usize,
    pub coupling: f64,
}

/// Prior center selection.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    /// The true system.
    Truth,
    /// Uniform in the credibility ellipsoid around the true system.
    Sampled,
    /// Explicit (a_hat, b_hat).
    Explicit,
}

fn default_delta() -> f64 {
    0.01
}
fn default_beta() -> f64 {
    1e-10
}
fn default_center() -> CenterMode {
    CenterMode::Sampled
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// Inverse credibility shape D₀⁻¹.
    pub d0_inv: MatrixSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_center")]
    pub center: CenterMode,
    pub a_hat: Option<MatrixSpec>,
    pub b_hat: Option<MatrixSpec>,
}

fn default_omegas() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3, 0.4]
}
fn default_eps() -> f64 {
    0.5
}
fn default_method() -> Method {
    Method::Scenario
}
fn default_candidate() -> Candidate {
    Candidate::Scaled
}
fn default_iters() -> usize {
    50
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExplorationSection {
    pub horizon: usize,
    #[serde(default = "default_omegas")]
    pub omegas: Vec<f64>,
    pub goal: Option<MatrixSpec>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_method")]
    pub constants: Method,
    #[serde(default = "default_candidate")]
    pub candidate: Candidate,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
}

fn default_gamma_p() -> f64 {
    5.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PerformanceSection {
    pub c: Option<MatrixSpec>,
    pub d_u: Option<MatrixSpec>,
    pub d_w: Option<MatrixSpec>,
    #[serde(default = "default_gamma_p")]
    pub gamma_p: f64,
}

impl Default for PerformanceSection {
    fn default() -> Self {
        Self { c: None, d_u: None, d_w: None, gamma_p: default_gamma_p() }
    }
}

fn default_eps_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}
fn default_lambda_range() -> [f64; 2] {
    [1e-3, 1e3]
}
fn default_lambda_points() -> usize {
    13
}
fn default_refine() -> usize {
    5
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DualSection {
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    #[serde(default = "default_lambda_range")]
    pub lambda_range: [f64; 2],
    #[serde(default = "default_lambda_points")]
    pub lambda_points: usize,
    #[serde(default = "default_refine")]
    pub refine_points: usize,
}

impl Default for DualSection {
    fn default() -> Self {
        Self {
            eps_grid: default_eps_grid(),
            lambda_range: default_lambda_range(),
            lambda_points: default_lambda_points(),
            refine_points: default_refine(),
        }
    }
}

fn default_alphas() -> Vec<f64> {
    vec![0.1, 1.0, 10.0, 100.0, 1000.0]
}
fn default_trials() -> usize {
    10
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Fig3Section {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl Default for Fig3Section {
    fn default() -> Self {
        Self { alphas: default_alphas(), trials: default_trials() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct Fig4Section {
    /// Explicit γ_p values; empty selects a sweep between the baselines.
    #[serde(default)]
    pub gamma_p: Vec<f64>,
    #[serde(default)]
    pub points: Option<usize>,
}

fn default_samples() -> usize {
    100
}
fn default_runs() -> usize {
    100
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    /// Sampled plants for the closed-loop check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Noise realizations for the excitation guarantee check.
    #[serde(default = "default_runs")]
    pub runs: usize,
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self { samples: default_samples(), runs: default_runs() }
    }
}

/// Complete experiment configuration.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSection,
    pub prior: PriorSection,
    pub exploration: ExplorationSection,
    #[serde(default)]
    pub performance: PerformanceSection,
    #[serde(default)]
    pub dual: DualSection,
    #[serde(default)]
    pub fig3: Fig3Section,
    #[serde(default)]
    pub fig4: Fig4Section,
    #[serde(default)]
    pub validation: ValidationSection,
}

impl ExperimentConfig {
    /// Parses TOML text; errors carry the line and column of the offending value.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fully resolved configuration as TOML, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The example setup: chained system with coupling 0.49, σ_w² = 1, T = 100,
    /// D₀⁻¹ = 10⁻³ I, δ = 0.01, goal diag(10⁷, 0, 0, 0, 0).
    pub fn example() -> Self {
        Self::parse(EXAMPLE).expect("shipped example parses")
    }

    fn validate(&self) -> Result<()> {
        let s = &self.system;
        match (&s.a, &s.b, &s.chained) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => return Err(Error::Config("system: give either both `a` and `b` or `chained`".into())),
        }
        if !(s.sigma_w >= 0.0) {
            return Err(Error::Config("system.sigma_w must be non-negative".into()));
        }
        if !(self.prior.delta > 0.0 && self.prior.delta < 1.0) {
            return Err(Error::Config("prior.delta must lie in (0, 1)".into()));
        }
        if self.prior.center == CenterMode::Explicit && (self.prior.a_hat.is_none() || self.prior.b_hat.is_none()) {
            return Err(Error::Config("prior.center = \"explicit\" requires a_hat and b_hat".into()));
        }
        if self.exploration.horizon == 0 {
            return Err(Error::Config("exploration.horizon must be at least 1".into()));
        }
        if self.fig3.trials == 0 {
            return Err(Error::Config("fig3.trials must be at least 1".into()));
        }
        if self.fig3.alphas.windows(2).any(|w| w[0] > w[1]) || self.fig4.gamma_p.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("sweep lists must be sorted ascending".into()));
        }
        let r = self.dual.lambda_range;
        if !(r[0] > 0.0 && r[1] >= r[0]) || self.dual.lambda_points == 0 {
            return Err(Error::Config("dual.lambda_range must be positive and ordered".into()));
        }
        Ok(())
    }

    /// True system.
    pub fn system_model(&self) -> Result<SystemModel> {
        let s = &self.system;
        if let Some(c) = &s.chained {
            return Ok(SystemModel::chained(c.n_x, c.coupling, s.sigma_w));
        }
        let a = match &s.a {
            Some(MatrixSpec::Rows(r)) => MatrixSpec::Rows(r.clone()).resolve(r.len())?,
            Some(_) => return Err(Error::Config("system.a must be an explicit matrix".into())),
            None => unreachable!("validated"),
        };
        let n = a.nrows();
        let b = s.b.as_ref().expect("validated").resolve_shape(n, 1, "system.b")?;
        SystemModel::new(a, b, s.sigma_w)
    }

    /// D₀ from the configured D₀⁻¹.
    pub fn d0(&self, n_phi: usize) -> Result<Mat> {
        let inv = self.prior.d0_inv.resolve_shape(n_phi, n_phi, "prior.d0_inv")?;
        crate::linalg::spd_inverse(&inv, "prior.d0_inv").map_err(|_| Error::Config("prior.d0_inv must be positive definite".into()))
    }

    /// Frequency grid.
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::from_omegas(self.exploration.horizon, &self.exploration.omegas)
    }

    /// Excitation goal; default diag(10⁷, 0, …, 0).
    pub fn goal(&self, n_phi: usize) -> Result<Mat> {
        match &self.exploration.goal {
            Some(g) => g.resolve_shape(n_phi, n_phi, "exploration.goal"),
            None => {
                let mut g = Mat::zeros(n_phi, n_phi);
                g[(0, 0)] = 1e7;
                Ok(g)
            }
        }
    }

    /// Performance channel at the configured γ_p.
    pub fn performance(&self, n_x: usize) -> Result<PerformanceIndex> {
        self.performance_at(n_x, self.performance.gamma_p)
    }

    /// Performance channel at a given γ_p.
    pub fn performance_at(&self, n_x: usize, gamma_p: f64) -> Result<PerformanceIndex> {
        let p = &self.performance;
        let (c0, du0, dw0) = default_channel_blocks(n_x);
        let c = match &p.c {
            Some(c) => c.resolve(n_x)?,
            None => c0,
        };
        let n_z = c.nrows();
        let d_u = match &p.d_u {
            Some(d) => d.resolve_shape(n_z, 1, "performance.d_u")?,
            None if p.c.is_none() => du0,
            None => Mat::zeros(n_z, 1),
        };
        let d_w = match &p.d_w {
            Some(d) => d.resolve_shape(n_z, n_x, "performance.d_w")?,
            None if p.c.is_none() => dw0,
            None => Mat::zeros(n_z, n_x),
        };
        PerformanceIndex::l2_gain(c, d_u, d_w, gamma_p)
    }

    /// Dual-problem line-search options.
    pub fn dual_options(&self) -> DualOptions {
        let d = &self.dual;
        let g = log_grid(d.lambda_range[0], d.lambda_range[1], d.lambda_points);
        DualOptions {
            eps_grid: d.eps_grid.clone(),
            eps_start: self.exploration.eps,
            lambdas: LambdaSearch { lambda_s: g.clone(), lambda_u: g, refine_points: d.refine_points },
            hints: Vec::new(),
        }
    }
}

/// Shipped configuration of the example system.
pub const EXAMPLE: &str = include_str!("../configs/example.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_echo() {
        let c = ExperimentConfig::example();
        assert_eq!(c.system.sigma_w, 1.0);
        assert_eq!(c.exploration.horizon, 100);
        let d0 = c.d0(5).unwrap();
        assert!((d0 - Mat::identity(5, 5) * 1e3).abs().max() < 1e-9);
        let sys = c.system_model().unwrap();
        assert_eq!(sys.n_x(), 4);
    }

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::parse(
            "[system]\nchained = { n_x = 2, coupling = 0.3 }\nsigma_w = 1.0\n[prior]\nd0_inv = \"scaled-identity: 0.01\"\n[exploration]\nhorizon = 50\n",
        )
        .unwrap();
        assert_eq!(c.prior.delta, 0.01);
        assert_eq!(c.exploration.beta, 1e-10);
        assert_eq!(c.dual.eps_grid.len(), 9);
        let again = ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let e = ExperimentConfig::parse("[system]\nchained = { n_x = 2, coupling = 0.3 }\nsigma_w = 1.0\nbogus = 3\n").unwrap_err();
        let s = e.to_string();
        assert!(s.contains("bogus") && s.contains("sigma_w"), "{s}");
    }

    #[test]
    fn malformed_matrix_reports_line() {
        let text = "[system]\nsigma_w = 1.0\na = [[0.5, 0.0],\n     [0.0]]\nb = [[0.0], [1.0]]\n[prior]\nd0_inv = \"identity\"\n[exploration]\nhorizon = 10\n";
        let s = ExperimentConfig::parse(text).unwrap_err().to_string();
        assert!(s.contains("line 3") && s.contains("malformed"), "{s}");
    }

    #[test]
    fn shorthand_forms() {
        assert_eq!(parse_shorthand("scaled-identity: 1e-3").unwrap(), MatrixSpec::ScaledIdentity(1e-3));
        assert_eq!(parse_shorthand("diagonal: [1, 2]").unwrap(), MatrixSpec::Diagonal(vec![1.0, 2.0]));
        assert!(parse_shorthand("ones: 3").is_err());
    }
}
