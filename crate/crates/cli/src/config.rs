//! JSON run configuration and its validation.

use std::path::{Path, PathBuf};

use mfg_newton::{
    GridSpec, HamiltonianSpec, KernelCoupling, KernelOuter, LinearMethod, LocalCoupling, NewtonConfig,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NewtonRate,
    FixedPointCompare,
    LemmaStability,
    HessianSweep,
    NonlocalRate,
    ManufacturedVerify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::NewtonRate => "newton-rate",
            Experiment::FixedPointCompare => "fixed-point-compare",
            Experiment::LemmaStability => "lemma-stability",
            Experiment::HessianSweep => "hessian-sweep",
            Experiment::NonlocalRate => "nonlocal-rate",
            Experiment::ManufacturedVerify => "manufactured-verify",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub grid: GridConfig,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub newton: SolverConfig,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Record wall-clock times; off by default so outputs are reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub lemma: LemmaConfig,
    #[serde(default)]
    pub hessian: HessianConfig,
}

fn default_epsilons() -> Vec<f64> {
    vec![1e-2]
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub nx: usize,
    pub nt: usize,
    #[serde(default = "default_horizon", alias = "T")]
    pub horizon: f64,
}

fn default_dim() -> usize {
    1
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianVariant {
    Congestion,
    SeparableQuadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum HProfile {
    #[serde(rename = "constant")]
    Constant,
    #[serde(rename = "1+0.5cos(2pix)")]
    OneCosine,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub variant: HamiltonianVariant,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_profile")]
    pub h: HProfile,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_profile() -> HProfile {
    HProfile::Constant
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self {
            variant: HamiltonianVariant::Congestion,
            alpha: default_alpha(),
            h: HProfile::Constant,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalVariant {
    Sigmoid,
    Linear,
    Power,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterConfig {
    Identity,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CouplingConfig {
    Local {
        variant: LocalVariant,
        /// Exponent of the power coupling.
        #[serde(default)]
        exponent: Option<f64>,
    },
    Nonlocal {
        sigma: f64,
        #[serde(default = "default_outer")]
        outer: OuterConfig,
        #[serde(default = "default_weight")]
        weight: f64,
        /// Weight of the terminal coupling `g`, same kernel.
        #[serde(default = "default_weight")]
        terminal_weight: f64,
    },
}

fn default_outer() -> OuterConfig {
    OuterConfig::Identity
}

fn default_weight() -> f64 {
    1.0
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig::Local {
            variant: LocalVariant::Sigmoid,
            exponent: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMethodConfig {
    Direct,
    Iterative,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_linear_method")]
    pub linear_method: LinearMethodConfig,
    #[serde(default = "default_linear_tol")]
    pub linear_tol: f64,
    #[serde(default = "default_linear_max_iter")]
    pub linear_max_iter: usize,
    /// Relaxation of the fixed-point baseline.
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Iteration cap of the fixed-point baseline.
    #[serde(default = "default_fixed_point_max_iter")]
    pub fixed_point_max_iter: usize,
}

fn default_max_iter() -> usize {
    20
}

fn default_residual_tol() -> f64 {
    1e-9
}

fn default_linear_method() -> LinearMethodConfig {
    LinearMethodConfig::Direct
}

fn default_linear_tol() -> f64 {
    1e-12
}

fn default_linear_max_iter() -> usize {
    2000
}

fn default_damping() -> f64 {
    0.5
}

fn default_fixed_point_max_iter() -> usize {
    200
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            residual_tol: default_residual_tol(),
            linear_method: default_linear_method(),
            linear_tol: default_linear_tol(),
            linear_max_iter: default_linear_max_iter(),
            damping: default_damping(),
            fixed_point_max_iter: default_fixed_point_max_iter(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaConfig {
    #[serde(default = "default_draws")]
    pub draws: u64,
    /// `[nx, nt]` pairs; the configured grid is used when empty.
    #[serde(default)]
    pub grids: Vec<[usize; 2]>,
}

fn default_draws() -> u64 {
    20
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            draws: default_draws(),
            grids: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianConfig {
    /// Defaults to the configured `hamiltonian.alpha`.
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default = "default_ms")]
    pub m: Vec<f64>,
    #[serde(default = "default_ps")]
    pub p: Vec<f64>,
}

fn default_ms() -> Vec<f64> {
    vec![0.1, 1.0, 3.0, 10.0, 100.0]
}

fn default_ps() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0]
}

impl Default for HessianConfig {
    fn default() -> Self {
        Self {
            alphas: Vec::new(),
            m: default_ms(),
            p: default_ps(),
        }
    }
}

fn invalid(path: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{path}: {reason}"))
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be a positive number, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Validation(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        if !(1..=2).contains(&g.dim) {
            return Err(invalid("grid.dim", format!("must be 1 or 2, got {}", g.dim)));
        }
        if g.nx < 4 {
            return Err(invalid("grid.nx", format!("must be at least 4, got {}", g.nx)));
        }
        if g.nt < 2 {
            return Err(invalid("grid.nt", format!("must be at least 2, got {}", g.nt)));
        }
        positive("grid.horizon", g.horizon)?;
        positive("hamiltonian.alpha", self.hamiltonian.alpha)?;
        match self.coupling {
            CouplingConfig::Local { variant, exponent } => match (variant, exponent) {
                (LocalVariant::Power, Some(e)) if e >= 2.0 => {}
                (LocalVariant::Power, Some(e)) => {
                    return Err(invalid("coupling.exponent", format!("must be at least 2, got {e}")))
                }
                (LocalVariant::Power, None) => {
                    return Err(invalid("coupling.exponent", "required by the power coupling"))
                }
                (_, Some(_)) => return Err(invalid("coupling.exponent", "only allowed with the power coupling")),
                _ => {}
            },
            CouplingConfig::Nonlocal {
                sigma,
                weight,
                terminal_weight,
                ..
            } => {
                positive("coupling.sigma", sigma)?;
                if !(weight >= 0.0 && weight.is_finite()) {
                    return Err(invalid("coupling.weight", "must be non-negative"));
                }
                if !(terminal_weight >= 0.0 && terminal_weight.is_finite()) {
                    return Err(invalid("coupling.terminal_weight", "must be non-negative"));
                }
            }
        }
        let n = &self.newton;
        if n.max_iter == 0 {
            return Err(invalid("newton.max_iter", "must be at least 1"));
        }
        if n.fixed_point_max_iter == 0 {
            return Err(invalid("newton.fixed_point_max_iter", "must be at least 1"));
        }
        positive("newton.residual_tol", n.residual_tol)?;
        positive("newton.linear_tol", n.linear_tol)?;
        if !(n.damping > 0.0 && n.damping <= 1.0) {
            return Err(invalid("newton.damping", format!("must lie in (0, 1], got {}", n.damping)));
        }
        let needs_eps = matches!(
            self.experiment,
            Experiment::NewtonRate | Experiment::NonlocalRate | Experiment::FixedPointCompare
        );
        if needs_eps && self.epsilons.is_empty() {
            return Err(invalid("epsilons", "must not be empty"));
        }
        for (i, &e) in self.epsilons.iter().enumerate() {
            positive(&format!("epsilons[{i}]"), e)?;
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(invalid("output_dir", "must not be empty"));
        }
        if self.experiment == Experiment::NonlocalRate && !matches!(self.coupling, CouplingConfig::Nonlocal { .. }) {
            return Err(invalid("coupling.type", "nonlocal-rate needs a nonlocal coupling"));
        }
        if self.lemma.draws == 0 {
            return Err(invalid("lemma.draws", "must be at least 1"));
        }
        for (i, [nx, nt]) in self.lemma.grids.iter().enumerate() {
            if *nx < 4 || *nt < 2 {
                return Err(invalid(&format!("lemma.grids[{i}]"), "needs nx >= 4 and nt >= 2"));
            }
        }
        for (name, list) in [("hessian.alphas", &self.hessian.alphas), ("hessian.m", &self.hessian.m)] {
            for (i, &v) in list.iter().enumerate() {
                positive(&format!("{name}[{i}]"), v)?;
            }
        }
        for (i, v) in self.hessian.p.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid(&format!("hessian.p[{i}]"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self, nx: usize, nt: usize) -> mfg_newton::Result<GridSpec<f64>> {
        GridSpec::new(self.grid.dim, nx, nt, self.grid.horizon)
    }

    pub fn hamiltonian_spec(&self, grid: &GridSpec<f64>) -> mfg_newton::Result<HamiltonianSpec<f64>> {
        let h: Vec<f64> = (0..grid.spatial_len())
            .map(|s| match self.hamiltonian.h {
                HProfile::Constant => 1.0,
                HProfile::OneCosine => 1.0 + 0.5 * (std::f64::consts::TAU * grid.coordinate(s, 0)).cos(),
            })
            .collect();
        match self.hamiltonian.variant {
            HamiltonianVariant::Congestion => HamiltonianSpec::congestion(h, self.hamiltonian.alpha),
            HamiltonianVariant::SeparableQuadratic => HamiltonianSpec::separable_quadratic(h),
        }
    }

    pub fn local_coupling(&self) -> Option<mfg_newton::Result<LocalCoupling<f64>>> {
        match self.coupling {
            CouplingConfig::Local { variant, exponent } => Some(match variant {
                LocalVariant::Sigmoid => Ok(LocalCoupling::Sigmoid),
                LocalVariant::Linear => Ok(LocalCoupling::Linear),
                LocalVariant::Zero => Ok(LocalCoupling::Zero),
                LocalVariant::Power => LocalCoupling::power(exponent.unwrap_or(2.0)),
            }),
            CouplingConfig::Nonlocal { .. } => None,
        }
    }

    /// `(f, g)` kernel couplings on `grid`.
    pub fn kernel_couplings(
        &self,
        grid: &GridSpec<f64>,
    ) -> Option<mfg_newton::Result<(KernelCoupling<f64>, KernelCoupling<f64>)>> {
        match self.coupling {
            CouplingConfig::Nonlocal {
                sigma,
                outer,
                weight,
                terminal_weight,
            } => Some(KernelCoupling::gaussian(*grid, sigma).map(|k| {
                let outer = match outer {
                    OuterConfig::Identity => KernelOuter::Identity,
                    OuterConfig::Sigmoid => KernelOuter::Sigmoid,
                };
                let k = k.with_outer(outer);
                (k.clone().with_weight(weight), k.with_weight(terminal_weight))
            })),
            CouplingConfig::Local { .. } => None,
        }
    }

    pub fn newton_config(&self) -> NewtonConfig<f64> {
        let n = &self.newton;
        NewtonConfig {
            max_iter: n.max_iter,
            residual_tol: n.residual_tol,
            linear_method: match n.linear_method {
                LinearMethodConfig::Direct => LinearMethod::Direct,
                LinearMethodConfig::Iterative => LinearMethod::Iterative {
                    tol: n.linear_tol,
                    max_iter: n.linear_max_iter,
                },
            },
            damping: n.damping,
            record_timing: self.timing,
            ..NewtonConfig::default()
        }
    }

    pub fn fixed_point_config(&self) -> NewtonConfig<f64> {
        NewtonConfig {
            max_iter: self.newton.fixed_point_max_iter,
            ..self.newton_config()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "experiment": "newton-rate",
            "grid": {"nx": 16, "nt": 8},
            "output_dir": "out"
        })
    }

    fn parse(v: &serde_json::Value) -> Result<RunConfig, CliError> {
        RunConfig::parse(&v.to_string())
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = parse(&base()).unwrap();
        assert_eq!(cfg.grid.dim, 1);
        assert_eq!(cfg.epsilons, vec![1e-2]);
        assert!(matches!(cfg.coupling, CouplingConfig::Local { variant: LocalVariant::Sigmoid, .. }));
        assert!(!cfg.timing);
    }

    #[test]
    fn small_grid_cites_key() {
        let mut v = base();
        v["grid"]["nx"] = 2.into();
        let err = parse(&v).unwrap_err().to_string();
        assert!(err.contains("grid.nx") && err.contains("at least 4"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let mut v = base();
        v["grid"]["nz"] = 3.into();
        let err = parse(&v).unwrap_err().to_string();
        assert!(err.starts_with("grid"), "{err}");
        assert!(err.contains("nz"), "{err}");
        let mut v = base();
        v["coupling"] = serde_json::json!({"type": "nonlocal", "sigma": 0.1, "width": 2});
        assert!(parse(&v).is_err());
    }

    #[test]
    fn profile_names() {
        let mut v = base();
        v["hamiltonian"] = serde_json::json!({"variant": "congestion", "alpha": 0.5, "h": "1+0.5cos(2pix)"});
        let cfg = parse(&v).unwrap();
        let g = cfg.grid_spec(16, 8).unwrap();
        let h = cfg.hamiltonian_spec(&g).unwrap();
        assert_eq!(h.h()[0], 1.5);
        v["hamiltonian"]["h"] = "sin".into();
        let err = parse(&v).unwrap_err().to_string();
        assert!(err.starts_with("hamiltonian.h"), "{err}");
    }

    #[test]
    fn nonlocal_rate_needs_kernel() {
        let mut v = base();
        v["experiment"] = "nonlocal-rate".into();
        let err = parse(&v).unwrap_err().to_string();
        assert!(err.contains("coupling"), "{err}");
        v["coupling"] = serde_json::json!({"type": "nonlocal", "sigma": 0.1});
        assert!(parse(&v).is_ok());
    }

    #[test]
    fn damping_range() {
        let mut v = base();
        v["newton"] = serde_json::json!({"damping": 1.5});
        let err = parse(&v).unwrap_err().to_string();
        assert!(err.starts_with("newton.damping"), "{err}");
    }
}
