//! Run specification: a JSON config file merged with command-line flags.
//! Flags always win; relative paths in a config resolve against the
//! config file's own directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use helfrich::optimize::RunConfig;
use helfrich::{MaterialParams, VerifyConfig};
use serde::Deserialize;

use crate::cli::Common;

/// Targets with every field optional; missing ones are measured on the input mesh.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSpec {
    pub area: Option<f64>,
    pub volume: Option<f64>,
    pub phase_areas: Option<Vec<f64>>,
    pub eps0: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapSpec {
    pub phase_a: u32,
    pub phase_b: u32,
    pub eps0: Option<f64>,
    pub samples: usize,
}

impl Default for OverlapSpec {
    fn default() -> Self {
        OverlapSpec {
            phase_a: 1,
            phase_b: 2,
            eps0: None,
            samples: 6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    /// Must match the subcommand when present.
    pub command: Option<String>,
    pub mesh: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// One entry per phase, in label order.
    pub params: Vec<MaterialParams>,
    pub constraints: ConstraintSpec,
    pub run: RunConfig,
    pub verify: VerifyConfig,
    pub overlap: OverlapSpec,
    pub out: Option<PathBuf>,
}

/// Parameters used when neither config nor flags give any: unit bending
/// rigidity, a Gaussian rigidity inside the convexity window, no spontaneous
/// curvature, no line tension.
pub const DEFAULT_PARAMS: MaterialParams = MaterialParams {
    beta: 1.0,
    gamma: -0.5,
    h0: 0.0,
    sigma: 0.0,
    phase_id: 1,
};

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut spec: RunSpec =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut spec.mesh, &mut spec.labels, &mut spec.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    /// Config (if any) with the shared flags applied on top.
    pub fn resolve(command: &str, common: &Common) -> Result<Self> {
        let mut spec = match &common.config {
            Some(path) => RunSpec::load(path)?,
            None => RunSpec::default(),
        };
        if let Some(c) = &spec.command {
            if c != command {
                bail!("config is for command `{c}`, invoked as `{command}`");
            }
        }
        if let Some(m) = &common.mesh {
            spec.mesh = Some(m.clone());
        }
        if let Some(l) = &common.labels {
            spec.labels = Some(l.clone());
        }
        if let Some(o) = &common.out {
            spec.out = Some(o.clone());
        }
        Ok(spec)
    }

    pub fn mesh_path(&self) -> Result<&Path> {
        let p = self
            .mesh
            .as_deref()
            .context("no input mesh (use --mesh or set `mesh` in the config)")?;
        if !p.exists() {
            bail!("mesh file {} does not exist", p.display());
        }
        Ok(p)
    }

    pub fn labels_path(&self) -> Result<Option<&Path>> {
        match self.labels.as_deref() {
            Some(p) if !p.exists() => bail!("label file {} does not exist", p.display()),
            other => Ok(other),
        }
    }

    /// Per-phase parameters for `n_phases` phases, with flag lists applied.
    /// A single flag value applies to every phase.
    pub fn material_params(&self, common: &Common, n_phases: usize) -> Result<Vec<MaterialParams>> {
        let mut params = if self.params.is_empty() {
            vec![DEFAULT_PARAMS; n_phases]
        } else {
            self.params.clone()
        };
        if params.len() != n_phases {
            bail!("{} parameter sets for {} phases", params.len(), n_phases);
        }
        let fields: [(&str, &Option<Vec<f64>>, fn(&mut MaterialParams) -> &mut f64); 4] = [
            ("--beta", &common.beta, |p| &mut p.beta),
            ("--gamma", &common.gamma, |p| &mut p.gamma),
            ("--h0", &common.h0, |p| &mut p.h0),
            ("--sigma", &common.sigma, |p| &mut p.sigma),
        ];
        for (flag, values, field) in fields {
            let Some(values) = values else { continue };
            match values.len() {
                1 => params.iter_mut().for_each(|p| *field(p) = values[0]),
                n if n == n_phases => params.iter_mut().zip(values).for_each(|(p, &v)| *field(p) = v),
                n => bail!("{flag} has {n} values for {n_phases} phases"),
            }
        }
        for (i, p) in params.iter_mut().enumerate() {
            p.phase_id = i as u32 + 1;
            p.validate().with_context(|| format!("phase {}", i + 1))?;
        }
        Ok(params)
    }
}
