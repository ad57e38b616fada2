use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "helfrich",
    version,
    about = "Canham-Helfrich energies, diagnostics and constrained shape optimization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the mesh-based subcommands. Per-phase flags take a
/// comma-separated list or a single value applied to every phase.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run specification; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input mesh (.off or .obj).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Per-face phase labels, one integer per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub h0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub sigma: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy report for a mesh and its phases.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Constrained minimization; writes trajectory.csv, final.off and state.json.
    Minimize {
        #[command(flatten)]
        common: Common,
        /// Target total area (default: measured on the input).
        #[arg(long)]
        area: Option<f64>,
        /// Target enclosed volume (default: measured on the input).
        #[arg(long)]
        volume: Option<f64>,
        /// Comma-separated per-phase area targets.
        #[arg(long, value_delimiter = ',')]
        phase_areas: Option<Vec<f64>>,
        /// Enables the no-overlap gate between phases.
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Seed for the initial perturbation.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Inequality diagnostics; exit status 4 if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of random first-variation fields.
        #[arg(long)]
        n_fields: Option<usize>,
        /// Largest point multiplicity of the surface.
        #[arg(long)]
        multiplicity: Option<u32>,
        /// Also run the mesh-refinement probes.
        #[arg(long)]
        refinement: bool,
    },
    /// No-overlap check between two phase supports; exit status 4 if the gate fails.
    Overlap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phase_a: Option<u32>,
        #[arg(long)]
        phase_b: Option<u32>,
        #[arg(long)]
        eps0: Option<f64>,
        /// Number of sampled radii.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Hessian of the quadratic density, its spectrum and the convexity verdict.
    Hessian {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
        #[arg(long)]
        json: bool,
    },
}
