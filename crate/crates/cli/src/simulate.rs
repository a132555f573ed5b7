use std::path::PathBuf;

use clap::Args;
use sgpca::io::masked_to_nan;
use sgpca::prelude::*;
use sgpca::sim::Setting;

use crate::output::{self, Manifest};
use crate::CliResult;

/// Data-generation options shared by `simulate` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Scenario: a (one component), b (four, element-sparse) or c (four, row-sparse).
    #[arg(long, default_value = "a")]
    pub setting: Setting,
    #[arg(long, default_value = "gaussian")]
    pub family: Family,
    /// Fraction of cells masked at random.
    #[arg(long, default_value_t = 0.0)]
    pub missing: f64,
    /// Override the number of observations.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the number of variables.
    #[arg(long)]
    pub p: Option<usize>,
    /// Signal strength of every component (default depends on the family).
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl SimArgs {
    pub fn spec(&self, seed: u64) -> SimSpec {
        let mut spec = SimSpec::setting(self.setting, self.family, seed);
        spec.n = self.n.unwrap_or(spec.n);
        spec.p = self.p.unwrap_or(spec.p);
        spec.missing_rate = self.missing;
        if let Some(l) = self.lambda {
            spec.lambdas = vec![l; spec.r_star];
        }
        spec
    }

    pub fn record(&self, spec: &SimSpec, m: &mut Manifest) {
        m.set("setting", self.setting);
        m.set("family", self.family);
        m.set("missing", self.missing);
        m.set("n", spec.n);
        m.set("p", spec.p);
        m.set("lambda", spec.lambdas[0]);
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sgpca_sim")]
    pub out: PathBuf,
    /// Read options from a key=value file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let spec = args.sim.spec(args.seed);
    let (data, truth) = generate_data(&spec)?;
    let dir = &args.out;
    output::ensure_dir(dir)?;
    output::write_matrix(dir, "X.csv", &masked_to_nan(&data))?;
    output::write_matrix(dir, "Theta.csv", &truth.theta_star)?;
    output::write_matrix(dir, "Q.csv", &truth.q)?;
    output::write_matrix(dir, "P.csv", &truth.p)?;
    output::write_vector(dir, "d.csv", &truth.d)?;

    let mut m = Manifest::new("simulate");
    args.sim.record(&spec, &mut m);
    m.set("seed", args.seed);
    m.set("out", dir.display());
    m.set("r_star", spec.r_star);
    m.set("q_star", spec.q_star);
    m.set("q_mode", spec.q_mode);
    m.write(dir)
}
