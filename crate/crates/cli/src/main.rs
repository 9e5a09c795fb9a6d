mod commands;
mod reproduce;
mod table;

use clap::{Parser, Subcommand, ValueEnum};
use fibergreen::config::{load_config, Config, ConfigError};
use fibergreen::multiscatter::MultiScatterError;
use fibergreen::observables::ObservablesError;
use fibergreen::qdynamics::QDynError;
use fibergreen::spectral::SpectralError;
use std::path::PathBuf;
use std::process::ExitCode;
use table::TableError;

#[derive(Parser, Debug)]
#[command(name = "fibergreen", version, about = "Green's-tensor emitter physics for parallel nanofibers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML problem definition; reproduce targets carry their own
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory [default: sweep.out_dir, else `out`]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// overrides solver.quad_rel_tol
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// overrides solver.m_max
    #[arg(long, global = true)]
    m_max: Option<usize>,
    /// overrides emitter.wavelength_nm (and the partners')
    #[arg(long, global = true)]
    wavelength: Option<f64>,
    /// paper-scale grids for reproduce targets
    #[arg(long, global = true)]
    full_res: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Γ/Γ₀, Γ₁D/Γ₀, η, F_p and Δω/γ₀ of the configured emitter
    Rates,
    /// guided modes of the fiber array at the emitter wavelength
    Modes,
    /// coupling matrix and collective resonances of emitter + partners
    Coupling,
    /// master-equation evolution and steady state
    Dynamics,
    /// grid over the axes of the [sweep] section
    Sweep,
    /// canned figure sweeps
    Reproduce {
        #[arg(value_enum)]
        target: Target,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Fig1b,
    Fig1c,
    Fig1d,
    Fig1f,
    Fig2a,
    #[value(name = "fig2b-f")]
    Fig2bF,
    #[value(name = "suppN")]
    SuppN,
}

/// Failure classes mapped onto exit codes 1 (input) and 2 (numerical).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::NoGuiding | SpectralError::Scatter(MultiScatterError::InsideFiber { .. }) => CliError::Input(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ObservablesError> for CliError {
    fn from(e: ObservablesError) -> Self {
        match e {
            ObservablesError::Config(c) => c.into(),
            ObservablesError::Spectral(s) => s.into(),
            ObservablesError::Eigen => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<QDynError> for CliError {
    fn from(e: QDynError) -> Self {
        match e {
            QDynError::StepUnderflow(..) | QDynError::SteadyResidual(_) => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Everything a command needs after flags are applied.
pub struct Ctx {
    pub cfg: Config,
    pub out_dir: PathBuf,
    pub full_res: bool,
    pub command: String,
}

impl Ctx {
    /// Canonical text hashed into the provenance block.
    pub fn config_text(&self) -> String {
        self.cfg.to_toml_string()
    }

    pub fn provenance(&self) -> table::Provenance {
        let solver = serde_json::to_value(self.cfg.solver).expect("settings serialize");
        table::Provenance::new(&self.command, &self.config_text(), solver)
    }

    pub fn write(&self, t: &table::ResultTable) -> Result<(), CliError> {
        let path = t.write(&self.out_dir, &self.provenance())?;
        println!("{}", path.display());
        Ok(())
    }
}

fn apply_overrides(cli: &Cli, cfg: &mut Config) -> Result<(), CliError> {
    if let Some(t) = cli.tol {
        cfg.solver.quad_rel_tol = t;
    }
    if let Some(m) = cli.m_max {
        cfg.solver.m_max = Some(m);
    }
    if let Some(w) = cli.wavelength {
        cfg.emitter.wavelength_nm = w;
        for p in &mut cfg.partners {
            p.wavelength_nm = w;
        }
    }
    cfg.validate()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Input(e.to_string()))?;
    }
    let mut cfg = match (&cli.config, cli.cmd) {
        (Some(p), _) => load_config(p)?,
        (None, Cmd::Reproduce { target }) => reproduce::default_config(target),
        (None, _) => return Err(CliError::Input("--config is required for this subcommand".into())),
    };
    apply_overrides(cli, &mut cfg)?;
    let command = match cli.cmd {
        Cmd::Reproduce { target } => format!("reproduce {}", target.to_possible_value().expect("named").get_name()),
        c => format!("{c:?}").to_lowercase(),
    };
    let out_dir = cli.out_dir.clone().or_else(|| cfg.sweep.out_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| "out".into());
    let ctx = Ctx { cfg, out_dir, full_res: cli.full_res, command };
    match cli.cmd {
        Cmd::Rates => commands::rates(&ctx),
        Cmd::Modes => commands::modes(&ctx),
        Cmd::Coupling => commands::coupling(&ctx),
        Cmd::Dynamics => commands::dynamics(&ctx),
        Cmd::Sweep => commands::sweep(&ctx),
        Cmd::Reproduce { target } => reproduce::run(&ctx, target),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fibergreen: {e}");
            ExitCode::from(e.code())
        }
    }
}
