//! Command-line front end: named or file-specified designs in; variances,
//! power, required sample sizes, sweep CSVs and verification reports out.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 invalid input, 3 infeasible
//! or degenerate design.

use crate::correlation::CorrelationStructure;
use crate::design::{cell_plan, CellPlan, CellSizes, DesignFile, TrialDesign};
use crate::error::{Error, Result};
use crate::power::{power_for, required_cell_size, required_cluster_multiplier, DEFAULT_M_MAX};
use crate::variance::{effect_variance, EffectQuery, Estimand, Model};
use crate::verify::{self, VerifyOptions, TABLE_ROWS};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::Path;

/// Top-level command specification.
#[derive(Debug, Parser)]
#[command(
    name = "splitplot-lcrt",
    version,
    about = "Power and sample size for split-plot factorial longitudinal cluster randomised trials"
)]
pub struct RunSpec {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Variance decomposition and power for one fully specified analysis
    Power(PowerArgs),
    /// Solve for the required cell size or cluster multiplier
    Size(SizeArgs),
    /// Required cell size for all five (model, effect) rows per correlation scenario (CSV)
    Table(TableArgs),
    /// Long-format variance/power sweep over m or wpicc (CSV)
    Curve(CurveArgs),
    /// Run the oracle-equivalence, identity, table and Monte-Carlo suites
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// Model with the interaction term
    Interaction,
    /// Model without the interaction term
    NoInteraction,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Interaction => Model::WithInteraction,
            ModelArg::NoInteraction => Model::NoInteraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EffectArg {
    /// Cluster-level effect, individual intervention at control
    Cluster,
    /// Cluster-level effect averaged over the individual allocation
    ClusterMarginal,
    /// Individual-level effect
    Individual,
    /// Interaction between the interventions
    Interaction,
}

impl From<EffectArg> for Estimand {
    fn from(e: EffectArg) -> Self {
        match e {
            EffectArg::Cluster => Estimand::ClusterConditional,
            EffectArg::ClusterMarginal => Estimand::ClusterMarginal,
            EffectArg::Individual => Estimand::Individual,
            EffectArg::Interaction => Estimand::Interaction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveForArg {
    /// Smallest integer observations per cluster-period
    CellSize,
    /// Copies of the whole design (clusters per sequence multiplier)
    ClusterMultiplier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    /// Observations per cluster-period
    M,
    /// Within-period ICC (between-period ICC follows at --icc-ratio)
    Wpicc,
}

/// Design source plus analysis inputs shared by the computing commands.
#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Named design (shares, sw:<T>, parallel:<T>, crossover:<T>) or a JSON design file path
    #[arg(long)]
    pub design: String,
    /// Number of periods for a named design given without :<T>
    #[arg(long)]
    pub periods: Option<usize>,
    /// Observations per cluster-period
    #[arg(long)]
    pub m: Option<u64>,
    /// Fraction of individuals allocated to the individual-level intervention
    #[arg(long = "pi-z")]
    pub pi_z: Option<f64>,
    /// Total variance of one observation
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Within-period intraclass correlation
    #[arg(long)]
    pub wpicc: Option<f64>,
    /// Between-period intraclass correlation (defaults to wpicc: exchangeable)
    #[arg(long)]
    pub bpicc: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Outcome model
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Treatment effect of interest
    #[arg(long, value_enum)]
    pub effect: EffectArg,
    /// Effect size to detect
    #[arg(long)]
    pub delta: f64,
    /// Two-sided significance level
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct SizeArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, value_enum)]
    pub effect: EffectArg,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Target power
    #[arg(long, default_value_t = 0.8)]
    pub power: f64,
    /// Quantity to solve for
    #[arg(long, value_enum, default_value_t = SolveForArg::CellSize)]
    pub solve_for: SolveForArg,
    /// Upper bound of the cell-size search
    #[arg(long, default_value_t = DEFAULT_M_MAX)]
    pub m_max: u64,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    pub power: f64,
    /// Correlation scenario "wpicc" or "wpicc,bpicc"; repeatable.
    /// Defaults to 0.2 (exchangeable) and 0.24,0.192 (block exchangeable).
    #[arg(long)]
    pub scenario: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_M_MAX)]
    pub m_max: u64,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Sweep variable
    #[arg(long, value_enum)]
    pub sweep: SweepArg,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long)]
    pub step: f64,
    /// Between- to within-period ICC ratio held fixed during a wpicc sweep
    #[arg(long)]
    pub icc_ratio: Option<f64>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Seed for the randomised sweep and the Monte-Carlo suite
    #[arg(long, default_value_t = 987_654_321)]
    pub seed: u64,
    /// Monte-Carlo replicates
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
    /// Minimum number of sweep configurations
    #[arg(long, default_value_t = 220)]
    pub sweep_size: usize,
    /// Skip the Monte-Carlo suite
    #[arg(long, default_value_t = false)]
    pub skip_monte_carlo: bool,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

// ---------------------------------------------------------------------------
// Input resolution
// ---------------------------------------------------------------------------

/// A fully resolved analysis context, with every defaulted input flagged so
/// reports can echo it.
#[derive(Debug)]
struct Resolved {
    design: TrialDesign,
    design_label: String,
    sizes: Option<CellSizes>,
    m_label: String,
    pi_z: f64,
    pi_z_defaulted: bool,
    /// Present when a within-period ICC was given (flag or file); commands
    /// with their own correlation source (table scenarios) run without it.
    corr: Option<CorrelationStructure>,
    sigma2: f64,
    sigma2_defaulted: bool,
    bpicc_defaulted: bool,
}

impl Resolved {
    fn plan(&self) -> Result<CellPlan> {
        let sizes = self
            .sizes
            .clone()
            .ok_or_else(|| Error::Validation("no cell size given: pass --m or set it in the design file".to_string()))?;
        cell_plan(&self.design, sizes, self.pi_z)
    }

    fn require_corr(&self) -> Result<CorrelationStructure> {
        self.corr.ok_or_else(|| {
            Error::Validation(
                "no within-period ICC given: pass --wpicc or set correlation in the design file"
                    .to_string(),
            )
        })
    }

    fn echo(&self, out: &mut String) {
        let _ = writeln!(out, "design: {}", self.design_label);
        let _ = writeln!(
            out,
            "clusters: {}, periods: {}",
            self.design.clusters(),
            self.design.periods()
        );
        let _ = writeln!(out, "cell size m: {}", self.m_label);
        let _ = writeln!(
            out,
            "pi_z: {}{}",
            self.pi_z,
            if self.pi_z_defaulted { " (default)" } else { "" }
        );
        let _ = writeln!(
            out,
            "sigma2: {}{}",
            self.sigma2,
            if self.sigma2_defaulted { " (default)" } else { "" }
        );
        if let Some(corr) = &self.corr {
            let _ = writeln!(out, "wpicc: {}", corr.wpicc());
            let _ = writeln!(
                out,
                "bpicc: {}{}",
                corr.bpicc(),
                if self.bpicc_defaulted { " (exchangeable default)" } else { "" }
            );
        }
    }
}

fn parse_named_design(name: &str, periods: Option<usize>) -> Result<Option<TrialDesign>> {
    let (kind, embedded) = match name.split_once(':') {
        Some((k, t)) => {
            let t: usize = t
                .parse()
                .map_err(|_| Error::Validation(format!("bad period count in design '{name}'")))?;
            (k, Some(t))
        }
        None => (name, None),
    };
    let t = || -> Result<usize> {
        embedded.or(periods).ok_or_else(|| {
            Error::Validation(format!(
                "design '{kind}' needs a period count: use {kind}:<T> or --periods"
            ))
        })
    };
    let design = match kind {
        "shares" => {
            if embedded.is_some() || periods.is_some() {
                return Err(Error::Validation(
                    "the shares design has a fixed 6-period layout; drop --periods".to_string(),
                ));
            }
            Some(TrialDesign::shares())
        }
        "sw" | "stepped-wedge" => Some(TrialDesign::stepped_wedge(t()?)?),
        "parallel" => Some(TrialDesign::parallel(t()?)?),
        "crossover" => Some(TrialDesign::crossover(t()?)?),
        _ => None,
    };
    Ok(design)
}

fn resolve(args: &DesignArgs) -> Result<Resolved> {
    let named = parse_named_design(&args.design, args.periods)?;
    let (design, design_label, file) = match named {
        Some(d) => (d, args.design.clone(), None),
        None => {
            let path = Path::new(&args.design);
            if !path.exists() {
                return Err(Error::Validation(format!(
                    "'{}' is neither a named design (shares, sw:<T>, parallel:<T>, crossover:<T>) \
                     nor an existing design file",
                    args.design
                )));
            }
            if args.periods.is_some() {
                return Err(Error::Validation(
                    "--periods conflicts with a design file (the file fixes the layout)".to_string(),
                ));
            }
            let file = DesignFile::from_path(path)?;
            let design = file.to_design()?;
            (design, format!("file {}", args.design), Some(file))
        }
    };

    let file_sizes = file.as_ref().and_then(|f| {
        f.cell_sizes
            .clone()
            .map(CellSizes::PerCell)
            .or(f.cell_size.map(CellSizes::Constant))
    });
    let sizes = match (args.m, file_sizes) {
        (Some(m), Some(CellSizes::PerCell(_))) => {
            let _ = m;
            return Err(Error::Validation(
                "--m conflicts with the per-cell cell_sizes matrix in the design file".to_string(),
            ));
        }
        (Some(m), _) => Some(CellSizes::Constant(m)),
        (None, sizes) => sizes,
    };
    let m_label = match &sizes {
        Some(CellSizes::Constant(m)) => m.to_string(),
        Some(CellSizes::PerCell(_)) => "per-cell matrix from design file".to_string(),
        None => "unset".to_string(),
    };

    let file_pi_z = file.as_ref().and_then(|f| f.pi_z);
    let pi_z = args.pi_z.or(file_pi_z);
    let (pi_z, pi_z_defaulted) = match pi_z {
        Some(p) => (p, false),
        None => (0.5, true),
    };

    let file_corr = file.as_ref().and_then(|f| f.correlation.clone());
    let sigma2 = args.sigma2.or(file_corr.as_ref().map(|c| c.sigma2));
    let sigma2_defaulted = sigma2.is_none();
    let sigma2 = sigma2.unwrap_or(1.0);
    let wpicc = args.wpicc.or(file_corr.as_ref().map(|c| c.wpicc));
    let bpicc = args.bpicc.or(file_corr.as_ref().map(|c| c.bpicc));
    let bpicc_defaulted = bpicc.is_none();
    let corr = match wpicc {
        Some(wp) => Some(CorrelationStructure::new(sigma2, wp, bpicc.unwrap_or(wp))?),
        None if bpicc.is_some() => {
            return Err(Error::Validation(
                "--bpicc was given without --wpicc".to_string(),
            ))
        }
        None => None,
    };

    Ok(Resolved {
        design,
        design_label,
        sizes,
        m_label,
        pi_z,
        pi_z_defaulted,
        corr,
        sigma2,
        sigma2_defaulted,
        bpicc_defaulted,
    })
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

const NO_SMALL_SAMPLE_NOTE: &str =
    "note: normal-approximation power; no small-sample correction is applied.";

fn cmd_power(args: &PowerArgs) -> Result<String> {
    let resolved = resolve(&args.design)?;
    let corr = resolved.require_corr()?;
    let plan = resolved.plan()?;
    let query = EffectQuery::new(args.effect.into(), args.model.into())?;
    let result = effect_variance(&resolved.design, &plan, &corr, query)?;
    let power = power_for(result.value, args.delta, args.alpha)?;

    let mut out = String::new();
    let _ = writeln!(out, "command: power");
    resolved.echo(&mut out);
    let _ = writeln!(out, "model: {}", Model::from(args.model));
    let _ = writeln!(out, "effect: {}", Estimand::from(args.effect));
    let _ = writeln!(out, "delta: {}", args.delta);
    let _ = writeln!(out, "alpha: {}", args.alpha);
    let _ = writeln!(out, "variance: {:e}", result.value);
    let _ = writeln!(out, "  v_lcrt_part: {:e}", result.v_lcrt_part);
    let _ = writeln!(out, "  inflation_part: {:e}", result.inflation_part);
    let _ = writeln!(out, "formula: {}", result.formula_id);
    let _ = writeln!(out, "power: {power}");
    let _ = writeln!(out, "{NO_SMALL_SAMPLE_NOTE}");
    Ok(out)
}

fn cmd_size(args: &SizeArgs) -> Result<String> {
    let resolved = resolve(&args.design)?;
    let corr = resolved.require_corr()?;
    let query = EffectQuery::new(args.effect.into(), args.model.into())?;

    let mut out = String::new();
    let _ = writeln!(out, "command: size");
    resolved.echo(&mut out);
    let _ = writeln!(out, "model: {}", Model::from(args.model));
    let _ = writeln!(out, "effect: {}", Estimand::from(args.effect));
    let _ = writeln!(out, "delta: {}", args.delta);
    let _ = writeln!(out, "alpha: {}", args.alpha);
    let _ = writeln!(out, "target power: {}", args.power);

    match args.solve_for {
        SolveForArg::CellSize => {
            let m = required_cell_size(
                &resolved.design,
                &corr,
                resolved.pi_z,
                query,
                args.delta,
                args.alpha,
                args.power,
                args.m_max,
            )?;
            let power_at = |m: u64| -> Result<f64> {
                let plan = cell_plan(&resolved.design, CellSizes::Constant(m), resolved.pi_z)?;
                let var = effect_variance(&resolved.design, &plan, &corr, query)?.value;
                power_for(var, args.delta, args.alpha)
            };
            let _ = writeln!(out, "solve_for: cell-size");
            let _ = writeln!(out, "required m: {m}");
            let _ = writeln!(out, "power at {m}: {}", power_at(m)?);
            if m > 1 {
                let _ = writeln!(out, "power at {}: {}", m - 1, power_at(m - 1)?);
            } else {
                let _ = writeln!(out, "power at 0: not defined (m = 1 is the floor)");
            }
        }
        SolveForArg::ClusterMultiplier => {
            let m = resolved
                .sizes
                .as_ref()
                .and_then(|s| match s {
                    CellSizes::Constant(m) => Some(*m),
                    CellSizes::PerCell(_) => None,
                })
                .ok_or_else(|| {
                    Error::Validation(
                        "solving for the cluster multiplier needs a constant --m".to_string(),
                    )
                })?;
            let k = required_cluster_multiplier(
                &resolved.design,
                m,
                &corr,
                resolved.pi_z,
                query,
                args.delta,
                args.alpha,
                args.power,
            )?;
            let power_at = |k: u64| -> Result<f64> {
                let d = resolved.design.replicate(k as usize)?;
                let plan = cell_plan(&d, CellSizes::Constant(m), resolved.pi_z)?;
                let var = effect_variance(&d, &plan, &corr, query)?.value;
                power_for(var, args.delta, args.alpha)
            };
            let _ = writeln!(out, "solve_for: cluster-multiplier");
            let _ = writeln!(out, "required design copies: {k}");
            let _ = writeln!(out, "power at {k}: {}", power_at(k)?);
            if k > 1 {
                let _ = writeln!(out, "power at {}: {}", k - 1, power_at(k - 1)?);
            } else {
                let _ = writeln!(out, "power at 0: not defined (1 copy is the floor)");
            }
        }
    }
    let _ = writeln!(out, "{NO_SMALL_SAMPLE_NOTE}");
    Ok(out)
}

fn parse_scenarios(args: &TableArgs, sigma2: f64) -> Result<Vec<(String, CorrelationStructure)>> {
    let specs: Vec<String> = if args.scenario.is_empty() {
        vec!["0.2".to_string(), "0.24,0.192".to_string()]
    } else {
        args.scenario.clone()
    };
    specs
        .iter()
        .map(|s| {
            let (wp, bp) = match s.split_once(',') {
                Some((w, b)) => {
                    let wp: f64 = w.trim().parse().map_err(|_| {
                        Error::Validation(format!("bad scenario '{s}': expected wpicc or wpicc,bpicc"))
                    })?;
                    let bp: f64 = b.trim().parse().map_err(|_| {
                        Error::Validation(format!("bad scenario '{s}': expected wpicc or wpicc,bpicc"))
                    })?;
                    (wp, bp)
                }
                None => {
                    let wp: f64 = s.trim().parse().map_err(|_| {
                        Error::Validation(format!("bad scenario '{s}': expected wpicc or wpicc,bpicc"))
                    })?;
                    (wp, wp)
                }
            };
            let corr = CorrelationStructure::new(sigma2, wp, bp)?;
            Ok((format!("wpicc={wp};bpicc={bp}"), corr))
        })
        .collect()
}

fn cmd_table(args: &TableArgs) -> Result<(String, String)> {
    let resolved = resolve(&args.design)?;
    let scenarios = parse_scenarios(args, resolved.sigma2)?;

    let mut csv = String::from("model,estimand,scenario,required_m,power_at_m,power_at_m_minus_1\n");
    for (label, corr) in &scenarios {
        for &(est, model) in TABLE_ROWS.iter() {
            let query = EffectQuery::new(est, model)?;
            let m = required_cell_size(
                &resolved.design,
                corr,
                resolved.pi_z,
                query,
                args.delta,
                args.alpha,
                args.power,
                args.m_max,
            )?;
            let power_at = |m: u64| -> Result<f64> {
                let plan = cell_plan(&resolved.design, CellSizes::Constant(m), resolved.pi_z)?;
                let var = effect_variance(&resolved.design, &plan, corr, query)?.value;
                power_for(var, args.delta, args.alpha)
            };
            let below = if m > 1 {
                format!("{}", power_at(m - 1)?)
            } else {
                String::new()
            };
            let _ = writeln!(csv, "{model},{est},{label},{m},{},{below}", power_at(m)?);
        }
    }

    let mut echo = String::new();
    let _ = writeln!(echo, "command: table");
    resolved.echo(&mut echo);
    let _ = writeln!(echo, "delta: {}", args.delta);
    let _ = writeln!(echo, "alpha: {}", args.alpha);
    let _ = writeln!(echo, "target power: {}", args.power);
    let _ = writeln!(
        echo,
        "scenarios: {}",
        scenarios.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(echo, "{NO_SMALL_SAMPLE_NOTE}");
    Ok((csv, echo))
}

fn cmd_curve(args: &CurveArgs) -> Result<(String, String)> {
    let resolved = resolve(&args.design)?;
    if args.step <= 0.0 || !args.step.is_finite() {
        return Err(Error::Validation(format!("bad sweep step {}", args.step)));
    }
    if args.to < args.from {
        return Err(Error::Validation(format!(
            "empty sweep range: from {} to {}",
            args.from, args.to
        )));
    }

    let mut csv = String::from("sweep_value,model,estimand,variance,power\n");
    let mut rows = 0usize;
    match args.sweep {
        SweepArg::M => {
            let corr = resolved.require_corr()?;
            if args.from < 1.0 {
                return Err(Error::Validation("cell-size sweep must start at m >= 1".to_string()));
            }
            let mut m = args.from.round() as u64;
            let step = args.step.round().max(1.0) as u64;
            let to = args.to.floor() as u64;
            while m <= to {
                let plan = cell_plan(&resolved.design, CellSizes::Constant(m), resolved.pi_z)?;
                for &(est, model) in TABLE_ROWS.iter() {
                    let query = EffectQuery::new(est, model)?;
                    let var = effect_variance(&resolved.design, &plan, &corr, query)?.value;
                    let power = power_for(var, args.delta, args.alpha)?;
                    let _ = writeln!(csv, "{m},{model},{est},{var:e},{power}");
                    rows += 1;
                }
                m += step;
            }
        }
        SweepArg::Wpicc => {
            let sizes = resolved.sizes.clone().ok_or_else(|| {
                Error::Validation("a wpicc sweep needs a fixed cell size: pass --m".to_string())
            })?;
            let ratio = args
                .icc_ratio
                .or_else(|| {
                    let corr = resolved.corr.as_ref()?;
                    let wp = corr.wpicc();
                    (wp > 0.0).then(|| corr.bpicc() / wp)
                })
                .unwrap_or(0.8);
            if !(0.0..=1.0).contains(&ratio) {
                return Err(Error::Validation(format!(
                    "--icc-ratio must be in [0, 1], got {ratio}"
                )));
            }
            let plan = cell_plan(&resolved.design, sizes, resolved.pi_z)?;
            let mut wp = args.from;
            while wp <= args.to + 1e-12 {
                let corr = CorrelationStructure::new(resolved.sigma2, wp, ratio * wp)?;
                for &(est, model) in TABLE_ROWS.iter() {
                    let query = EffectQuery::new(est, model)?;
                    let var = effect_variance(&resolved.design, &plan, &corr, query)?.value;
                    let power = power_for(var, args.delta, args.alpha)?;
                    let _ = writeln!(csv, "{wp},{model},{est},{var:e},{power}");
                    rows += 1;
                }
                wp += args.step;
            }
        }
    }
    if rows == 0 {
        return Err(Error::Validation("empty sweep range".to_string()));
    }

    let mut echo = String::new();
    let _ = writeln!(echo, "command: curve");
    resolved.echo(&mut echo);
    let _ = writeln!(echo, "delta: {}", args.delta);
    let _ = writeln!(echo, "alpha: {}", args.alpha);
    let _ = writeln!(
        echo,
        "sweep: {} from {} to {} step {}",
        match args.sweep {
            SweepArg::M => "m",
            SweepArg::Wpicc => "wpicc",
        },
        args.from,
        args.to,
        args.step
    );
    if args.sweep == SweepArg::Wpicc {
        let _ = writeln!(
            echo,
            "icc ratio: {}",
            args.icc_ratio.map_or("from bpicc/wpicc".to_string(), |r| r.to_string())
        );
    }
    let _ = writeln!(echo, "{NO_SMALL_SAMPLE_NOTE}");
    Ok((csv, echo))
}

fn cmd_verify(args: &VerifyArgs) -> (String, bool) {
    let opts = VerifyOptions {
        seed: args.seed,
        min_sweep_configs: args.sweep_size,
        mc_replicates: args.replicates,
        run_monte_carlo: !args.skip_monte_carlo,
        corruption: None,
    };
    let report = verify::run_verification(&opts);
    let mut out = String::new();
    let _ = writeln!(out, "command: verify");
    let _ = writeln!(out, "seed: {}", args.seed);
    let _ = writeln!(out, "sweep size: >= {}", args.sweep_size);
    let _ = writeln!(
        out,
        "monte carlo: {}",
        if args.skip_monte_carlo {
            "skipped".to_string()
        } else {
            format!("{} replicates", args.replicates)
        }
    );
    out.push_str(&report.render());
    (out, report.all_passed())
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn emit(text: &str, out: Option<&std::path::PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// CSV goes to `--out` (echo to stdout) or to stdout (echo to stderr).
fn emit_csv(csv: &str, echo: &str, out: Option<&std::path::PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, csv)?;
            print!("{echo}");
        }
        None => {
            print!("{csv}");
            eprint!("{echo}");
        }
    }
    Ok(())
}

/// Run a parsed command; returns the process exit code.
pub fn run(spec: RunSpec) -> i32 {
    let outcome: Result<i32> = match &spec.command {
        Command::Power(args) => cmd_power(args).and_then(|text| {
            emit(&text, args.out.as_ref())?;
            Ok(0)
        }),
        Command::Size(args) => cmd_size(args).and_then(|text| {
            emit(&text, args.out.as_ref())?;
            Ok(0)
        }),
        Command::Table(args) => cmd_table(args).and_then(|(csv, echo)| {
            emit_csv(&csv, &echo, args.out.as_ref())?;
            Ok(0)
        }),
        Command::Curve(args) => cmd_curve(args).and_then(|(csv, echo)| {
            emit_csv(&csv, &echo, args.out.as_ref())?;
            Ok(0)
        }),
        Command::Verify(args) => {
            let (text, passed) = cmd_verify(args);
            emit(&text, args.out.as_ref()).map(|()| if passed { 0 } else { 1 })
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parse the process arguments and run.
pub fn main_entry() -> i32 {
    run(RunSpec::parse())
}
