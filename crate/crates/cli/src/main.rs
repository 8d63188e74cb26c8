mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use injectcheck_core::conv::{
    check_conv_with, cross_check_full_with, min_channels, search_padding_with, Kernel, KernelBank,
    MultiIndex,
};
use injectcheck_core::dense::{
    check_dense_with, construct_expanded, construct_minimal, Activation, DenseLayer,
};
use injectcheck_core::dss::{certify_dss_all_with, DssOptions};
use injectcheck_core::gaussian::{
    cstar_lower_solve, run_expansivity_study_with, union_bound_threshold,
};
use injectcheck_core::network::{
    build_cascade, certify_exact_with, certify_layerwise_with, collision_search, CascadeSpec,
    ExactOptions, ReluNetwork,
};
use injectcheck_core::numeric::{fmt_f64, sample_gaussian_matrix, sample_orthogonal};
use injectcheck_core::stability::{
    empirical_min_ratio, inverse_lipschitz_exact_with, inverse_lipschitz_sampled,
};
use injectcheck_core::{InjectivityCertificate, Matrix, Method, Prng, Verdict};
use serde_json::{json, Value};

use crate::io::{pretty, read_json, read_matrix, read_vector, tagged, Sink};

const USAGE_EXIT: u8 = 3;
const COLLISION_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(
    name = "injectcheck",
    version,
    about = "Injectivity checks for ReLU layers and networks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Maximum number of wedges or regions to enumerate.
    #[arg(long, global = true, default_value_t = 1_000_000, value_parser = positive_usize)]
    budget_wedges: usize,
    /// Relative rank tolerance.
    #[arg(long, global = true, value_parser = positive_f64)]
    tol_rank: Option<f64>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; defaults to csv for tables and json otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long, global = true, env = "INJECTCHECK_THREADS", value_parser = positive_usize)]
    threads: Option<usize>,
    /// Include the per-wedge rank table in certificates.
    #[arg(long, global = true)]
    evidence: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify a single dense layer.
    CheckLayer {
        /// Weight matrix, CSV or JSON.
        matrix: PathBuf,
        /// Bias vector, CSV.
        #[arg(long)]
        bias: Option<PathBuf>,
        /// relu, identity or leaky:SLOPE.
        #[arg(long, default_value = "relu", value_parser = parse_activation)]
        activation: Activation,
    },
    /// Padded-family test for a convolutional layer.
    CheckConv {
        /// Kernel bank JSON.
        kernels: PathBuf,
        /// Padding shape, e.g. 2,2.
        #[arg(long, value_parser = parse_multi_index, conflicts_with = "search_padding")]
        padding: Option<MultiIndex>,
        /// Search all paddings up to this shape.
        #[arg(long, value_parser = parse_multi_index)]
        search_padding: Option<MultiIndex>,
        /// Also check the full layer on this signal shape.
        #[arg(long, value_parser = parse_multi_index)]
        signal: Option<MultiIndex>,
    },
    /// Inverse Lipschitz constant of a bias-free ReLU layer.
    Lipschitz {
        /// Weight matrix, CSV or JSON.
        matrix: PathBuf,
        /// Directions for the sampled estimate.
        #[arg(long)]
        sampled: Option<usize>,
        /// Input pairs for the empirical ratio.
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Injectivity frequencies of Gaussian layers against expansivity.
    GaussianStudy {
        #[arg(long)]
        n: usize,
        /// Expansivity ratios, e.g. 2,3,4.
        #[arg(long, value_delimiter = ',', required = true)]
        c_grid: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Certify a ReLU network.
    CheckNetwork {
        /// Network JSON.
        network: PathBuf,
        /// Certify layer by layer instead of exactly.
        #[arg(long)]
        layerwise: bool,
        /// Random collision search with this many samples when undecided.
        #[arg(long)]
        search: Option<usize>,
    },
    /// Build a random-projection cascade.
    Cascade {
        /// Layer widths, e.g. 2,8,5.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        /// Certify the built network exactly.
        #[arg(long)]
        check: bool,
    },
    /// Expansivity thresholds.
    Thresholds,
    /// Sample an injective layer.
    Construct {
        /// Minimal 2n-row layer (the default).
        #[arg(long)]
        minimal: bool,
        #[arg(long)]
        n: usize,
        /// Extra rows appended to the minimal layer.
        #[arg(long, conflicts_with = "minimal")]
        extra: Option<usize>,
    },
}

fn positive_usize(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 => Ok(v as usize),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    match s {
        "relu" => Ok(Activation::Relu),
        "identity" => Ok(Activation::Identity),
        _ => match s.strip_prefix("leaky:").map(str::parse::<f64>) {
            Some(Ok(a)) if a > 0.0 && a < 1.0 => Ok(Activation::LeakyRelu(a)),
            _ => Err(format!(
                "expected relu, identity or leaky:SLOPE with SLOPE in (0, 1), got {s:?}"
            )),
        },
    }
}

fn parse_multi_index(s: &str) -> std::result::Result<MultiIndex, String> {
    let parts: std::result::Result<Vec<usize>, _> =
        s.split(',').map(|p| p.trim().parse()).collect();
    let parts =
        parts.map_err(|_| format!("expected comma-separated positive integers, got {s:?}"))?;
    MultiIndex::new(parts).map_err(|e| e.to_string())
}

impl Global {
    fn dss(&self) -> DssOptions {
        let mut opts = DssOptions {
            budget: self.budget_wedges,
            record_evidence: self.evidence,
            ..DssOptions::default()
        };
        if let Some(t) = self.tol_rank {
            opts.rank_tol = t;
        }
        opts
    }

    fn exact(&self) -> ExactOptions {
        let mut opts = ExactOptions {
            budget: self.budget_wedges,
            ..ExactOptions::default()
        };
        if let Some(t) = self.tol_rank {
            opts.rank_tol = t;
        }
        opts
    }

    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn json_only(&self, command: &str) -> Result<()> {
        if self.format == Some(Format::Csv) {
            bail!("{command} has no csv output");
        }
        Ok(())
    }

    fn sink(&self) -> Sink {
        Sink {
            out: self.out.clone(),
        }
    }
}

fn certificate_value(cert: &InjectivityCertificate, evidence: bool) -> Value {
    serde_json::from_str(&cert.to_json(evidence)).expect("certificate json")
}

fn load_matrix(path: &Path) -> Result<Matrix> {
    if path.extension().is_some_and(|e| e == "json") {
        read_json(path)
    } else {
        read_matrix(path)
    }
}

fn load_kernels(path: &Path) -> Result<KernelBank> {
    let v: Value = read_json(path)?;
    let bank = if v.is_array() {
        let kernels: Vec<Kernel> = serde_json::from_value(v)?;
        KernelBank {
            kernels,
            signal_shape: None,
            boundary: Default::default(),
            stride: 1,
        }
    } else {
        serde_json::from_value(v)?
    };
    if bank.kernels.is_empty() {
        bail!("{}: no kernels", path.display());
    }
    Ok(bank)
}

fn load_network(path: &Path) -> Result<ReluNetwork> {
    let v: Value = read_json(path)?;
    // Accept the wrapped output of `cascade` as well as a bare network.
    let v = match v {
        Value::Object(mut map) if map.contains_key("network") => {
            map.remove("network").expect("key")
        }
        other => other,
    };
    serde_json::from_value(v).with_context(|| format!("in {}", path.display()))
}

/// Componentwise maximum of the kernel shapes.
fn max_shape(kernels: &[Kernel]) -> Option<MultiIndex> {
    let d = kernels[0].shape.len();
    if kernels.iter().any(|k| k.shape.len() != d) {
        return None;
    }
    let o: Vec<usize> = (0..d)
        .map(|j| {
            kernels
                .iter()
                .map(|k| k.shape.components()[j])
                .max()
                .unwrap_or(1)
        })
        .collect();
    MultiIndex::new(o).ok()
}

fn check_layer(
    g: &Global,
    matrix: &Path,
    bias: Option<&Path>,
    activation: Activation,
) -> Result<i32> {
    g.json_only("check-layer")?;
    let w = load_matrix(matrix)?;
    let b = match bias {
        Some(p) => read_vector(p)?,
        None => vec![0.0; w.rows()],
    };
    let layer = DenseLayer::new(w, b, activation)?;
    let cert = check_dense_with(&layer, &g.dss());
    let out = tagged("check-layer", g.seed, certificate_value(&cert, g.evidence));
    g.sink().emit(&pretty(&out))?;
    Ok(cert.verdict.exit_code())
}

fn check_conv(
    g: &Global,
    kernels: &Path,
    padding: Option<&MultiIndex>,
    search: Option<&MultiIndex>,
    signal: Option<&MultiIndex>,
) -> Result<i32> {
    g.json_only("check-conv")?;
    let bank = load_kernels(kernels)?;
    let opts = g.dss();
    let (p, cert) = match (padding, search) {
        (Some(p), _) => (Some(p.clone()), check_conv_with(&bank.kernels, p, &opts)?),
        (None, Some(p_max)) => match search_padding_with(&bank.kernels, p_max, &opts) {
            Some((p, cert)) => (Some(p), cert),
            None => (
                None,
                InjectivityCertificate::inconclusive(
                    Method::PaddedFamily,
                    format!("no padding up to {p_max} certifies"),
                ),
            ),
        },
        (None, None) => bail!("check-conv needs --padding or --search-padding"),
    };
    let mut body = certificate_value(&cert, g.evidence);
    if let Some(p) = &p {
        body["padding"] = json!(p.components());
        let bound = max_shape(&bank.kernels).and_then(|o| min_channels(&o, p).ok());
        body["channel_bound"] = match bound {
            Some(b) => json!({
                "formula": b.formula,
                "count": b.count,
                "vector_count": b.vector_count,
                "kernels": bank.kernels.len(),
            }),
            None => Value::Null,
        };
    }
    if signal.is_some() || bank.signal_shape.is_some() {
        let spec = bank.to_spec(signal)?;
        let full = cross_check_full_with(&spec, &opts)?;
        let mut v = certificate_value(&full, g.evidence);
        v["signal_shape"] = json!(spec.signal_shape.components());
        body["full_layer"] = v;
    }
    g.sink()
        .emit(&pretty(&tagged("check-conv", g.seed, body)))?;
    Ok(cert.verdict.exit_code())
}

fn lipschitz(
    g: &Global,
    matrix: &Path,
    sampled: Option<usize>,
    pairs: Option<usize>,
) -> Result<i32> {
    g.json_only("lipschitz")?;
    let w = load_matrix(matrix)?;
    let opts = g.dss();
    let cert = certify_dss_all_with(&w, &opts);
    if cert.verdict != Verdict::Injective {
        let mut body = certificate_value(&cert, g.evidence);
        body["note"] = json!("the inverse Lipschitz bound needs an injective layer");
        g.sink().emit(&pretty(&tagged("lipschitz", g.seed, body)))?;
        return Ok(cert.verdict.exit_code());
    }
    let mut report = inverse_lipschitz_exact_with(&w, &opts)?;
    if let Some(t) = sampled {
        report.c_sampled = Some(inverse_lipschitz_sampled(&w, t, &mut Prng::new(g.seed, 0)));
    }
    if let Some(p) = pairs {
        let zero = vec![0.0; w.rows()];
        report.empirical_min_ratio =
            Some(empirical_min_ratio(&w, &zero, p, &Prng::new(g.seed, 1))?);
    }
    let mut body = serde_json::to_value(&report)?;
    body["verdict"] = json!(Verdict::Injective);
    g.sink().emit(&pretty(&tagged("lipschitz", g.seed, body)))?;
    Ok(0)
}

fn gaussian_study(g: &Global, n: usize, c_grid: &[f64], trials: usize) -> Result<i32> {
    let study = run_expansivity_study_with(n, c_grid, trials, g.seed, &g.dss())?;
    let text = match g.format(Format::Csv) {
        Format::Csv => study.to_csv(),
        Format::Json => pretty(&tagged(
            "gaussian-study",
            g.seed,
            serde_json::to_value(&study)?,
        )),
    };
    g.sink().emit(&text)?;
    Ok(0)
}

fn check_network(g: &Global, path: &Path, layerwise: bool, search: Option<usize>) -> Result<i32> {
    g.json_only("check-network")?;
    let net = load_network(path)?;
    let mut cert = if layerwise {
        certify_layerwise_with(&net, &g.dss())
    } else {
        certify_exact_with(&net, &g.exact())
    };
    if let (Some(trials), false) = (search, cert.verdict == Verdict::NonInjective) {
        if let Some(c) = collision_search(&net, trials, &mut Prng::new(g.seed, 0), COLLISION_TOL) {
            let mut found =
                InjectivityCertificate::new(Verdict::NonInjective, Method::RandomFalsification);
            found.collision = Some(c);
            found.note = Some("collision found by random search".into());
            cert = found;
        }
    }
    let out = tagged(
        "check-network",
        g.seed,
        certificate_value(&cert, g.evidence),
    );
    g.sink().emit(&pretty(&out))?;
    Ok(cert.verdict.exit_code())
}

fn cascade(g: &Global, dims: &[usize], check: bool) -> Result<i32> {
    g.json_only("cascade")?;
    let net = build_cascade(&CascadeSpec::new(dims.to_vec()), &mut Prng::new(g.seed, 0))?;
    let mut body = json!({ "dims": dims, "network": net });
    let mut code = 0;
    if check {
        let cert = certify_exact_with(&net, &g.exact());
        code = cert.verdict.exit_code();
        body["certificate"] = certificate_value(&cert, g.evidence);
    }
    g.sink().emit(&pretty(&tagged("cascade", g.seed, body)))?;
    Ok(code)
}

fn thresholds(g: &Global) -> Result<i32> {
    let (cstar, union) = (cstar_lower_solve(), union_bound_threshold());
    let text = match g.format(Format::Json) {
        Format::Json => pretty(&tagged(
            "thresholds",
            g.seed,
            json!({ "cstar": cstar, "union_bound": union }),
        )),
        Format::Csv => format!(
            "# seed={}\nquantity,value\ncstar,{}\nunion_bound,{}\n",
            g.seed,
            fmt_f64(cstar),
            fmt_f64(union)
        ),
    };
    g.sink().emit(&text)?;
    Ok(0)
}

fn construct(g: &Global, n: usize, extra: Option<usize>) -> Result<i32> {
    if n == 0 {
        bail!("--n must be positive");
    }
    let mut prng = Prng::new(g.seed, 0);
    let b = sample_orthogonal(n, &mut prng);
    let d: Vec<f64> = (0..n).map(|_| prng.uniform_range(0.5, 2.0)).collect();
    let w = match extra {
        Some(k) if k > 0 => {
            construct_expanded(&b, &d, Some(&sample_gaussian_matrix(k, n, &mut prng)))?
        }
        _ => construct_minimal(&b, &d)?,
    };
    let text = match g.format(Format::Csv) {
        Format::Csv => format!(
            "# seed={} n={} rows={}\n{}",
            g.seed,
            n,
            w.rows(),
            w.to_csv_string()
        ),
        Format::Json => pretty(&tagged("construct", g.seed, json!({ "n": n, "weight": w }))),
    };
    g.sink().emit(&text)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    if let Some(t) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("cannot configure worker threads")?;
    }
    match &cli.command {
        Command::CheckLayer {
            matrix,
            bias,
            activation,
        } => check_layer(g, matrix, bias.as_deref(), *activation),
        Command::CheckConv {
            kernels,
            padding,
            search_padding,
            signal,
        } => check_conv(
            g,
            kernels,
            padding.as_ref(),
            search_padding.as_ref(),
            signal.as_ref(),
        ),
        Command::Lipschitz {
            matrix,
            sampled,
            pairs,
        } => lipschitz(g, matrix, *sampled, *pairs),
        Command::GaussianStudy { n, c_grid, trials } => gaussian_study(g, *n, c_grid, *trials),
        Command::CheckNetwork {
            network,
            layerwise,
            search,
        } => check_network(g, network, *layerwise, *search),
        Command::Cascade { dims, check } => cascade(g, dims, *check),
        Command::Thresholds => thresholds(g),
        Command::Construct { n, extra, .. } => construct(g, *n, *extra),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(USAGE_EXIT),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE_EXIT)
        }
    }
}
