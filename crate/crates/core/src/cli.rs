//! File formats and subcommands behind the `stein-mac` binary.
//!
//! Problem files hold a header `|U1| |U2| |V|`, the `P` tensor in row-major
//! order, a blank line, and the `Q` tensor. Experiment configs are flat
//! `key = value` files; see [`ExperimentConfig`] for the keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::channels::{
    BudgetLaw, ChannelClass, ChannelError, CostModel, Dmmac, GgMac, MarkerSet, Sensor,
    ToggleWitness,
};
use crate::exponents::{class_exponent, ExponentError, IpfOptions};
use crate::prob::{JointPmf, ProbError};
use crate::schemes::{
    build_full_sparse_scheme, build_local_scheme, build_sparse_full_scheme, build_sparse_scheme,
    Scheme, SchemeKind,
};
use crate::simulator::{run_ladder, Channel, Estimator, SimConfig, SimError, SimReport, TestProblem};

/// Row sums in input files may deviate from 1 by this much.
const FILE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Channel { path: PathBuf, source: ChannelError },
    #[error(transparent)]
    ChannelParams(#[from] ChannelError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_kernel(path: &Path) -> Result<Dmmac, CliError> {
    Dmmac::from_text(&read(path)?).map_err(|e| match e {
        ChannelError::Parse { line, message } => CliError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        source => CliError::Channel {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// Parses a problem file from text; `path` only labels errors.
pub fn parse_problem(text: &str, path: &Path) -> Result<TestProblem, CliError> {
    let perr = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: Option<(usize, Vec<usize>)> = None;
    let mut blocks: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            // A blank line closes the current tensor once it has entries.
            if raw.trim().is_empty() && !blocks.last().unwrap().is_empty() {
                blocks.push(Vec::new());
            }
            continue;
        }
        if header.is_none() {
            let dims = body
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| perr(line, format!("bad size {t:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if dims.len() != 3 || dims.contains(&0) {
                return Err(perr(line, "header needs three positive sizes |U1| |U2| |V|".into()));
            }
            header = Some((line, dims));
            continue;
        }
        for t in body.split_whitespace() {
            let v = t
                .parse::<f64>()
                .map_err(|_| perr(line, format!("bad probability {t:?}")))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(perr(line, format!("invalid probability {t}")));
            }
            blocks.last_mut().unwrap().push((line, v));
        }
    }
    let (hline, dims) = header.ok_or_else(|| perr(1, "missing header".into()))?;
    blocks.retain(|b| !b.is_empty());
    if blocks.len() != 2 {
        return Err(perr(
            hline,
            format!("expected two tensors separated by a blank line, found {}", blocks.len()),
        ));
    }
    let cells: usize = dims.iter().product();
    let mut joints = Vec::with_capacity(2);
    for (name, block) in ["P", "Q"].iter().zip(&blocks) {
        let last_line = block.last().map(|e| e.0).unwrap_or(hline);
        if block.len() != cells {
            return Err(perr(
                last_line,
                format!("{name} has {} entries, expected {cells}", block.len()),
            ));
        }
        let sum: f64 = block.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > FILE_TOL {
            return Err(perr(last_line, format!("{name} sums to {sum}")));
        }
        let probs = block.iter().map(|e| e.1 / sum).collect();
        joints.push(JointPmf::new(dims.clone(), probs)?);
    }
    let q = joints.pop().unwrap();
    let p = joints.pop().unwrap();
    Ok(TestProblem::new(p, q)?)
}

pub fn load_problem(path: &Path) -> Result<TestProblem, CliError> {
    parse_problem(&read(path)?, path)
}

/// Parses `p,sigma,h1,h2`.
pub fn parse_gg_spec(spec: &str) -> Result<GgMac, CliError> {
    let vals = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Config(format!("bad --gg value {spec:?}, expected p,sigma,h1,h2")))?;
    match vals.as_slice() {
        &[p, sigma, h1, h2] => Ok(GgMac::new(h1, h2, p, sigma)?),
        _ => Err(CliError::Config(format!(
            "--gg needs four numbers p,sigma,h1,h2, got {}",
            vals.len()
        ))),
    }
}

fn witness_line(sensor: Sensor, w: &ToggleWitness) -> String {
    let (own, other) = match sensor {
        Sensor::S1 => ("x1", "x2"),
        Sensor::S2 => ("x2", "x1"),
    };
    let label = match sensor {
        Sensor::S1 => "sensor1",
        Sensor::S2 => "sensor2",
    };
    format!(
        "{label}: {own}={} blocks y={} and {own}'={} enables it when {other}={}",
        w.blocked, w.output, w.enabled, w.partner
    )
}

fn markers_text(m: &MarkerSet) -> String {
    let mut out = String::new();
    if let Some(w) = &m.sensor1 {
        writeln!(out, "{}", witness_line(Sensor::S1, w)).unwrap();
    }
    if let Some(w) = &m.sensor2 {
        writeln!(out, "{}", witness_line(Sensor::S2, w)).unwrap();
    }
    out
}

/// Class name followed by marker witnesses, one per line.
pub fn cmd_classify(channel_file: &Path) -> Result<String, CliError> {
    let ch = load_kernel(channel_file)?;
    let class = ch.classify();
    let mut out = format!("{class}\n");
    if class != ChannelClass::Full {
        out.push_str(&markers_text(&ch.find_markers(class)?));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum ChannelSpec {
    File(PathBuf),
    Gg(GgMac),
}

fn format_joint(axes: &[&str], j: &JointPmf) -> String {
    let mut out = format!("minimizer over ({}):\n", axes.join(", "));
    let dims = j.dims();
    let row = *dims.last().unwrap();
    writeln!(
        out,
        "{}",
        dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ")
    )
    .unwrap();
    for chunk in j.probs().chunks(row) {
        let cells: Vec<String> = chunk.iter().map(|p| format!("{p:.12}")).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    out
}

/// Theoretical exponent and its minimizer.
pub fn cmd_exponent(problem_file: &Path, channel: &ChannelSpec) -> Result<String, CliError> {
    let problem = load_problem(problem_file)?;
    let (label, class) = match channel {
        ChannelSpec::File(path) => {
            let class = load_kernel(path)?.classify();
            (class.to_string(), class)
        }
        ChannelSpec::Gg(_) => ("generalized_gaussian".to_string(), ChannelClass::Full),
    };
    let report = class_exponent(class, problem.p(), problem.q(), IpfOptions::default())?;
    let axes: &[&str] = match class {
        ChannelClass::Full => &["V"],
        ChannelClass::Sparse => &["U1", "U2", "V"],
        ChannelClass::SparseFull => &["V", "U1"],
        ChannelClass::FullSparse => &["V", "U2"],
    };
    let mut out = format!("class: {label}\nexponent: {:.12}\n", report.value);
    out.push_str(&format_joint(axes, &report.minimizer));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    Auto,
    Fixed(SchemeKind),
}

impl FromStr for SchemeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "auto" => SchemeChoice::Auto,
            "local" => SchemeChoice::Fixed(SchemeKind::Local),
            "sparse" => SchemeChoice::Fixed(SchemeKind::Sparse),
            "sparse_full" => SchemeChoice::Fixed(SchemeKind::SparseFull),
            "full_sparse" => SchemeChoice::Fixed(SchemeKind::FullSparse),
            other => return Err(format!("unknown scheme {other:?}")),
        })
    }
}

/// Parsed experiment config.
///
/// Keys: `problem`, `channel.kind` (`dmmac` | `gg`), `channel.file`, `gg.p`,
/// `gg.sigma`, `gg.h1`, `gg.h2`, `cost.law` (`power` | `log`), `cost.a`,
/// `cost.b`, `cost.c1`, `cost.c2` (comma-separated per-symbol costs,
/// default 0 for symbol 0 and 1 otherwise), `sim.trials`, `sim.seed`,
/// `sim.mu`, `sim.ladder` (comma-separated), `sim.threads`, `scheme`,
/// `estimator`, `out`. Relative paths are resolved against the config
/// file's directory.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: PathBuf,
    pub channel: ChannelSpec,
    pub law: BudgetLaw,
    pub costs: Option<[Vec<f64>; 2]>,
    pub scheme: SchemeChoice,
    pub sim: SimConfig,
    pub out: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "channel.kind",
    "channel.file",
    "gg.p",
    "gg.sigma",
    "gg.h1",
    "gg.h2",
    "cost.law",
    "cost.a",
    "cost.b",
    "cost.c1",
    "cost.c2",
    "sim.trials",
    "sim.seed",
    "sim.mu",
    "sim.ladder",
    "sim.threads",
    "scheme",
    "estimator",
    "out",
];

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path, path: &Path) -> Result<Self, CliError> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| CliError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected key = value, got {body:?}"),
            })?;
            let k = k.trim();
            if !KNOWN_KEYS.contains(&k) {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("unknown key {k:?}"),
                });
            }
            if kv.insert(k.to_string(), (line, v.trim().to_string())).is_some() {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("duplicate key {k:?}"),
                });
            }
        }
        let get = |k: &str| kv.get(k).map(|(_, v)| v.as_str());
        let need = |k: &str| get(k).ok_or_else(|| CliError::Config(format!("missing key {k}")));
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T, CliError> {
            v.parse::<T>()
                .map_err(|_| CliError::Config(format!("{k}: cannot parse {v:?}")))
        }
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let problem = resolve(need("problem")?);
        let channel = match need("channel.kind")? {
            "dmmac" => ChannelSpec::File(resolve(need("channel.file")?)),
            "gg" => ChannelSpec::Gg(GgMac::new(
                num("gg.h1", need("gg.h1")?)?,
                num("gg.h2", need("gg.h2")?)?,
                num("gg.p", need("gg.p")?)?,
                num("gg.sigma", need("gg.sigma")?)?,
            )?),
            other => return Err(CliError::Config(format!("channel.kind: unknown kind {other:?}"))),
        };
        let a = num("cost.a", get("cost.a").unwrap_or("1"))?;
        let law = match get("cost.law").unwrap_or("power") {
            "power" => BudgetLaw::Power {
                a,
                b: num("cost.b", get("cost.b").unwrap_or("0.5"))?,
            },
            "log" => BudgetLaw::Log { a },
            other => return Err(CliError::Config(format!("cost.law: unknown law {other:?}"))),
        };
        law.validate()?;
        let cost_list = |k: &str| -> Result<Option<Vec<f64>>, CliError> {
            get(k)
                .map(|v| v.split(',').map(|t| num(k, t.trim())).collect())
                .transpose()
        };
        let costs = match (cost_list("cost.c1")?, cost_list("cost.c2")?) {
            (Some(c1), Some(c2)) => Some([c1, c2]),
            (None, None) => None,
            _ => return Err(CliError::Config("cost.c1 and cost.c2 must be given together".into())),
        };
        let ladder = need("sim.ladder")?
            .split(',')
            .map(|t| num::<usize>("sim.ladder", t.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        let threads = get("sim.threads").map(|v| num::<usize>("sim.threads", v)).transpose()?;
        let sim = SimConfig {
            ladder,
            trials: num("sim.trials", need("sim.trials")?)?,
            master_seed: num("sim.seed", need("sim.seed")?)?,
            mu: num("sim.mu", need("sim.mu")?)?,
            estimator: get("estimator")
                .unwrap_or("importance")
                .parse::<Estimator>()
                .map_err(|e| CliError::Config(format!("estimator: {e}")))?,
            threads,
        };
        sim.validate()?;
        let scheme = get("scheme")
            .unwrap_or("auto")
            .parse::<SchemeChoice>()
            .map_err(|e| CliError::Config(format!("scheme: {e}")))?;
        Ok(Self {
            problem,
            channel,
            law,
            costs,
            scheme,
            sim,
            out: get("out").map(resolve),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&read(path)?, base, path)
    }
}

fn required_class(kind: SchemeKind) -> Option<ChannelClass> {
    match kind {
        SchemeKind::Local => None,
        SchemeKind::Sparse => Some(ChannelClass::Sparse),
        SchemeKind::SparseFull => Some(ChannelClass::SparseFull),
        SchemeKind::FullSparse => Some(ChannelClass::FullSparse),
    }
}

/// Runs the configured experiment and returns the CSV report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimReport, CliError> {
    let problem = load_problem(&cfg.problem)?;
    let (channel, class) = match &cfg.channel {
        ChannelSpec::File(path) => {
            let ch = load_kernel(path)?;
            let class = ch.classify();
            (Channel::Discrete(ch), class)
        }
        ChannelSpec::Gg(mac) => (Channel::Gg(*mac), ChannelClass::Full),
    };
    let kind = match cfg.scheme {
        SchemeChoice::Auto => SchemeKind::for_class(class),
        SchemeChoice::Fixed(kind) => {
            if let Some(needed) = required_class(kind) {
                if needed != class {
                    let label = match channel {
                        Channel::Gg(_) => "generalized-Gaussian".to_string(),
                        Channel::Discrete(_) => class.to_string(),
                    };
                    return Err(CliError::Config(format!(
                        "scheme {kind} needs a {needed} channel, but the channel is {label}; \
                         scheme = auto would use {}",
                        SchemeKind::for_class(class)
                    )));
                }
            }
            kind
        }
    };
    let exponent_class = match kind {
        SchemeKind::Local => ChannelClass::Full,
        other => required_class(other).unwrap(),
    };
    let theoretical = class_exponent(exponent_class, problem.p(), problem.q(), IpfOptions::default())?.value;

    let p = problem.p();
    let (pu1, pu2, pv) = (p.marginal(0)?, p.marginal(1)?, p.marginal(2)?);
    let mu = cfg.sim.mu;
    let build = |n: usize| -> Result<Scheme, SimError> {
        let ch = match &channel {
            Channel::Discrete(ch) => ch,
            Channel::Gg(_) => return Ok(build_local_scheme(&pv, mu, n)?),
        };
        if kind == SchemeKind::Local {
            return Ok(build_local_scheme(&pv, mu, n)?);
        }
        let dims = ch.dims();
        let cm = match &cfg.costs {
            Some(c) => CostModel::new(c.clone(), [cfg.law, cfg.law])?,
            None => CostModel::unit([dims[0], dims[1]], cfg.law)?,
        };
        let markers = ch.find_markers(exponent_class)?;
        Ok(match kind {
            SchemeKind::Sparse => build_sparse_scheme(ch, &markers, &cm, n, mu, &pu1, &pu2, &pv)?,
            SchemeKind::SparseFull => build_sparse_full_scheme(ch, &markers, &cm, n, mu, &pu1, &pv)?,
            SchemeKind::FullSparse => build_full_sparse_scheme(ch, &markers, &cm, n, mu, &pu2, &pv)?,
            SchemeKind::Local => unreachable!(),
        })
    };
    Ok(run_ladder(&problem, &channel, &cfg.sim, build, theoretical)?)
}

/// Runs the experiment in `config_file`; writes the CSV to `out` when set and
/// returns what should go to standard output.
pub fn cmd_simulate(config_file: &Path) -> Result<String, CliError> {
    let cfg = ExperimentConfig::load(config_file)?;
    let csv = run_experiment(&cfg)?.to_csv();
    match &cfg.out {
        Some(path) => {
            fs::write(path, &csv).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(format!("wrote {}\n", path.display()))
        }
        None => Ok(csv),
    }
}
