//! Run configurations: flat `section.key = value` lines with `#` comments.
//!
//! Every key is declared in [`KEYS`]; anything else is rejected, as is a
//! key given twice. Values are validated against the constraints of the
//! module that will consume them, so a config that parses will not fail
//! later on a bad parameter.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use gpelab_core::evolution::EvolveConfig;
use gpelab_core::functionals::{classify_regime, CouplingParams, Regime};
use gpelab_core::ground_state::GroundStateOptions;
use gpelab_core::riesz_lab::{Direction, PairShape};
use gpelab_core::{Axis, Grid3, Symbol};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Evolve,
    GroundState,
    VirialAudit,
    RieszSweep,
    Dichotomy,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Evolve,
        Experiment::GroundState,
        Experiment::VirialAudit,
        Experiment::RieszSweep,
        Experiment::Dichotomy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Evolve => "evolve",
            Experiment::GroundState => "groundstate",
            Experiment::VirialAudit => "virial_audit",
            Experiment::RieszSweep => "riesz_sweep",
            Experiment::Dichotomy => "dichotomy",
        }
    }

    /// Sections that must be present.
    pub fn required_sections(self) -> &'static [&'static str] {
        match self {
            Experiment::Evolve => &["grid", "couplings", "initial", "evolve"],
            Experiment::GroundState => &["grid", "couplings"],
            Experiment::VirialAudit => &["grid", "couplings", "initial", "virial"],
            Experiment::RieszSweep => &["grid", "riesz"],
            Experiment::Dichotomy => &["grid", "couplings", "dichotomy"],
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// `(key, requirement, description)`. A requirement of `"*"` marks a key
/// that is mandatory whenever its section is required.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("run.experiment", "*", "evolve | groundstate | virial_audit | riesz_sweep | dichotomy"),
    ("run.seed", "", "seed for randomized fields (default 0)"),
    ("grid.n1", "*", "nodes along x1 (even, >= 8)"),
    ("grid.n2", "*", "nodes along x2"),
    ("grid.n3", "*", "nodes along x3"),
    ("grid.L1", "*", "box length along x1"),
    ("grid.L2", "*", "box length along x2"),
    ("grid.L3", "*", "box length along x3"),
    ("couplings.lambda1", "*", "local coupling"),
    ("couplings.lambda2", "*", "dipolar coupling"),
    ("initial.shape", "", "gaussian (default) | ground_state"),
    ("initial.A", "*", "amplitude; multiplies Q for shape = ground_state"),
    ("initial.sigma_perp", "", "transverse width (gaussian)"),
    ("initial.sigma3", "", "width along x3 (gaussian)"),
    ("initial.offset3", "", "centre along x3 (default 0)"),
    ("initial.phase_noise", "", "amplitude of a seeded smooth random phase (default 0)"),
    ("evolve.dt", "*", "base time step"),
    ("evolve.t_end", "*", "horizon"),
    ("evolve.output_every", "", "steps between diagnostic rows (default 10)"),
    ("evolve.blowup_h1_factor", "", "collapse threshold on the H1dot norm ratio (default 10)"),
    ("evolve.spectral_tail_fraction", "", "top-octave share of T flagging under-resolution (default 0.05)"),
    ("evolve.dt_floor", "", "smallest adaptive step (default dt/1024)"),
    ("evolve.checkpoint_every", "", "steps between checkpoints, 0 disables (default 0)"),
    ("evolve.expect", "", "any (default) | completed | collapsed; a mismatch fails the run"),
    ("virial.R", "", "cutoff radius monitored during evolve"),
    ("virial.R_list", "", "comma separated radii (at least 3) for virial_audit"),
    ("virial.include_x3", "", "add the x3^2 weight (default true)"),
    ("riesz.gamma1", "*", "inner radius factor"),
    ("riesz.gamma2", "*", "outer radius factor, > gamma1"),
    ("riesz.R_list", "*", "comma separated radii (at least 3)"),
    ("riesz.symbol", "*", "r4 | mixed | r2_pointwise | khat | riesz2 | dkhat3"),
    ("riesz.axes", "", "axis list, e.g. 3 or 1,3 (default 3)"),
    ("riesz.direction", "", "outer_to_inner (default) | inner_to_outer, for r2_pointwise"),
    ("riesz.sigma3", "", "x3 width of the profiles in units of R (default 0.25)"),
    ("riesz.outer_width", "", "annulus width in units of R (default 1)"),
    ("groundstate.mass", "", "target mass c (default: the minimizer's own mass)"),
    ("groundstate.max_iter", "", "descent iteration budget"),
    ("groundstate.residual_tol", "", "stationary residual certificate"),
    ("groundstate.sigma_perp", "", "transverse width of the initial guess"),
    ("groundstate.sigma3", "", "x3 width of the initial guess"),
    ("dichotomy.amplitudes", "*", "comma separated amplitude factors"),
    ("dichotomy.dilations", "*", "comma separated L2-preserving dilation factors"),
    ("dichotomy.sigma_perp", "", "transverse width of the base Gaussian (default 1)"),
    ("dichotomy.sigma3", "", "x3 width of the base Gaussian (default 1)"),
    ("output.dir", "", "output directory (default: out)"),
    ("output.checkpoint_prefix", "", "checkpoint file prefix (default: state)"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Gaussian,
    GroundState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialBlock {
    pub shape: Shape,
    pub amplitude: f64,
    pub sigma_perp: f64,
    pub sigma3: f64,
    pub offset3: f64,
    pub phase_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Any,
    Completed,
    Collapsed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveBlock {
    pub config: EvolveConfig,
    pub checkpoint_every: usize,
    pub expect: Expect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirialBlock {
    pub radius: Option<f64>,
    pub radii: Vec<f64>,
    pub include_x3: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate {
    R4,
    Mixed,
    R2Pointwise,
    Symbol(Symbol),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RieszBlock {
    pub gamma1: f64,
    pub gamma2: f64,
    pub radii: Vec<f64>,
    pub estimate: Estimate,
    pub axes: Vec<Axis>,
    pub direction: Direction,
    pub shape: PairShape,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundStateBlock {
    pub mass: Option<f64>,
    pub max_iter: Option<usize>,
    pub residual_tol: Option<f64>,
    pub sigma_perp: Option<f64>,
    pub sigma3: Option<f64>,
}

impl GroundStateBlock {
    pub fn options(&self, p: CouplingParams) -> GroundStateOptions {
        let mut o = GroundStateOptions::for_params(p);
        if let Some(v) = self.max_iter {
            o.max_iter = v;
        }
        if let Some(v) = self.residual_tol {
            o.residual_tol = v;
        }
        if let Some(v) = self.sigma_perp {
            o.sigma_perp = v;
        }
        if let Some(v) = self.sigma3 {
            o.sigma3 = v;
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyBlock {
    pub amplitudes: Vec<f64>,
    pub dilations: Vec<f64>,
    pub sigma_perp: f64,
    pub sigma3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub grid: Grid3,
    pub couplings: Option<CouplingParams>,
    pub initial: Option<InitialBlock>,
    pub evolve: Option<EvolveBlock>,
    pub virial: Option<VirialBlock>,
    pub riesz: Option<RieszBlock>,
    pub groundstate: GroundStateBlock,
    pub dichotomy: Option<DichotomyBlock>,
    pub output_dir: PathBuf,
    pub checkpoint_prefix: String,
    /// Canonical `key = value` listing, one per line in key order; hashed
    /// into the manifest.
    pub canonical: String,
}

struct Entry {
    value: String,
    line: usize,
}

/// Key/value pairs, consumed as they are read so leftovers can be checked.
struct Table {
    entries: BTreeMap<String, Entry>,
}

impl Table {
    fn tokenize(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::at(line, format!("expected `section.key = value`, got `{content}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some((section, name)) = key.split_once('.') else {
                return Err(ConfigError::at(line, format!("key `{key}` has no section")));
            };
            if section.is_empty() || name.is_empty() || name.contains('.') {
                return Err(ConfigError::at(line, format!("malformed key `{key}`")));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line, format!("key `{key}` has no value")));
            }
            if !KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(ConfigError::at(line, format!("unknown key `{key}`")));
            }
            if let Some(prev) = entries.get(key) {
                let prev: &Entry = prev;
                return Err(ConfigError::at(
                    line,
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Self { entries })
    }

    fn has_section(&self, section: &str) -> bool {
        self.entries.keys().any(|k| k.split('.').next() == Some(section))
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<(T, usize)>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((v, e.line)))
                .map_err(|err| ConfigError::at(e.line, format!("`{key}`: {err}"))),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.map(|(v, _)| v))
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?
            .map(|(v, _)| v)
            .ok_or_else(|| ConfigError::global(format!("missing required key `{key}`")))
    }

    fn list(&self, key: &str) -> Result<Option<(Vec<f64>, usize)>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let vals: Result<Vec<f64>, _> = e.value.split(',').map(|s| s.trim().parse::<f64>()).collect();
        vals.map(|v| Some((v, e.line)))
            .map_err(|err| ConfigError::at(e.line, format!("`{key}`: {err}")))
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw(key).map(|e| e.line)
    }

    fn canonical(&self) -> String {
        self.entries
            .iter()
            .map(|(k, e)| format!("{k} = {}\n", e.value))
            .collect()
    }
}

fn positive(key: &str, v: f64, line: Option<usize>) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError {
            line,
            message: format!("`{key}` must be positive, got {v}"),
        })
    }
}

/// Gaussian widths must span 4 cells, as the data constructor demands.
fn check_widths(grid: &Grid3, sigma_perp: f64, sigma3: f64, line: Option<usize>) -> Result<(), ConfigError> {
    let (hp, h3) = (4.0 * grid.dx(0).max(grid.dx(1)), 4.0 * grid.dx(2));
    if !(sigma_perp >= hp && sigma3 >= h3) {
        return Err(ConfigError {
            line,
            message: format!("Gaussian widths ({sigma_perp}, {sigma3}) span fewer than 4 cells ({hp}, {h3})"),
        });
    }
    Ok(())
}

fn radius_list(t: &Table, key: &str, required: bool) -> Result<Vec<f64>, ConfigError> {
    match t.list(key)? {
        None if required => Err(ConfigError::global(format!("missing required key `{key}`"))),
        None => Ok(Vec::new()),
        Some((v, line)) => {
            if v.len() < 3 {
                return Err(ConfigError::at(line, format!("`{key}` needs at least 3 radii, got {}", v.len())));
            }
            for &r in &v {
                positive(key, r, Some(line))?;
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::at(line, format!("`{key}` must be strictly increasing")));
            }
            Ok(v)
        }
    }
}

fn parse_axes(s: &str) -> Result<Vec<Axis>, String> {
    s.split(',')
        .map(|a| {
            let j: usize = a.trim().parse().map_err(|e| format!("bad axis `{a}`: {e}"))?;
            Axis::from_number(j).map_err(|e| e.to_string())
        })
        .collect()
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let t = Table::tokenize(text)?;
    let experiment: Experiment = t.req("run.experiment")?;
    for s in experiment.required_sections() {
        if !t.has_section(s) {
            return Err(ConfigError::global(format!(
                "experiment `{}` needs a `{s}` section",
                experiment.name()
            )));
        }
    }
    let seed = t.opt::<u64>("run.seed")?.unwrap_or(0);

    let n = [t.req::<usize>("grid.n1")?, t.req("grid.n2")?, t.req("grid.n3")?];
    let len = [t.req::<f64>("grid.L1")?, t.req("grid.L2")?, t.req("grid.L3")?];
    let grid = Grid3::new(n, len).map_err(|e| {
        // point at the first offending key
        let bad = (0..3)
            .find_map(|a| (n[a] < 8 || n[a] % 2 != 0).then(|| format!("grid.n{}", a + 1)))
            .or_else(|| (0..3).find_map(|a| (!(len[a] > 0.0 && len[a].is_finite())).then(|| format!("grid.L{}", a + 1))));
        ConfigError {
            line: bad.and_then(|k| t.line(&k)),
            message: e.to_string(),
        }
    })?;
    let half_perp = 0.5 * len[0].min(len[1]);

    let couplings = if t.has_section("couplings") {
        let p = CouplingParams::new(t.req("couplings.lambda1")?, t.req("couplings.lambda2")?)
            .map_err(|e| ConfigError {
                line: t.line("couplings.lambda1"),
                message: e.to_string(),
            })?;
        if matches!(experiment, Experiment::GroundState | Experiment::Dichotomy)
            && classify_regime(p) == Regime::Stable
        {
            return Err(ConfigError {
                line: t.line("couplings.lambda1"),
                message: format!(
                    "({}, {}) is in the stable regime; no ground state exists",
                    p.lambda1, p.lambda2
                ),
            });
        }
        Some(p)
    } else {
        None
    };

    let initial = if t.has_section("initial") {
        let shape = match t.opt::<String>("initial.shape")?.as_deref() {
            None | Some("gaussian") => Shape::Gaussian,
            Some("ground_state") => Shape::GroundState,
            Some(other) => {
                return Err(ConfigError {
                    line: t.line("initial.shape"),
                    message: format!("unknown shape `{other}` (gaussian | ground_state)"),
                })
            }
        };
        let amplitude = positive("initial.A", t.req("initial.A")?, t.line("initial.A"))?;
        let mut block = InitialBlock {
            shape,
            amplitude,
            sigma_perp: 1.0,
            sigma3: 1.0,
            offset3: t.opt("initial.offset3")?.unwrap_or(0.0),
            phase_noise: t.opt("initial.phase_noise")?.unwrap_or(0.0),
        };
        if shape == Shape::Gaussian {
            block.sigma_perp = positive("initial.sigma_perp", t.req("initial.sigma_perp")?, t.line("initial.sigma_perp"))?;
            block.sigma3 = positive("initial.sigma3", t.req("initial.sigma3")?, t.line("initial.sigma3"))?;
            check_widths(&grid, block.sigma_perp, block.sigma3, t.line("initial.sigma_perp"))?;
        }
        if !block.offset3.is_finite() || !block.phase_noise.is_finite() {
            return Err(ConfigError::global("initial offsets and noise must be finite"));
        }
        Some(block)
    } else {
        None
    };

    let evolve = if t.has_section("evolve") {
        let mut c = EvolveConfig::new(t.req("evolve.dt")?, t.req("evolve.t_end")?);
        if let Some(v) = t.opt("evolve.output_every")? {
            c.output_every = v;
        }
        if let Some(v) = t.opt("evolve.blowup_h1_factor")? {
            c.blowup_h1_factor = v;
        }
        if let Some(v) = t.opt("evolve.spectral_tail_fraction")? {
            c.spectral_tail_fraction = v;
        }
        if let Some(v) = t.opt("evolve.dt_floor")? {
            c.dt_floor = v;
        }
        c.validate().map_err(|e| ConfigError {
            line: t.line("evolve.dt"),
            message: e.to_string(),
        })?;
        let expect = match t.opt::<String>("evolve.expect")?.as_deref() {
            None | Some("any") => Expect::Any,
            Some("completed") => Expect::Completed,
            Some("collapsed") => Expect::Collapsed,
            Some(other) => {
                return Err(ConfigError {
                    line: t.line("evolve.expect"),
                    message: format!("unknown expectation `{other}` (any | completed | collapsed)"),
                })
            }
        };
        let checkpoint_every: usize = t.opt("evolve.checkpoint_every")?.unwrap_or(0);
        if checkpoint_every % c.output_every != 0 {
            return Err(ConfigError {
                line: t.line("evolve.checkpoint_every"),
                message: format!(
                    "checkpoint_every = {checkpoint_every} must be a multiple of output_every = {}",
                    c.output_every
                ),
            });
        }
        Some(EvolveBlock {
            config: c,
            checkpoint_every,
            expect,
        })
    } else {
        None
    };

    let virial = if t.has_section("virial") {
        let radius = match t.get::<f64>("virial.R")? {
            Some((r, line)) => Some(positive("virial.R", r, Some(line))?),
            None => None,
        };
        let radii = radius_list(&t, "virial.R_list", experiment == Experiment::VirialAudit)?;
        for &r in radius.iter().chain(&radii) {
            if std::f64::consts::SQRT_2 * r >= half_perp {
                return Err(ConfigError {
                    line: t.line("virial.R").or(t.line("virial.R_list")),
                    message: format!("sqrt(2) R = {:.4} does not fit inside the transverse half width {half_perp}", std::f64::consts::SQRT_2 * r),
                });
            }
        }
        Some(VirialBlock {
            radius,
            radii,
            include_x3: t.opt("virial.include_x3")?.unwrap_or(true),
        })
    } else {
        None
    };
    if let (Some(v), Some(_)) = (&virial, &evolve) {
        if experiment == Experiment::Evolve && v.radius.is_none() {
            return Err(ConfigError::global("evolve monitors a single radius: set `virial.R`"));
        }
    }

    let riesz = if t.has_section("riesz") {
        let gamma1 = positive("riesz.gamma1", t.req("riesz.gamma1")?, t.line("riesz.gamma1"))?;
        let gamma2: f64 = t.req("riesz.gamma2")?;
        if gamma2 <= gamma1 {
            return Err(ConfigError {
                line: t.line("riesz.gamma2"),
                message: format!("need gamma2 > gamma1, got {gamma2} <= {gamma1}"),
            });
        }
        let radii = radius_list(&t, "riesz.R_list", true)?;
        let axes = match t.raw("riesz.axes") {
            None => vec![Axis::X3],
            Some(e) => parse_axes(&e.value).map_err(|m| ConfigError::at(e.line, m))?,
        };
        let symbol: String = t.req("riesz.symbol")?;
        let line = t.line("riesz.symbol");
        let one_axis = |what: &str| -> Result<Axis, ConfigError> {
            match axes.as_slice() {
                [a] => Ok(*a),
                _ => Err(ConfigError {
                    line,
                    message: format!("`{what}` takes exactly one axis"),
                }),
            }
        };
        let estimate = match symbol.as_str() {
            "r4" => {
                one_axis("r4")?;
                Estimate::R4
            }
            "mixed" => {
                if axes.len() != 2 {
                    return Err(ConfigError {
                        line,
                        message: "`mixed` takes two axes, e.g. `riesz.axes = 1,3`".into(),
                    });
                }
                Estimate::Mixed
            }
            "r2_pointwise" => {
                one_axis("r2_pointwise")?;
                Estimate::R2Pointwise
            }
            "khat" => Estimate::Symbol(Symbol::Dipolar),
            "riesz2" => Estimate::Symbol(Symbol::Riesz2(one_axis("riesz2")?)),
            "dkhat3" => Estimate::Symbol(Symbol::DipolarDerivative3),
            other => {
                return Err(ConfigError {
                    line,
                    message: format!("unknown estimate `{other}`"),
                })
            }
        };
        let direction = match t.opt::<String>("riesz.direction")?.as_deref() {
            None | Some("outer_to_inner") => Direction::OuterToInner,
            Some("inner_to_outer") => Direction::InnerToOuter,
            Some(other) => {
                return Err(ConfigError {
                    line: t.line("riesz.direction"),
                    message: format!("unknown direction `{other}`"),
                })
            }
        };
        let mut shape = PairShape::default();
        if let Some((v, line)) = t.get::<f64>("riesz.sigma3")? {
            shape.sigma3 = positive("riesz.sigma3", v, Some(line))?;
        }
        if let Some((v, line)) = t.get::<f64>("riesz.outer_width")? {
            shape.outer_width = positive("riesz.outer_width", v, Some(line))?;
        }
        let rmax = radii.last().copied().unwrap_or(0.0);
        if 6.0 * shape.sigma3 * rmax > 0.5 * len[2] {
            return Err(ConfigError {
                line: t.line("riesz.sigma3").or(t.line("riesz.R_list")),
                message: format!("x3 profile width {} at R = {rmax} is too wide for L3 = {}", shape.sigma3 * rmax, len[2]),
            });
        }
        if (gamma2 + shape.outer_width) * rmax > half_perp {
            return Err(ConfigError {
                line: t.line("riesz.R_list"),
                message: format!(
                    "outer profile reaches {} at R = {rmax}, beyond the transverse half width {half_perp}",
                    (gamma2 + shape.outer_width) * rmax
                ),
            });
        }
        Some(RieszBlock {
            gamma1,
            gamma2,
            radii,
            estimate,
            axes,
            direction,
            shape,
        })
    } else {
        None
    };

    let groundstate = GroundStateBlock {
        mass: match t.get::<f64>("groundstate.mass")? {
            Some((v, line)) => Some(positive("groundstate.mass", v, Some(line))?),
            None => None,
        },
        max_iter: t.opt("groundstate.max_iter")?,
        residual_tol: t.opt("groundstate.residual_tol")?,
        sigma_perp: t.opt("groundstate.sigma_perp")?,
        sigma3: t.opt("groundstate.sigma3")?,
    };

    let dichotomy = if t.has_section("dichotomy") {
        let (amplitudes, la) = t.list("dichotomy.amplitudes")?.ok_or_else(|| ConfigError::global("missing required key `dichotomy.amplitudes`"))?;
        let (dilations, ld) = t.list("dichotomy.dilations")?.ok_or_else(|| ConfigError::global("missing required key `dichotomy.dilations`"))?;
        for &a in &amplitudes {
            positive("dichotomy.amplitudes", a, Some(la))?;
        }
        for &d in &dilations {
            positive("dichotomy.dilations", d, Some(ld))?;
        }
        let sigma_perp = t.opt("dichotomy.sigma_perp")?.unwrap_or(1.0);
        let sigma3 = t.opt("dichotomy.sigma3")?.unwrap_or(1.0);
        for &d in &dilations {
            check_widths(&grid, sigma_perp / d, sigma3 / d, Some(ld))?;
        }
        Some(DichotomyBlock {
            amplitudes,
            dilations,
            sigma_perp,
            sigma3,
        })
    } else {
        None
    };

    if experiment == Experiment::Evolve || experiment == Experiment::VirialAudit {
        if let Some(i) = &initial {
            if i.shape == Shape::GroundState && couplings.map(classify_regime) == Some(Regime::Stable) {
                return Err(ConfigError {
                    line: t.line("initial.shape"),
                    message: "shape = ground_state needs couplings in the unstable regime".into(),
                });
            }
        }
    }

    Ok(RunConfig {
        experiment,
        seed,
        grid,
        couplings,
        initial,
        evolve,
        virial,
        riesz,
        groundstate,
        dichotomy,
        output_dir: t.opt::<PathBuf>("output.dir")?.unwrap_or_else(|| PathBuf::from("out")),
        checkpoint_prefix: t.opt("output.checkpoint_prefix")?.unwrap_or_else(|| "state".to_string()),
        canonical: t.canonical(),
    })
}

/// Human-readable key listing for one experiment.
pub fn describe(experiment: Experiment) -> String {
    let sections = experiment.required_sections();
    let mut out = format!("experiment `{}`\nrequired sections: run, {}\n", experiment.name(), sections.join(", "));
    let mut last = "";
    for (key, req, doc) in KEYS {
        let section = key.split('.').next().unwrap_or("");
        if section != "run" && section != "output" && !sections.contains(&section) && !optional_for(experiment, section) {
            continue;
        }
        if section != last {
            out.push('\n');
            last = section;
        }
        let mark = if *req == "*" && (section == "run" || sections.contains(&section)) {
            "required"
        } else {
            "optional"
        };
        out.push_str(&format!("{key:<34} {mark:<9} {doc}\n"));
    }
    out
}

fn optional_for(experiment: Experiment, section: &str) -> bool {
    matches!(
        (experiment, section),
        (Experiment::Evolve, "virial")
            | (Experiment::Evolve, "groundstate")
            | (Experiment::VirialAudit, "groundstate")
            | (Experiment::GroundState, "groundstate")
            | (Experiment::Dichotomy, "groundstate")
    )
}
