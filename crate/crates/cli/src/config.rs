//! Run and sweep configuration: a flat TOML schema whose sections mirror the
//! solver inputs, merged over optional presets and validated with field
//! paths before anything executes.

use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

use nsir_core::kernel::{KernelFamily, KernelSpec, Normalization};
use nsir_core::kinetics::ModelParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config at {path}: {message}")]
    Invalid { path: String, message: String },
    #[error("unknown preset {0:?}; available: {names}", names = super::presets::NAMES.join(", "))]
    UnknownPreset(String),
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

/// Raw file contents; every field optional so presets, files, and flag
/// overrides merge field by field.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub run: Option<RawRun>,
    pub params: Option<RawParams>,
    pub kernel: Option<RawKernel>,
    pub domain: Option<RawDomain>,
    pub stefan: Option<RawStefan>,
    pub numerics: Option<RawNumerics>,
    pub init: Option<RawInit>,
    pub eigen: Option<RawEigen>,
    pub sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub model: Option<String>,
    pub name: Option<String>,
    pub preset: Option<String>,
    /// Dirichlet runs only: also decide steady-state existence two ways.
    pub existence: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub a: Option<f64>,
    pub beta: Option<f64>,
    pub b: Option<f64>,
    pub gamma: Option<f64>,
    pub k: Option<f64>,
    pub d: Option<f64>,
    pub mu: Option<f64>,
    pub h0: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawKernel {
    pub family: Option<String>,
    pub width: Option<f64>,
    pub normalization: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDomain {
    pub half: Option<f64>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStefan {
    pub s_spacing: Option<f64>,
    pub n_mapped: Option<usize>,
    pub l_dom: Option<f64>,
    pub s_level: Option<f64>,
    pub i_amp: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNumerics {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub record_cap: Option<usize>,
    pub snapshot_times: Option<Vec<f64>>,
    pub steady_stop: Option<bool>,
    pub steady_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInit {
    pub kind: Option<String>,
    pub s: Option<f64>,
    pub i: Option<f64>,
    pub power: Option<i32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEigen {
    pub d: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub half: Option<f64>,
    pub n: Option<usize>,
    pub l_star: Option<bool>,
    pub length_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub count: Option<usize>,
    pub log: Option<bool>,
    pub reducer: Option<String>,
    pub workers: Option<usize>,
}

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Ok(toml::from_str(&text)?)
    }

    /// Lay `over` on top of `self` field by field; `over` wins where set.
    pub fn merged_with(mut self, over: RawConfig) -> RawConfig {
        macro_rules! merge_section {
            ($section:ident, [$($field:ident),+]) => {
                if let Some(o) = over.$section {
                    let base = self.$section.get_or_insert_with(Default::default);
                    $(if o.$field.is_some() { base.$field = o.$field; })+
                }
            };
        }
        merge_section!(run, [model, name, preset, existence]);
        merge_section!(params, [a, beta, b, gamma, k, d, mu, h0]);
        merge_section!(kernel, [family, width, normalization]);
        merge_section!(domain, [half, n]);
        merge_section!(stefan, [s_spacing, n_mapped, l_dom, s_level, i_amp]);
        merge_section!(numerics, [dt, horizon, record_cap, snapshot_times, steady_stop, steady_tol]);
        merge_section!(init, [kind, s, i, power]);
        merge_section!(eigen, [d, c1, c2, half, n, l_star, length_tol]);
        merge_section!(sweep, [axis, values, lo, hi, count, log, reducer, workers]);
        self
    }

    /// Expand `run.preset`, if any, into a full base config under `self`.
    pub fn with_preset_applied(self) -> Result<RawConfig, ConfigError> {
        let Some(name) = self.run.as_ref().and_then(|r| r.preset.clone()) else {
            return Ok(self);
        };
        let base = super::presets::raw(&name).ok_or(ConfigError::UnknownPreset(name))?;
        Ok(base.merged_with(self))
    }
}

/// Overwrite one numeric field, addressed by its config path.
pub fn set_numeric(raw: &mut RawConfig, path: &str, value: f64) -> Result<(), ConfigError> {
    if !value.is_finite() {
        return Err(invalid(path, format!("value {value} is not finite")));
    }
    macro_rules! float_field {
        ($section:ident, $field:ident) => {{
            raw.$section.get_or_insert_with(Default::default).$field = Some(value);
            return Ok(());
        }};
    }
    macro_rules! count_field {
        ($section:ident, $field:ident, $ty:ty) => {{
            if value.fract() != 0.0 || value < 0.0 {
                return Err(invalid(path, format!("expected a nonnegative integer, got {value}")));
            }
            raw.$section.get_or_insert_with(Default::default).$field = Some(value as $ty);
            return Ok(());
        }};
    }
    match path {
        "params.a" => float_field!(params, a),
        "params.beta" => float_field!(params, beta),
        "params.b" => float_field!(params, b),
        "params.gamma" => float_field!(params, gamma),
        "params.k" => float_field!(params, k),
        "params.d" => float_field!(params, d),
        "params.mu" => float_field!(params, mu),
        "params.h0" => float_field!(params, h0),
        "kernel.width" => float_field!(kernel, width),
        "domain.half" => float_field!(domain, half),
        "domain.n" => count_field!(domain, n, usize),
        "stefan.s_spacing" => float_field!(stefan, s_spacing),
        "stefan.n_mapped" => count_field!(stefan, n_mapped, usize),
        "stefan.l_dom" => float_field!(stefan, l_dom),
        "stefan.s_level" => float_field!(stefan, s_level),
        "stefan.i_amp" => float_field!(stefan, i_amp),
        "numerics.dt" => float_field!(numerics, dt),
        "numerics.horizon" => float_field!(numerics, horizon),
        "numerics.record_cap" => count_field!(numerics, record_cap, usize),
        "numerics.steady_tol" => float_field!(numerics, steady_tol),
        "init.s" => float_field!(init, s),
        "init.i" => float_field!(init, i),
        "init.power" => count_field!(init, power, i32),
        "eigen.d" => float_field!(eigen, d),
        "eigen.c1" => float_field!(eigen, c1),
        "eigen.c2" => float_field!(eigen, c2),
        "eigen.half" => float_field!(eigen, half),
        "eigen.n" => count_field!(eigen, n, usize),
        "eigen.length_tol" => float_field!(eigen, length_tol),
        _ => Err(invalid(path, "not a numeric config field")),
    }
}

/// Apply one `--set path=value` override; numeric, string, and boolean
/// fields are dispatched by path.
pub fn set_override(raw: &mut RawConfig, assignment: &str) -> Result<(), ConfigError> {
    let Some((path, value)) = assignment.split_once('=') else {
        return Err(invalid(assignment, "overrides take the form path=value"));
    };
    let parse_bool = |v: &str| -> Result<bool, ConfigError> {
        v.parse::<bool>().map_err(|_| invalid(path, format!("expected true/false, got {v:?}")))
    };
    match path {
        "run.model" => raw.run.get_or_insert_with(Default::default).model = Some(value.into()),
        "run.name" => raw.run.get_or_insert_with(Default::default).name = Some(value.into()),
        "run.preset" => raw.run.get_or_insert_with(Default::default).preset = Some(value.into()),
        "run.existence" => {
            raw.run.get_or_insert_with(Default::default).existence = Some(parse_bool(value)?)
        }
        "kernel.family" => {
            raw.kernel.get_or_insert_with(Default::default).family = Some(value.into())
        }
        "kernel.normalization" => {
            raw.kernel.get_or_insert_with(Default::default).normalization = Some(value.into())
        }
        "init.kind" => raw.init.get_or_insert_with(Default::default).kind = Some(value.into()),
        "numerics.steady_stop" => {
            raw.numerics.get_or_insert_with(Default::default).steady_stop =
                Some(parse_bool(value)?)
        }
        "eigen.l_star" => {
            raw.eigen.get_or_insert_with(Default::default).l_star = Some(parse_bool(value)?)
        }
        _ => {
            let parsed: f64 = value
                .parse()
                .map_err(|_| invalid(path, format!("expected a number, got {value:?}")))?;
            set_numeric(raw, path, parsed)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Neumann,
    Dirichlet,
    Stefan,
    Eigen,
    Thresholds,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Model::Neumann => "neumann",
            Model::Dirichlet => "dirichlet",
            Model::Stefan => "stefan",
            Model::Eigen => "eigen",
            Model::Thresholds => "thresholds",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Base values modulated by `1 + 0.2 cos(pi x / L)`.
    Perturbed,
    /// Half-sine profiles raised to `power` (zero at the boundary).
    Sine,
    /// Spatially constant fields.
    Constant,
}

#[derive(Debug, Clone)]
pub struct DomainConfig {
    pub half: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct StefanConfig {
    pub s_spacing: f64,
    pub n_mapped: Option<usize>,
    pub l_dom: Option<f64>,
    pub s_level: f64,
    pub i_amp: f64,
}

#[derive(Debug, Clone)]
pub struct NumericsConfig {
    pub dt: Option<f64>,
    pub horizon: f64,
    pub record_cap: usize,
    pub snapshot_times: Vec<f64>,
    pub steady_stop: bool,
    pub steady_tol: f64,
}

#[derive(Debug, Clone)]
pub struct InitConfig {
    pub kind: InitKind,
    pub s: f64,
    pub i: f64,
    pub power: i32,
}

#[derive(Debug, Clone)]
pub struct EigenConfig {
    pub d: f64,
    pub c1: f64,
    pub c2: f64,
    pub half: f64,
    pub n: usize,
    pub l_star: bool,
    pub length_tol: f64,
}

/// Fully resolved, validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub name: String,
    pub model: Model,
    pub params: Option<ModelParams>,
    pub kernel: KernelSpec,
    pub domain: DomainConfig,
    pub stefan: StefanConfig,
    pub numerics: NumericsConfig,
    pub init: InitConfig,
    pub eigen: EigenConfig,
    pub existence: bool,
}

impl RunConfig {
    /// Model parameters, guaranteed present by [`resolve`] for every model
    /// that consumes them.
    pub fn params(&self) -> &ModelParams {
        self.params.as_ref().expect("resolve() requires params for this model")
    }
}

fn require<T: Copy>(field: Option<T>, path: &str) -> Result<T, ConfigError> {
    field.ok_or_else(|| invalid(path, "required field is missing"))
}

fn positive(value: f64, path: &str) -> Result<f64, ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(path, format!("must be positive and finite, got {value}")))
    }
}

fn parse_model(s: &str) -> Result<Model, ConfigError> {
    match s {
        "neumann" => Ok(Model::Neumann),
        "dirichlet" => Ok(Model::Dirichlet),
        "stefan" => Ok(Model::Stefan),
        "eigen" => Ok(Model::Eigen),
        "thresholds" => Ok(Model::Thresholds),
        other => Err(invalid(
            "run.model",
            format!("unknown model {other:?}; expected neumann, dirichlet, stefan, eigen, or thresholds"),
        )),
    }
}

fn parse_kernel(raw: &RawKernel) -> Result<KernelSpec, ConfigError> {
    let family = match raw.family.as_deref() {
        Some("uniform") => KernelFamily::Uniform,
        Some("top_hat") => KernelFamily::TopHat,
        Some("truncated_gaussian") => KernelFamily::TruncatedGaussian,
        Some(other) => {
            return Err(invalid(
                "kernel.family",
                format!("unknown family {other:?}; expected uniform, top_hat, or truncated_gaussian"),
            ))
        }
        None => return Err(invalid("kernel.family", "required field is missing")),
    };
    let normalization = match raw.normalization.as_deref() {
        None | Some("none") => Normalization::None,
        Some("column_stochastic") => Normalization::ColumnStochastic,
        Some("sinkhorn_symmetric") => Normalization::SinkhornSymmetric,
        Some(other) => {
            return Err(invalid(
                "kernel.normalization",
                format!(
                    "unknown normalization {other:?}; expected none, column_stochastic, or sinkhorn_symmetric"
                ),
            ))
        }
    };
    let width = match family {
        KernelFamily::Uniform => raw.width.unwrap_or(1.0),
        _ => positive(require(raw.width, "kernel.width")?, "kernel.width")?,
    };
    Ok(KernelSpec { family, width, normalization })
}

fn parse_params(raw: &RawParams) -> Result<ModelParams, ConfigError> {
    let fields = [
        ("params.a", raw.a),
        ("params.beta", raw.beta),
        ("params.b", raw.b),
        ("params.gamma", raw.gamma),
        ("params.k", raw.k),
        ("params.d", raw.d),
        ("params.mu", raw.mu),
        ("params.h0", raw.h0),
    ];
    for (path, v) in fields {
        positive(require(v, path)?, path)?;
    }
    if raw.a.unwrap() <= raw.beta.unwrap() {
        return Err(invalid(
            "params.beta",
            format!(
                "death rate {} must be below birth rate a = {} for a viable population",
                raw.beta.unwrap(),
                raw.a.unwrap()
            ),
        ));
    }
    ModelParams::new(
        raw.a.unwrap(),
        raw.beta.unwrap(),
        raw.b.unwrap(),
        raw.gamma.unwrap(),
        raw.k.unwrap(),
        raw.d.unwrap(),
        raw.mu.unwrap(),
        raw.h0.unwrap(),
    )
    .map_err(|e| invalid("params", e.to_string()))
}

/// Validate and fill defaults. `fallback_name` names the output directory
/// when neither the file nor a preset sets one.
pub fn resolve(raw: &RawConfig, fallback_name: &str) -> Result<RunConfig, ConfigError> {
    let run = raw.run.clone().unwrap_or_default();
    let model = parse_model(run.model.as_deref().ok_or_else(|| {
        invalid("run.model", "required field is missing (or name a preset that sets it)")
    })?)?;

    let needs_params =
        matches!(model, Model::Neumann | Model::Dirichlet | Model::Stefan | Model::Thresholds);
    let params = if needs_params || raw.params.is_some() {
        Some(parse_params(raw.params.as_ref().ok_or_else(|| {
            invalid("params", format!("the {model} model requires a [params] section"))
        })?)?)
    } else {
        None
    };

    let kernel = parse_kernel(raw.kernel.as_ref().unwrap_or(&RawKernel::default()))?;

    let rd = raw.domain.clone().unwrap_or_default();
    let domain = DomainConfig {
        half: positive(rd.half.unwrap_or(2.0), "domain.half")?,
        n: rd.n.unwrap_or(201),
    };
    if domain.n < 5 {
        return Err(invalid("domain.n", format!("need at least 5 nodes, got {}", domain.n)));
    }

    let rs = raw.stefan.clone().unwrap_or_default();
    let stefan = StefanConfig {
        s_spacing: positive(rs.s_spacing.unwrap_or(0.02), "stefan.s_spacing")?,
        n_mapped: rs.n_mapped,
        l_dom: rs.l_dom.map(|v| positive(v, "stefan.l_dom")).transpose()?,
        s_level: positive(rs.s_level.unwrap_or(0.5), "stefan.s_level")?,
        i_amp: positive(rs.i_amp.unwrap_or(0.45), "stefan.i_amp")?,
    };
    if let (Some(l_dom), Some(p)) = (stefan.l_dom, params.as_ref()) {
        if model == Model::Stefan && l_dom <= p.h0 {
            return Err(invalid(
                "stefan.l_dom",
                format!("domain half-width {l_dom} must exceed the initial front h0 = {}", p.h0),
            ));
        }
    }

    let rn = raw.numerics.clone().unwrap_or_default();
    let horizon = positive(rn.horizon.unwrap_or(200.0), "numerics.horizon")?;
    let mut snapshot_times = rn.snapshot_times.unwrap_or_else(|| vec![0.0, horizon]);
    for (idx, t) in snapshot_times.iter().enumerate() {
        if !(t.is_finite() && *t >= 0.0 && *t <= horizon) {
            return Err(invalid(
                &format!("numerics.snapshot_times[{idx}]"),
                format!("must lie in [0, horizon = {horizon}], got {t}"),
            ));
        }
    }
    snapshot_times.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let numerics = NumericsConfig {
        dt: rn.dt.map(|v| positive(v, "numerics.dt")).transpose()?,
        horizon,
        record_cap: rn.record_cap.unwrap_or(2001).max(2),
        snapshot_times,
        steady_stop: rn.steady_stop.unwrap_or(false),
        steady_tol: positive(rn.steady_tol.unwrap_or(1e-8), "numerics.steady_tol")?,
    };

    let ri = raw.init.clone().unwrap_or_default();
    let kind = match ri.kind.as_deref() {
        None | Some("perturbed") => InitKind::Perturbed,
        Some("sine") => InitKind::Sine,
        Some("constant") => InitKind::Constant,
        Some(other) => {
            return Err(invalid(
                "init.kind",
                format!("unknown init {other:?}; expected perturbed, sine, or constant"),
            ))
        }
    };
    let init = InitConfig {
        kind,
        s: positive(ri.s.unwrap_or(0.8), "init.s")?,
        i: positive(ri.i.unwrap_or(0.1), "init.i")?,
        power: ri.power.unwrap_or(1),
    };
    if init.power < 1 {
        return Err(invalid("init.power", format!("must be at least 1, got {}", init.power)));
    }

    let re = raw.eigen.clone().unwrap_or_default();
    let (d_default, c1_default, c2_default, half_default) = match params.as_ref() {
        Some(p) => (Some(p.d), Some(p.k * p.n_star()), Some(p.a + p.gamma), Some(p.h0)),
        None => (Some(1.0), None, None, None),
    };
    let eigen = EigenConfig {
        d: positive(require(re.d.or(d_default), "eigen.d")?, "eigen.d")?,
        c1: positive(require(re.c1.or(c1_default), "eigen.c1")?, "eigen.c1")?,
        c2: positive(require(re.c2.or(c2_default), "eigen.c2")?, "eigen.c2")?,
        half: positive(require(re.half.or(half_default), "eigen.half")?, "eigen.half")?,
        n: re.n.unwrap_or(401),
        l_star: re.l_star.unwrap_or(false),
        length_tol: positive(re.length_tol.unwrap_or(1e-6), "eigen.length_tol")?,
    };
    if eigen.n < 9 {
        return Err(invalid("eigen.n", format!("need at least 9 nodes, got {}", eigen.n)));
    }

    let name = run
        .name
        .or(run.preset)
        .unwrap_or_else(|| fallback_name.to_string());

    Ok(RunConfig {
        name,
        model,
        params,
        kernel,
        domain,
        stefan,
        numerics,
        init,
        eigen,
        existence: run.existence.unwrap_or(false),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reducer {
    /// Stefan verdict and front measurements.
    Classification,
    /// Terminal field statistics of a zero-flux or zero-boundary run.
    TerminalState,
    /// Principal eigenvalue and threshold ratio.
    Lambda1,
}

impl std::fmt::Display for Reducer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Reducer::Classification => "classification",
            Reducer::TerminalState => "terminal_state",
            Reducer::Lambda1 => "lambda1",
        };
        f.write_str(name)
    }
}

/// Resolved sweep: the base kept raw so each axis value revalidates.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub name: String,
    pub base: RawConfig,
    pub axis: String,
    pub values: Vec<f64>,
    pub reducer: Reducer,
    pub workers: usize,
}

pub fn resolve_sweep(raw: &RawConfig, fallback_name: &str) -> Result<SweepConfig, ConfigError> {
    let sweep = raw
        .sweep
        .clone()
        .ok_or_else(|| invalid("sweep", "sweep configs need a [sweep] section"))?;
    let axis = sweep.axis.ok_or_else(|| invalid("sweep.axis", "required field is missing"))?;

    let values = match (sweep.values, sweep.lo, sweep.hi, sweep.count) {
        (Some(values), None, None, None) => values,
        (None, Some(lo), Some(hi), Some(count)) => {
            if count < 2 {
                return Err(invalid("sweep.count", format!("need at least 2 points, got {count}")));
            }
            if !(hi > lo) {
                return Err(invalid("sweep.hi", format!("must exceed sweep.lo = {lo}, got {hi}")));
            }
            if sweep.log.unwrap_or(false) {
                if !(lo > 0.0) {
                    return Err(invalid("sweep.lo", "log spacing requires a positive lower end"));
                }
                let (llo, lhi) = (lo.ln(), hi.ln());
                (0..count)
                    .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
                    .collect()
            } else {
                (0..count)
                    .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    .collect()
            }
        }
        _ => {
            return Err(invalid(
                "sweep.values",
                "set either an explicit values list or the lo/hi/count triple, not both",
            ))
        }
    };
    if values.len() < 2 {
        return Err(invalid("sweep.values", "need at least 2 axis values"));
    }
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(invalid("sweep.values", "axis values must be strictly monotone"));
    }

    let reducer = match sweep.reducer.as_deref() {
        Some("classification") => Reducer::Classification,
        Some("terminal_state") => Reducer::TerminalState,
        Some("lambda1") => Reducer::Lambda1,
        Some(other) => {
            return Err(invalid(
                "sweep.reducer",
                format!(
                    "unknown reducer {other:?}; expected classification, terminal_state, or lambda1"
                ),
            ))
        }
        None => return Err(invalid("sweep.reducer", "required field is missing")),
    };

    let workers = match sweep.workers {
        Some(0) => return Err(invalid("sweep.workers", "worker count must be positive")),
        Some(w) => w,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };

    // The axis must target a numeric field and the base must resolve at
    // every value; probe the first one now so bad paths fail fast.
    let mut base = raw.clone();
    base.sweep = None;
    let mut probe = base.clone();
    set_numeric(&mut probe, &axis, values[0])?;
    resolve(&probe, fallback_name)?;

    Ok(SweepConfig {
        name: format!("{fallback_name}-sweep"),
        base,
        axis,
        values,
        reducer,
        workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RawConfig {
        toml::from_str(text).expect("test config parses")
    }

    fn invalid_path(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { path, .. } => path,
            other => panic!("expected an Invalid error, got: {other}"),
        }
    }

    const KINETIC: &str = r#"
        [run]
        model = "neumann"

        [params]
        a = 2.0
        beta = 1.0
        b = 1.0
        gamma = 0.5
        k = 2.0
        d = 1.0
        mu = 1.0
        h0 = 1.0

        [kernel]
        family = "top_hat"
        width = 0.5
    "#;

    #[test]
    fn file_fields_override_preset_fields() {
        let raw = parse("[run]\npreset = \"thm22\"\n\n[params]\nk = 9.0");
        let merged = raw.with_preset_applied().unwrap();
        let params = merged.params.unwrap();
        assert_eq!(params.k, Some(9.0));
        assert_eq!(params.a, Some(2.0));
        assert_eq!(merged.run.unwrap().model.as_deref(), Some("neumann"));
    }

    #[test]
    fn unknown_presets_list_the_choices() {
        let raw = parse("[run]\npreset = \"nope\"");
        let err = raw.with_preset_applied().unwrap_err();
        assert!(matches!(err, ConfigError::UnknownPreset(_)));
        assert!(err.to_string().contains("thm22"), "message: {err}");
    }

    #[test]
    fn overrides_parse_strings_bools_and_numbers() {
        let mut raw = RawConfig::default();
        set_override(&mut raw, "run.model=stefan").unwrap();
        set_override(&mut raw, "numerics.steady_stop=true").unwrap();
        set_override(&mut raw, "params.k=3.5").unwrap();
        assert_eq!(raw.run.as_ref().unwrap().model.as_deref(), Some("stefan"));
        assert_eq!(raw.numerics.as_ref().unwrap().steady_stop, Some(true));
        assert_eq!(raw.params.as_ref().unwrap().k, Some(3.5));

        assert!(set_override(&mut raw, "no-equals-sign").is_err());
        assert!(set_override(&mut raw, "params.zeta=1").is_err());
        assert!(set_override(&mut raw, "numerics.steady_stop=yes").is_err());
    }

    #[test]
    fn counts_reject_fractional_values() {
        let mut raw = RawConfig::default();
        let err = set_numeric(&mut raw, "domain.n", 120.5).unwrap_err();
        assert_eq!(invalid_path(err), "domain.n");
    }

    #[test]
    fn resolve_fills_documented_defaults() {
        let cfg = resolve(&parse(KINETIC), "fallback").unwrap();
        assert_eq!(cfg.name, "fallback");
        assert_eq!(cfg.domain.half, 2.0);
        assert_eq!(cfg.domain.n, 201);
        assert_eq!(cfg.numerics.horizon, 200.0);
        assert_eq!(cfg.numerics.snapshot_times, vec![0.0, 200.0]);
        assert!(matches!(cfg.init.kind, InitKind::Perturbed));
        assert_eq!((cfg.init.s, cfg.init.i), (0.8, 0.1));
    }

    #[test]
    fn eigen_defaults_derive_from_kinetic_parameters() {
        let text = KINETIC.replace("model = \"neumann\"", "model = \"eigen\"");
        let cfg = resolve(&parse(&text), "run").unwrap();
        // gain k (a - beta) / b, loss a + gamma, interval from the seed.
        assert_eq!(cfg.eigen.c1, 2.0);
        assert_eq!(cfg.eigen.c2, 2.5);
        assert_eq!(cfg.eigen.d, 1.0);
        assert_eq!(cfg.eigen.half, 1.0);
    }

    #[test]
    fn kinetic_models_require_parameters() {
        let raw = parse("[run]\nmodel = \"neumann\"\n\n[kernel]\nfamily = \"uniform\"");
        let err = resolve(&raw, "run").unwrap_err();
        assert_eq!(invalid_path(err), "params");
    }

    #[test]
    fn recruitment_must_exceed_mortality() {
        let text = KINETIC.replace("beta = 1.0", "beta = 2.5");
        let err = resolve(&parse(&text), "run").unwrap_err();
        assert_eq!(invalid_path(err), "params.beta");
    }

    #[test]
    fn snapshots_must_lie_inside_the_horizon() {
        let text = format!("{KINETIC}\n[numerics]\nhorizon = 10.0\nsnapshot_times = [0.0, 50.0]");
        let err = resolve(&parse(&text), "run").unwrap_err();
        assert_eq!(invalid_path(err), "numerics.snapshot_times[1]");
    }

    #[test]
    fn sweeps_take_exactly_one_value_source() {
        let neither = format!("{KINETIC}\n[sweep]\naxis = \"params.k\"\nreducer = \"terminal_state\"");
        let err = resolve_sweep(&parse(&neither), "scan").unwrap_err();
        assert_eq!(invalid_path(err), "sweep.values");

        let both = format!(
            "{KINETIC}\n[sweep]\naxis = \"params.k\"\nreducer = \"terminal_state\"\nvalues = [1.0, 2.0]\nlo = 1.0\nhi = 2.0\ncount = 3"
        );
        let err = resolve_sweep(&parse(&both), "scan").unwrap_err();
        assert_eq!(invalid_path(err), "sweep.values");
    }

    #[test]
    fn sweep_values_must_be_strictly_monotone() {
        let text = format!(
            "{KINETIC}\n[sweep]\naxis = \"params.k\"\nreducer = \"terminal_state\"\nvalues = [1.0, 3.0, 2.0]"
        );
        let err = resolve_sweep(&parse(&text), "scan").unwrap_err();
        assert_eq!(invalid_path(err), "sweep.values");
    }

    #[test]
    fn sweep_axes_are_probed_before_running() {
        let text = format!(
            "{KINETIC}\n[sweep]\naxis = \"params.zeta\"\nreducer = \"terminal_state\"\nvalues = [1.0, 2.0]"
        );
        let err = resolve_sweep(&parse(&text), "scan").unwrap_err();
        assert_eq!(invalid_path(err), "params.zeta");
    }

    #[test]
    fn log_spaced_ranges_expand_geometrically() {
        let text = format!(
            "{KINETIC}\n[sweep]\naxis = \"params.k\"\nreducer = \"terminal_state\"\nlo = 1.0\nhi = 100.0\ncount = 3\nlog = true"
        );
        let sweep = resolve_sweep(&parse(&text), "scan").unwrap();
        assert_eq!(sweep.name, "scan-sweep");
        assert_eq!(sweep.values.len(), 3);
        assert!((sweep.values[1] - 10.0).abs() < 1e-12, "values: {:?}", sweep.values);
    }
}
