//! Experiment configuration: a small documented TOML tree.
//!
//! ```toml
//! kind = "simulate"              # optional; the subcommand is authoritative
//!
//! [model]
//! type = "lorenz96"              # or "euler2d"
//! n = 6                          # lorenz96: cyclic dimension (>= 4)
//! # n_max = 2                    # euler2d: spectral truncation (>= 2)
//! # nu = 0.5                     # forcing: both nu and f, or neither
//! # f = [8.0, 8.0, ...]          # length = state dimension, not all zero
//! # dissipation = "laplacian"    # euler2d forced only; or "ekman"
//! # x0 = [...]                   # initial state; default derived from seed
//!
//! [scheme]
//! h = 0.1                        # mean flow duration per field
//! time_law = "exponential"       # or "gamma" (needs gamma_shape) / "uniform"
//! order_policy = "random-permutation"  # or "fixed"
//!
//! [run]
//! cycles = 1000
//! samples = 10000
//! seed = 0
//! burn_in = 0
//! ```
//!
//! Parsing reports every validation error (with its field path), not just
//! the first, and rejects unknown keys at every level. A parsed config
//! re-serializes to canonical TOML that parses back to an identical value.

use std::fmt;

use rand::Rng;
use splitchain::diagnostics::ModelSpec;
use splitchain::euler2d::{is_nondegenerate, Dissipation, EulerSpec, Lattice};
use splitchain::lorenz96::LorenzSpec;
use splitchain::splitting::{substream, OrderPolicy, TimeLawSpec};
use toml::value::{Table, Value};

/// What a run does; the CLI subcommands mirror these one-to-one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Simulate,
    WeakConverge,
    PathwiseConverge,
    Ergodic,
    Ranks,
    Bracket,
    Lyapunov,
    ControlDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Simulate,
        ExperimentKind::WeakConverge,
        ExperimentKind::PathwiseConverge,
        ExperimentKind::Ergodic,
        ExperimentKind::Ranks,
        ExperimentKind::Bracket,
        ExperimentKind::Lyapunov,
        ExperimentKind::ControlDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::WeakConverge => "weak-converge",
            ExperimentKind::PathwiseConverge => "pathwise-converge",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Ranks => "ranks",
            ExperimentKind::Bracket => "bracket",
            ExperimentKind::Lyapunov => "lyapunov",
            ExperimentKind::ControlDemo => "control-demo",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Duration distribution selector; the mean is always `scheme.h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeLawKind {
    Exponential,
    Gamma { shape: f64 },
    Uniform,
}

impl TimeLawKind {
    pub fn to_spec(self, h: f64) -> TimeLawSpec {
        match self {
            TimeLawKind::Exponential => TimeLawSpec::Exponential { mean: h },
            TimeLawKind::Gamma { shape } => TimeLawSpec::Gamma { shape, mean: h },
            TimeLawKind::Uniform => TimeLawSpec::UniformPositive { max: 2.0 * h },
        }
    }

    fn name(self) -> &'static str {
        match self {
            TimeLawKind::Exponential => "exponential",
            TimeLawKind::Gamma { .. } => "gamma",
            TimeLawKind::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderPolicyKind {
    RandomPermutation,
    Fixed,
}

impl OrderPolicyKind {
    pub fn to_policy(self) -> OrderPolicy {
        match self {
            OrderPolicyKind::RandomPermutation => OrderPolicy::RandomPermutation,
            OrderPolicyKind::Fixed => OrderPolicy::Fixed,
        }
    }

    fn name(self) -> &'static str {
        match self {
            OrderPolicyKind::RandomPermutation => "random-permutation",
            OrderPolicyKind::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub h: f64,
    pub time_law: TimeLawKind,
    pub order_policy: OrderPolicyKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cycles: u64,
    pub samples: u64,
    pub seed: u64,
    pub burn_in: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub model: ModelSpec,
    /// Initial state; filled from the seed when the file omits it, so a
    /// parsed config always carries the exact state a run will use.
    pub x0: Vec<f64>,
    pub scheme: SchemeConfig,
    pub run: RunConfig,
}

/// One validation problem, located by its dotted field path ("" for
/// file-level syntax errors).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Every problem found in one pass over the config tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Error accumulator plus typed extractors over the TOML tree.
struct Ctx {
    errors: Vec<ConfigError>,
}

impl Ctx {
    fn new() -> Self {
        Ctx { errors: Vec::new() }
    }

    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError { path: path.into(), message: message.into() });
    }

    fn reject_unknown(&mut self, table: &Table, path: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let at = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                self.err(at, format!("unknown key (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(sub)) => Some(sub),
            Some(v) => {
                self.err(join(path, key), format!("expected a table, found {}", v.type_str()));
                None
            }
        }
    }

    fn f64_key(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        match t.get(key) {
            None => None,
            Some(Value::Float(v)) => Some(*v),
            Some(Value::Integer(v)) => Some(*v as f64),
            Some(v) => {
                self.err(join(path, key), format!("expected a number, found {}", v.type_str()));
                None
            }
        }
    }

    fn u64_key(&mut self, t: &Table, path: &str, key: &str) -> Option<u64> {
        match t.get(key) {
            None => None,
            Some(Value::Integer(v)) if *v >= 0 => Some(*v as u64),
            Some(Value::Integer(v)) => {
                self.err(join(path, key), format!("must be nonnegative, got {v}"));
                None
            }
            Some(v) => {
                self.err(join(path, key), format!("expected an integer, found {}", v.type_str()));
                None
            }
        }
    }

    fn str_key<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a str> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                self.err(join(path, key), format!("expected a string, found {}", v.type_str()));
                None
            }
        }
    }

    fn f64_array_key(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<f64>> {
        let arr = match t.get(key) {
            None => return None,
            Some(Value::Array(a)) => a,
            Some(v) => {
                self.err(join(path, key), format!("expected an array, found {}", v.type_str()));
                return None;
            }
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, item) in arr.iter().enumerate() {
            match item {
                Value::Float(v) => out.push(*v),
                Value::Integer(v) => out.push(*v as f64),
                other => {
                    self.err(
                        format!("{}[{i}]", join(path, key)),
                        format!("expected a number, found {}", other.type_str()),
                    );
                    return None;
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            self.err(join(path, key), "entries must be finite");
            return None;
        }
        Some(out)
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Parse and fully validate a config document. On failure the result lists
/// every problem found, each tagged with its field path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        // The toml error text already carries line/column context.
        ConfigErrors(vec![ConfigError { path: String::new(), message: e.to_string() }])
    })?;
    validate_table(&table)
}

/// Validate an already-parsed TOML tree (the CLI applies `--set` overrides
/// to the tree before this step).
pub fn validate_table(root: &Table) -> Result<ExperimentConfig, ConfigErrors> {
    let mut cx = Ctx::new();
    cx.reject_unknown(root, "", &["kind", "model", "scheme", "run"]);

    let kind = match cx.str_key(root, "", "kind") {
        None => None,
        Some(s) => match ExperimentKind::from_name(s) {
            Some(k) => Some(k),
            None => {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                cx.err("kind", format!("unknown kind {s:?} (one of: {})", names.join(", ")));
                None
            }
        },
    };

    let run = validate_run(&mut cx, root);
    let scheme = validate_scheme(&mut cx, root);
    let model = validate_model(&mut cx, root);

    // The initial state lives in the model section; resolve it only once
    // the model itself is sound.
    let x0 = match &model {
        Some(m) => resolve_x0(&mut cx, root, m, run.seed),
        None => None,
    };

    if cx.errors.is_empty() {
        Ok(ExperimentConfig {
            kind,
            model: model.expect("validated"),
            x0: x0.expect("validated"),
            scheme,
            run,
        })
    } else {
        Err(ConfigErrors(cx.errors))
    }
}

fn validate_run(cx: &mut Ctx, root: &Table) -> RunConfig {
    let mut run = RunConfig { cycles: 1000, samples: 10_000, seed: 0, burn_in: 0 };
    let Some(t) = cx.table(root, "", "run") else { return run };
    cx.reject_unknown(t, "run", &["cycles", "samples", "seed", "burn_in"]);
    if let Some(v) = cx.u64_key(t, "run", "cycles") {
        if v == 0 {
            cx.err("run.cycles", "must be at least 1");
        } else {
            run.cycles = v;
        }
    }
    if let Some(v) = cx.u64_key(t, "run", "samples") {
        if v < 2 {
            cx.err("run.samples", "must be at least 2");
        } else {
            run.samples = v;
        }
    }
    if let Some(v) = cx.u64_key(t, "run", "seed") {
        run.seed = v;
    }
    if let Some(v) = cx.u64_key(t, "run", "burn_in") {
        run.burn_in = v;
    }
    if run.burn_in >= run.cycles {
        cx.err("run.burn_in", format!("must be smaller than run.cycles = {}", run.cycles));
    }
    run
}

fn validate_scheme(cx: &mut Ctx, root: &Table) -> SchemeConfig {
    let mut scheme = SchemeConfig {
        h: 0.1,
        time_law: TimeLawKind::Exponential,
        order_policy: OrderPolicyKind::RandomPermutation,
    };
    let Some(t) = cx.table(root, "", "scheme") else { return scheme };
    cx.reject_unknown(t, "scheme", &["h", "time_law", "gamma_shape", "order_policy"]);
    if let Some(h) = cx.f64_key(t, "scheme", "h") {
        if h > 0.0 && h.is_finite() {
            scheme.h = h;
        } else {
            cx.err("scheme.h", format!("must be positive and finite, got {h}"));
        }
    }
    let law = cx.str_key(t, "scheme", "time_law").map(str::to_owned);
    let shape = cx.f64_key(t, "scheme", "gamma_shape");
    match law.as_deref() {
        None | Some("exponential") => {
            if shape.is_some() {
                cx.err("scheme.gamma_shape", "only meaningful with time_law = \"gamma\"");
            }
        }
        Some("gamma") => match shape {
            Some(s) if s > 0.0 && s.is_finite() => {
                scheme.time_law = TimeLawKind::Gamma { shape: s };
            }
            Some(s) => cx.err("scheme.gamma_shape", format!("must be positive, got {s}")),
            None => cx.err("scheme.gamma_shape", "required when time_law = \"gamma\""),
        },
        Some("uniform") => {
            scheme.time_law = TimeLawKind::Uniform;
            if shape.is_some() {
                cx.err("scheme.gamma_shape", "only meaningful with time_law = \"gamma\"");
            }
        }
        Some(other) => cx.err(
            "scheme.time_law",
            format!("unknown law {other:?} (one of: exponential, gamma, uniform)"),
        ),
    }
    match cx.str_key(t, "scheme", "order_policy") {
        None | Some("random-permutation") => {}
        Some("fixed") => scheme.order_policy = OrderPolicyKind::Fixed,
        Some(other) => cx.err(
            "scheme.order_policy",
            format!("unknown policy {other:?} (one of: random-permutation, fixed)"),
        ),
    }
    scheme
}

fn validate_model(cx: &mut Ctx, root: &Table) -> Option<ModelSpec> {
    let Some(t) = cx.table(root, "", "model") else {
        cx.err("model", "section is required");
        return None;
    };
    cx.reject_unknown(t, "model", &["type", "n", "n_max", "nu", "f", "dissipation", "x0"]);
    let kind = cx.str_key(t, "model", "type").map(str::to_owned);
    let nu = cx.f64_key(t, "model", "nu");
    let f = cx.f64_array_key(t, "model", "f");
    if nu.is_some() != f.is_some() {
        cx.err("model", "forcing needs both nu and f (or neither)");
    }
    if let Some(nu) = nu {
        if !(nu > 0.0 && nu.is_finite()) {
            cx.err("model.nu", format!("must be positive and finite, got {nu}"));
        }
    }

    match kind.as_deref() {
        Some("lorenz96") => {
            for fk in ["n_max", "dissipation"] {
                if t.contains_key(fk) {
                    cx.err(format!("model.{fk}"), "not a lorenz96 field");
                }
            }
            let n = match cx.u64_key(t, "model", "n") {
                Some(n) if n >= 4 => n as usize,
                Some(n) => {
                    cx.err("model.n", format!("cyclic dimension must be at least 4, got {n}"));
                    return None;
                }
                None => {
                    cx.err("model.n", "required for lorenz96");
                    return None;
                }
            };
            let spec = match (nu, &f) {
                (Some(nu), Some(f)) => {
                    if f.len() != n {
                        cx.err("model.f", format!("length {} does not match n = {n}", f.len()));
                        return None;
                    }
                    if f.iter().all(|&v| v == 0.0) {
                        cx.err("model.f", "forcing must not be identically zero");
                        return None;
                    }
                    LorenzSpec::forced(n, nu, f.clone())
                }
                _ => LorenzSpec::conservative(n),
            };
            finish_model(cx, ModelSpec::Lorenz96(spec))
        }
        Some("euler2d") => {
            if t.contains_key("n") {
                cx.err("model.n", "not a euler2d field (use n_max)");
            }
            let n_max = match cx.u64_key(t, "model", "n_max") {
                Some(n) if n >= 2 => n as u32,
                Some(n) => {
                    cx.err("model.n_max", format!("truncation must be at least 2, got {n}"));
                    return None;
                }
                None => {
                    cx.err("model.n_max", "required for euler2d");
                    return None;
                }
            };
            let dissipation = match cx.str_key(t, "model", "dissipation") {
                None => Dissipation::Laplacian,
                Some("laplacian") => Dissipation::Laplacian,
                Some("ekman") => Dissipation::Ekman,
                Some(other) => {
                    cx.err(
                        "model.dissipation",
                        format!("unknown shape {other:?} (one of: laplacian, ekman)"),
                    );
                    Dissipation::Laplacian
                }
            };
            if t.contains_key("dissipation") && nu.is_none() {
                cx.err("model.dissipation", "only meaningful on a forced model");
            }
            let dim = EulerSpec::conservative(n_max).dim();
            let spec = match (nu, &f) {
                (Some(nu), Some(f)) => {
                    if f.len() != dim {
                        cx.err(
                            "model.f",
                            format!("length {} does not match dimension {dim}", f.len()),
                        );
                        return None;
                    }
                    if f.iter().all(|&v| v == 0.0) {
                        cx.err("model.f", "forcing must not be identically zero");
                        return None;
                    }
                    let lat = Lattice::new(n_max);
                    if !is_nondegenerate(&lat, f) {
                        cx.err(
                            "model.f",
                            "forcing is degenerate: its interaction closure does not reach \
                             every coordinate",
                        );
                        return None;
                    }
                    EulerSpec::forced(n_max, nu, f.clone(), dissipation)
                }
                _ => EulerSpec::conservative(n_max),
            };
            finish_model(cx, ModelSpec::Euler2d(spec))
        }
        Some(other) => {
            cx.err("model.type", format!("unknown model {other:?} (one of: lorenz96, euler2d)"));
            None
        }
        None => {
            cx.err("model.type", "required");
            None
        }
    }
}

/// Backstop: run the library's own validation so no invalid spec can slip
/// past the field checks above.
fn finish_model(cx: &mut Ctx, model: ModelSpec) -> Option<ModelSpec> {
    match model.validate() {
        Ok(()) => Some(model),
        Err(e) => {
            cx.err("model", e.to_string());
            None
        }
    }
}

fn resolve_x0(cx: &mut Ctx, root: &Table, model: &ModelSpec, seed: u64) -> Option<Vec<f64>> {
    let table = match root.get("model") {
        Some(Value::Table(t)) => t,
        _ => return Some(default_x0(model, seed)),
    };
    match cx.f64_array_key(table, "model", "x0") {
        Some(x0) => {
            if x0.len() != model.dim() {
                cx.err(
                    "model.x0",
                    format!("length {} does not match dimension {}", x0.len(), model.dim()),
                );
                None
            } else {
                Some(x0)
            }
        }
        None if table.contains_key("x0") => None, // type error already recorded
        None => Some(default_x0(model, seed)),
    }
}

/// Deterministic generic initial state derived from the root seed: bounded
/// coordinates, and (for the spectral model) a nondegenerate configuration.
pub fn default_x0(model: &ModelSpec, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0xC0DE);
    loop {
        let x: Vec<f64> = (0..model.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        match model {
            ModelSpec::Lorenz96(_) => return x,
            ModelSpec::Euler2d(s) => {
                if is_nondegenerate(&Lattice::new(s.n_max), &x) {
                    return x;
                }
            }
        }
    }
}

/// Canonical TOML text: fixed key order, one scalar per line. Parsing the
/// output reproduces the config exactly.
pub fn to_toml_string(cfg: &ExperimentConfig) -> String {
    let mut root = Table::new();
    if let Some(kind) = cfg.kind {
        root.insert("kind".into(), Value::String(kind.name().into()));
    }

    let mut model = Table::new();
    match &cfg.model {
        ModelSpec::Lorenz96(s) => {
            model.insert("type".into(), Value::String("lorenz96".into()));
            model.insert("n".into(), Value::Integer(s.n as i64));
            if let Some(fc) = &s.forcing {
                model.insert("nu".into(), Value::Float(fc.nu));
                model.insert("f".into(), float_array(&fc.f));
            }
        }
        ModelSpec::Euler2d(s) => {
            model.insert("type".into(), Value::String("euler2d".into()));
            model.insert("n_max".into(), Value::Integer(s.n_max as i64));
            if let Some(fc) = &s.forcing {
                model.insert("nu".into(), Value::Float(fc.nu));
                model.insert("f".into(), float_array(&fc.f));
                let d = match fc.dissipation {
                    Dissipation::Laplacian => "laplacian",
                    Dissipation::Ekman => "ekman",
                };
                model.insert("dissipation".into(), Value::String(d.into()));
            }
        }
    }
    model.insert("x0".into(), float_array(&cfg.x0));
    root.insert("model".into(), Value::Table(model));

    let mut scheme = Table::new();
    scheme.insert("h".into(), Value::Float(cfg.scheme.h));
    scheme.insert("time_law".into(), Value::String(cfg.scheme.time_law.name().into()));
    if let TimeLawKind::Gamma { shape } = cfg.scheme.time_law {
        scheme.insert("gamma_shape".into(), Value::Float(shape));
    }
    scheme
        .insert("order_policy".into(), Value::String(cfg.scheme.order_policy.name().into()));
    root.insert("scheme".into(), Value::Table(scheme));

    let mut run = Table::new();
    run.insert("cycles".into(), Value::Integer(cfg.run.cycles as i64));
    run.insert("samples".into(), Value::Integer(cfg.run.samples as i64));
    run.insert("seed".into(), Value::Integer(cfg.run.seed as i64));
    run.insert("burn_in".into(), Value::Integer(cfg.run.burn_in as i64));
    root.insert("run".into(), Value::Table(run));

    toml::to_string(&Value::Table(root)).expect("static tree serializes")
}

fn float_array(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

/// The same tree as JSON (sorted keys come from the JSON map itself), for
/// embedding in manifests.
pub fn to_json(cfg: &ExperimentConfig) -> serde_json::Value {
    let toml_value: Value = to_toml_string(cfg).parse::<Table>().expect("own output").into();
    toml_to_json(&toml_value)
}

/// JSON view of an arbitrary (possibly invalid) config tree, so failed runs
/// can still record what they were given.
pub fn raw_table_to_json(table: &Table) -> serde_json::Value {
    toml_to_json(&Value::Table(table.clone()))
}

fn toml_to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::String(s) => serde_json::Value::String(s.clone()),
        Value::Integer(i) => serde_json::Value::from(*i),
        Value::Float(f) => serde_json::Value::from(*f),
        Value::Boolean(b) => serde_json::Value::Bool(*b),
        Value::Datetime(d) => serde_json::Value::String(d.to_string()),
        Value::Array(a) => serde_json::Value::Array(a.iter().map(toml_to_json).collect()),
        Value::Table(t) => serde_json::Value::Object(
            t.iter().map(|(k, val)| (k.clone(), toml_to_json(val))).collect(),
        ),
    }
}

/// Apply one `--set key=value` override to the raw tree. The value text is
/// parsed as a TOML literal when possible and falls back to a string.
pub fn apply_override(root: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let Some((path, raw)) = spec.split_once('=') else {
        return Err(ConfigError {
            path: String::new(),
            message: format!("override {spec:?} is not of the form key=value"),
        });
    };
    let path = path.trim();
    if path.is_empty() {
        return Err(ConfigError {
            path: String::new(),
            message: format!("override {spec:?} has an empty key"),
        });
    }
    let value = parse_literal(raw.trim());
    let segments: Vec<&str> = path.split('.').collect();
    let mut cursor = root;
    for seg in &segments[..segments.len() - 1] {
        let entry = cursor
            .entry(seg.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        match entry {
            Value::Table(t) => cursor = t,
            other => {
                return Err(ConfigError {
                    path: path.to_string(),
                    message: format!(
                        "cannot descend into {seg:?}: it holds a {}, not a table",
                        other.type_str()
                    ),
                });
            }
        }
    }
    cursor.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> Value {
    // Wrap in a throwaway key so any literal form (number, bool, array,
    // string) gets the full TOML grammar.
    if let Ok(table) = format!("v = {raw}").parse::<Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    Value::String(raw.to_string())
}
