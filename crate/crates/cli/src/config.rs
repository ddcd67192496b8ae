//! Plain-text run configuration: one `dotted.key = value` per line, `#`
//! comments, unknown keys rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use edflow_core::flow::{DtPolicy, FlowScheme, DEFAULT_CFL};
use edflow_core::torus::trig::TrigPolynomial;
use edflow_core::torus::SpinStructure;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        Self::Validation {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Constant(f64),
    Trig(TrigPolynomial),
    /// Band-limited positive polynomial drawn from the run seed.
    Random { count: usize },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub length: f64,
    pub spin: SpinStructure,
    pub initial: InitialData,
    pub target: f64,
    pub gap_tol: f64,
    pub eigen_count: usize,
    pub dt: DtPolicy,
    pub horizon: f64,
    pub scheme: FlowScheme,
    pub projection_period: usize,
    pub output_dir: PathBuf,
    /// Steps between snapshots; 0 disables them.
    pub stride: usize,
    pub seed: u64,
}

pub const KEYS: [&str; 15] = [
    "eigen.count",
    "eigen.gap_tol",
    "eigen.target",
    "flow.dt",
    "flow.horizon",
    "flow.projection_period",
    "flow.scheme",
    "grid.length",
    "grid.n",
    "initial.kind",
    "initial.terms",
    "output.dir",
    "output.stride",
    "seed",
    "spin.shift",
];

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 8,
            length: std::f64::consts::TAU,
            spin: SpinStructure::default(),
            initial: InitialData::Constant(1.0),
            target: 0.9,
            gap_tol: 1e-3,
            eigen_count: 6,
            dt: DtPolicy::Cfl(DEFAULT_CFL),
            horizon: 0.1,
            scheme: FlowScheme::Rk4,
            projection_period: 5,
            output_dir: PathBuf::from("out"),
            stride: 10,
            seed: 0,
        }
    }
}

/// Split into `(key, value, value column)` triples, rejecting duplicates.
fn tokenize(text: &str) -> Result<BTreeMap<String, (String, usize, usize)>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            let column = content.len() - content.trim_start().len() + 1;
            return Err(ConfigError::Parse {
                line,
                column,
                message: "expected `key = value`".into(),
            });
        };
        let key = content[..eq].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_') {
            return Err(ConfigError::Parse {
                line,
                column: content.len() - content.trim_start().len() + 1,
                message: format!("malformed key `{key}`"),
            });
        }
        let rest = &content[eq + 1..];
        let column = eq + 2 + (rest.len() - rest.trim_start().len());
        let value = rest.trim();
        if value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                column,
                message: "missing value".into(),
            });
        }
        if out.insert(key.to_string(), (value.to_string(), line, column)).is_some() {
            return Err(ConfigError::Parse {
                line,
                column: 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(out)
}

fn number(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(ConfigError::invalid(key, "must be finite"));
    }
    Ok(x)
}

fn positive(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = number(key, v)?;
    if x <= 0.0 {
        return Err(ConfigError::invalid(key, "must be positive"));
    }
    Ok(x)
}

fn integer(key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::invalid(key, format!("`{v}` is not a non-negative integer")))
}

/// `(a, b, c)` or `a, b, c`.
fn triple(key: &str, v: &str) -> Result<[f64; 3], ConfigError> {
    let inner = v.trim().trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(ConfigError::invalid(key, "expected three components"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = match p {
            "1/2" | "½" => 0.5,
            _ => number(key, p)?,
        };
    }
    Ok(out)
}

/// `c0; a1@(k,l,m); a2@(k,l,m)`.
fn trig_terms(key: &str, v: &str) -> Result<TrigPolynomial, ConfigError> {
    let mut parts = v.split(';').map(str::trim);
    let c0 = number(key, parts.next().unwrap_or(""))?;
    let mut poly = TrigPolynomial::constant(c0);
    for p in parts {
        let (a, mode) = p
            .split_once('@')
            .ok_or_else(|| ConfigError::invalid(key, format!("term `{p}` must read amplitude@(k,l,m)")))?;
        let amp = number(key, a.trim())?;
        let k = triple(key, mode)?;
        if k.iter().any(|x| x.fract() != 0.0) {
            return Err(ConfigError::invalid(key, "mode components must be integers"));
        }
        poly = poly.with_term(amp, [k[0] as i64, k[1] as i64, k[2] as i64]);
    }
    Ok(poly)
}

pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let tokens = tokenize(text)?;
    for key in tokens.keys() {
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::invalid(key, "unknown key"));
        }
    }
    let get = |k: &str| tokens.get(k).map(|t| t.0.as_str());
    let mut c = RunConfig::default();
    if let Some(v) = get("grid.n") {
        let n = integer("grid.n", v)? as usize;
        if n < 4 || n % 2 != 0 {
            return Err(ConfigError::invalid("grid.n", "must be even and at least 4"));
        }
        c.n = n;
    }
    if let Some(v) = get("grid.length") {
        c.length = positive("grid.length", v)?;
    }
    if let Some(v) = get("spin.shift") {
        let s = triple("spin.shift", v)?;
        c.spin = SpinStructure::new(s).map_err(|_| ConfigError::invalid("spin.shift", "components must be 0 or 1/2"))?;
    }
    let kind = get("initial.kind").unwrap_or("constant");
    let terms = get("initial.terms");
    c.initial = match (kind, terms) {
        ("constant", None) => InitialData::Constant(1.0),
        ("constant", Some(t)) => InitialData::Constant(positive("initial.terms", t)?),
        ("trig", Some(t)) if t.starts_with("random") => {
            let count = t
                .trim_start_matches("random")
                .trim()
                .trim_start_matches('(')
                .trim_end_matches(')')
                .trim();
            let count = if count.is_empty() { 4 } else { integer("initial.terms", count)? as usize };
            if count == 0 {
                return Err(ConfigError::invalid("initial.terms", "random needs at least one term"));
            }
            InitialData::Random { count }
        }
        ("trig", Some(t)) => {
            let poly = trig_terms("initial.terms", t)?;
            if poly.lower_bound() <= 0.0 {
                return Err(ConfigError::invalid("initial.terms", "polynomial is not bounded away from zero"));
            }
            InitialData::Trig(poly)
        }
        ("file", Some(t)) => InitialData::File(PathBuf::from(t)),
        ("trig" | "file", None) => return Err(ConfigError::invalid("initial.terms", "required for this kind")),
        (k, _) => {
            return Err(ConfigError::invalid(
                "initial.kind",
                format!("`{k}` is not one of constant, trig, file"),
            ))
        }
    };
    if let Some(v) = get("eigen.target") {
        c.target = number("eigen.target", v)?;
    }
    if let Some(v) = get("eigen.gap_tol") {
        c.gap_tol = positive("eigen.gap_tol", v)?;
    }
    if let Some(v) = get("eigen.count") {
        c.eigen_count = integer("eigen.count", v)? as usize;
        if c.eigen_count < 2 {
            return Err(ConfigError::invalid("eigen.count", "must be at least 2"));
        }
    }
    if let Some(v) = get("flow.dt") {
        c.dt = match v.strip_prefix("cfl") {
            Some("") => DtPolicy::Cfl(DEFAULT_CFL),
            Some(rest) => DtPolicy::Cfl(positive("flow.dt", rest.trim_start_matches(':').trim())?),
            None => DtPolicy::Fixed(positive("flow.dt", v)?),
        };
    }
    if let Some(v) = get("flow.horizon") {
        c.horizon = number("flow.horizon", v)?;
        if c.horizon < 0.0 {
            return Err(ConfigError::invalid("flow.horizon", "must be non-negative"));
        }
    }
    if let Some(v) = get("flow.scheme") {
        c.scheme = match v {
            "rk4" => FlowScheme::Rk4,
            "imex" => FlowScheme::Imex,
            _ => return Err(ConfigError::invalid("flow.scheme", "must be rk4 or imex")),
        };
    }
    if let Some(v) = get("flow.projection_period") {
        c.projection_period = integer("flow.projection_period", v)? as usize;
        if c.projection_period == 0 {
            return Err(ConfigError::invalid("flow.projection_period", "must be at least 1"));
        }
    }
    if let Some(v) = get("output.dir") {
        c.output_dir = PathBuf::from(v);
    }
    if let Some(v) = get("output.stride") {
        c.stride = integer("output.stride", v)? as usize;
    }
    if let Some(v) = get("seed") {
        c.seed = integer("seed", v)?;
    }
    Ok(c)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_str(&text)
}

fn fmt_triple(v: [f64; 3]) -> String {
    format!("({}, {}, {})", v[0], v[1], v[2])
}

impl RunConfig {
    /// Every key in sorted order with its effective value; parsing the result
    /// reproduces `self`.
    pub fn normalized(&self) -> String {
        let (kind, terms) = match &self.initial {
            InitialData::Constant(c) => ("constant", format!("{c:?}")),
            InitialData::Trig(p) => {
                let mut s = format!("{:?}", p.constant);
                for t in &p.terms {
                    let k = t.mode;
                    write!(s, "; {:?}@({}, {}, {})", t.amplitude, k[0], k[1], k[2]).unwrap();
                }
                ("trig", s)
            }
            InitialData::Random { count } => ("trig", format!("random({count})")),
            InitialData::File(p) => ("file", p.display().to_string()),
        };
        let dt = match self.dt {
            DtPolicy::Cfl(c) => format!("cfl:{c:?}"),
            DtPolicy::Fixed(d) => format!("{d:?}"),
        };
        let scheme = match self.scheme {
            FlowScheme::Rk4 => "rk4",
            FlowScheme::Imex => "imex",
        };
        let values = [
            self.eigen_count.to_string(),
            format!("{:?}", self.gap_tol),
            format!("{:?}", self.target),
            dt,
            format!("{:?}", self.horizon),
            self.projection_period.to_string(),
            scheme.to_string(),
            format!("{:?}", self.length),
            self.n.to_string(),
            kind.to_string(),
            terms,
            self.output_dir.display().to_string(),
            self.stride.to_string(),
            self.seed.to_string(),
            fmt_triple(self.spin.shift()),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(parse_str("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn normalized_form_is_a_fixed_point() {
        let text = "grid.n = 6\ninitial.kind = trig\ninitial.terms = 1; 0.3@(1,0,0); 0.2@(0,1,1)\nflow.dt = 1e-3\n";
        let c = parse_str(text).unwrap();
        let once = c.normalized();
        assert_eq!(parse_str(&once).unwrap(), c);
        assert_eq!(parse_str(&once).unwrap().normalized(), once);
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = parse_str("grid.n = 6\n  oops\n").unwrap_err();
        assert_eq!(
            e,
            ConfigError::Parse {
                line: 2,
                column: 3,
                message: "expected `key = value`".into()
            }
        );
        let e = parse_str("seed =   \n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 1, .. }));
    }

    #[test]
    fn validation_names_the_key() {
        let key = |t: &str| match parse_str(t).unwrap_err() {
            ConfigError::Validation { key, .. } => key,
            e => panic!("{e:?}"),
        };
        assert_eq!(key("flw.dt = 0.1"), "flw.dt");
        assert_eq!(key("spin.shift = (0.3, 0, 0)"), "spin.shift");
        assert_eq!(key("flow.scheme = euler"), "flow.scheme");
        assert_eq!(key("initial.kind = trig"), "initial.terms");
        assert_eq!(key("initial.kind = trig\ninitial.terms = 0.5; 0.6@(1,0,0)"), "initial.terms");
        assert_eq!(key("grid.n = 7"), "grid.n");
    }

    #[test]
    fn spin_shift_accepts_halves() {
        let c = parse_str("spin.shift = (1/2, 0, 0.5)").unwrap();
        assert_eq!(c.spin.shift(), [0.5, 0.0, 0.5]);
    }
}
