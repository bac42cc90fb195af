//! Chain parameter files.
//!
//! ```json
//! {"defog": {"omega": w} | null, "wb": [r, g, b], "gamma": G, "contrast": a,
//!  "tone": [t0, ...], "sharpen": {"lambda": l, "sigma": s}}
//! ```
//!
//! Keys are written in chain order and numbers carry 17 significant digits.
//! Absent filters are simply omitted. Files produced by the fitter carry
//! extra bookkeeping keys which the reader skips.

use serde_json::{Map, Value};

use super::{ChainError, FilterChain, FilterKind, FilterParams, DEFAULT_SIGMA};

/// Keys the fitter appends to a chain object.
const METADATA_KEYS: [&str; 4] = ["trace", "converged", "iterations", "final_loss"];

/// Formats a finite number with 17 significant digits (lossless for `f64`).
pub fn format_number(v: f64) -> String {
    assert!(v.is_finite(), "cannot serialize non-finite number {v}");
    format!("{v:.16e}")
}

/// Builds a JSON object with keys in insertion order from pre-rendered values.
#[derive(Debug, Default)]
pub struct ObjectWriter {
    fields: Vec<(String, String)>,
}

impl ObjectWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a field whose value is already valid JSON.
    pub fn raw(mut self, key: &str, json: impl Into<String>) -> Self {
        self.fields.push((key.to_owned(), json.into()));
        self
    }

    pub fn number(self, key: &str, v: f64) -> Self {
        self.raw(key, format_number(v))
    }

    pub fn finish(self) -> String {
        let body: Vec<String> = self
            .fields
            .iter()
            .map(|(k, v)| format!("  {}: {}", Value::String(k.clone()), v))
            .collect();
        format!("{{\n{}\n}}\n", body.join(",\n"))
    }
}

fn number_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format_number(*x)).collect();
    format!("[{}]", items.join(", "))
}

impl FilterChain {
    /// Field/value pairs of the chain object, `defog` first.
    pub(crate) fn json_fields(&self, mut w: ObjectWriter) -> ObjectWriter {
        if !self.defog_enabled() {
            w = w.raw("defog", "null");
        }
        for stage in self.stages() {
            let key = stage.kind().key();
            w = match stage {
                FilterParams::Defog { omega } => {
                    w.raw(key, format!("{{\"omega\": {}}}", format_number(*omega)))
                }
                FilterParams::WhiteBalance { gains } => w.raw(key, number_list(gains)),
                FilterParams::Gamma { gamma } => w.number(key, *gamma),
                FilterParams::Contrast { alpha } => w.number(key, *alpha),
                FilterParams::Tone { knots } => w.raw(key, number_list(knots)),
                FilterParams::Sharpen { lambda, sigma } => w.raw(
                    key,
                    format!(
                        "{{\"lambda\": {}, \"sigma\": {}}}",
                        format_number(*lambda),
                        format_number(*sigma)
                    ),
                ),
            };
        }
        w
    }

    pub fn to_json(&self) -> String {
        self.json_fields(ObjectWriter::new()).finish()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ChainError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ChainError::Json(e.to_string()))?;
        Self::from_json_value(&value)
    }

    pub fn from_json_value(value: &Value) -> Result<Self, ChainError> {
        let obj = value.as_object().ok_or_else(|| ChainError::Malformed {
            field: "$".into(),
            message: "expected a JSON object".into(),
        })?;
        let mut stages = Vec::new();
        for (position, (key, v)) in obj.iter().enumerate() {
            if METADATA_KEYS.contains(&key.as_str()) {
                continue;
            }
            let kind = FilterKind::from_key(key).ok_or_else(|| ChainError::UnknownField(key.clone()))?;
            if kind == FilterKind::Defog && position != 0 {
                return Err(ChainError::DefogNotFirst { position });
            }
            if let Some(stage) = parse_stage(kind, v)? {
                stages.push(stage);
            }
        }
        FilterChain::new(stages)
    }
}

fn malformed(field: &str, message: &str) -> ChainError {
    ChainError::Malformed {
        field: field.to_owned(),
        message: message.to_owned(),
    }
}

fn number(field: &str, v: &Value) -> Result<f64, ChainError> {
    v.as_f64().ok_or_else(|| malformed(field, "expected a number"))
}

fn numbers(field: &str, v: &Value) -> Result<Vec<f64>, ChainError> {
    v.as_array()
        .ok_or_else(|| malformed(field, "expected an array of numbers"))?
        .iter()
        .enumerate()
        .map(|(i, x)| number(&format!("{field}[{i}]"), x))
        .collect()
}

fn member<'v>(obj: &'v Map<String, Value>, field: &str, name: &str) -> Result<&'v Value, ChainError> {
    obj.get(name)
        .ok_or_else(|| malformed(&format!("{field}.{name}"), "missing"))
}

fn parse_stage(kind: FilterKind, v: &Value) -> Result<Option<FilterParams>, ChainError> {
    let key = kind.key();
    let stage = match kind {
        FilterKind::Defog => {
            if v.is_null() {
                return Ok(None);
            }
            let obj = v.as_object().ok_or_else(|| malformed(key, "expected {\"omega\": w} or null"))?;
            FilterParams::Defog {
                omega: number("defog.omega", member(obj, key, "omega")?)?,
            }
        }
        FilterKind::WhiteBalance => {
            let g = numbers(key, v)?;
            if g.len() != 3 {
                return Err(malformed(key, "expected exactly three gains"));
            }
            FilterParams::WhiteBalance {
                gains: [g[0], g[1], g[2]],
            }
        }
        FilterKind::Gamma => FilterParams::Gamma { gamma: number(key, v)? },
        FilterKind::Contrast => FilterParams::Contrast { alpha: number(key, v)? },
        FilterKind::Tone => FilterParams::Tone { knots: numbers(key, v)? },
        FilterKind::Sharpen => {
            let obj = v.as_object().ok_or_else(|| malformed(key, "expected {\"lambda\": l, \"sigma\": s}"))?;
            let sigma = match obj.get("sigma") {
                Some(s) => number("sharpen.sigma", s)?,
                None => DEFAULT_SIGMA,
            };
            FilterParams::Sharpen {
                lambda: number("sharpen.lambda", member(obj, key, "lambda")?)?,
                sigma,
            }
        }
    };
    Ok(Some(stage))
}
