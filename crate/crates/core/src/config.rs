//! Flat `key = value` run configuration.
//!
//! Keys are grouped as `sim.*`, `data.*`, `gmm.*` and `stream.*`. Blank lines
//! and lines starting with `#` are ignored. Unknown and repeated keys are
//! errors. [`RunConfig::to_pairs`] lists every key with its effective value,
//! and parsing that listing reproduces the configuration exactly.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::SimConfig;
use crate::stream::StreamConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    /// The simulator settings; `sim.gmm` also drives `cluster-stream`.
    pub sim: SimConfig,
    pub stream: StreamConfig,
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(format!("expected true/false, got '{v}'")),
    }
}

fn parsed<T: FromStr<Err = Error>>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|e: Error| e.to_string())
}

impl RunConfig {
    /// Every key in a fixed order, with values in round-trip form.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let s = &self.sim;
        let d = &s.data;
        let g = &s.gmm;
        let t = &self.stream;
        let f = |v: f64| format!("{v:?}");
        vec![
            ("sim.regime", s.regime.as_str().to_string()),
            ("sim.k", s.k.to_string()),
            ("sim.d", s.d.to_string()),
            ("sim.hidden", s.hidden.to_string()),
            ("sim.tau_s", f(s.tau_s)),
            ("sim.tau_t", f(s.tau_t)),
            ("sim.momentum", f(s.momentum)),
            ("sim.lr", f(s.lr)),
            ("sim.weight_decay_start", f(s.weight_decay.0)),
            ("sim.weight_decay_end", f(s.weight_decay.1)),
            (
                "sim.prototype_weight_decay_start",
                f(s.prototype_weight_decay.0),
            ),
            (
                "sim.prototype_weight_decay_end",
                f(s.prototype_weight_decay.1),
            ),
            ("sim.grad_clip", f(s.grad_clip)),
            (
                "sim.center_momentum",
                s.center_momentum.map_or_else(|| "none".to_string(), f),
            ),
            ("sim.epochs", s.epochs.to_string()),
            ("sim.views", s.views.to_string()),
            ("sim.batch", s.batch.to_string()),
            ("sim.view_noise", f(s.view_noise)),
            ("sim.view_dropout", f(s.view_dropout)),
            ("sim.init_gain_hidden", f(s.init_gain.0)),
            ("sim.init_gain_output", f(s.init_gain.1)),
            ("data.mode", d.mode.as_str().to_string()),
            ("data.n_classes", d.n_classes.to_string()),
            ("data.input_dim", d.input_dim.to_string()),
            ("data.per_class", d.per_class.to_string()),
            ("data.longtail_exponent", f(d.longtail_exponent)),
            ("data.longtail_total", d.longtail_total.to_string()),
            ("data.radius", f(d.radius)),
            ("data.spread", f(d.spread)),
            ("data.test_per_class", d.test_per_class.to_string()),
            ("data.head_above", d.head_above.to_string()),
            ("data.tail_at_most", d.tail_at_most.to_string()),
            ("gmm.beta", f(g.beta)),
            ("gmm.beta_start", f(g.beta_start)),
            ("gmm.eta.start", f(g.eta.start)),
            ("gmm.eta.end", f(g.eta.end)),
            ("gmm.variance_floor", f(g.variance_floor)),
            ("gmm.init_variance", f(g.init_variance)),
            ("gmm.resurrect_threshold", f(g.resurrect_threshold)),
            (
                "gmm.responsibility_forgetting",
                g.toggles.responsibility_forgetting.to_string(),
            ),
            ("gmm.annealing", g.toggles.annealing.to_string()),
            ("gmm.resurrect", g.toggles.resurrect.to_string()),
            ("gmm.rescaling", g.toggles.rescaling.to_string()),
            ("stream.k", t.k.to_string()),
            ("stream.batch", t.batch.to_string()),
            ("stream.passes", t.passes.to_string()),
            ("stream.shuffle", t.shuffle.to_string()),
            ("stream.init", t.init.as_str().to_string()),
        ]
    }

    /// Sets one key. `Ok(false)` means the key is unknown.
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<bool, String> {
        let s = &mut self.sim;
        match key {
            "sim.regime" => s.regime = parsed(v)?,
            "sim.k" => s.k = num(v)?,
            "sim.d" => s.d = num(v)?,
            "sim.hidden" => s.hidden = num(v)?,
            "sim.tau_s" => s.tau_s = num(v)?,
            "sim.tau_t" => s.tau_t = num(v)?,
            "sim.momentum" => s.momentum = num(v)?,
            "sim.lr" => s.lr = num(v)?,
            "sim.weight_decay_start" => s.weight_decay.0 = num(v)?,
            "sim.weight_decay_end" => s.weight_decay.1 = num(v)?,
            "sim.prototype_weight_decay_start" => s.prototype_weight_decay.0 = num(v)?,
            "sim.prototype_weight_decay_end" => s.prototype_weight_decay.1 = num(v)?,
            "sim.grad_clip" => s.grad_clip = num(v)?,
            "sim.center_momentum" => {
                s.center_momentum = if v == "none" { None } else { Some(num(v)?) }
            }
            "sim.epochs" => s.epochs = num(v)?,
            "sim.views" => s.views = num(v)?,
            "sim.batch" => s.batch = num(v)?,
            "sim.view_noise" => s.view_noise = num(v)?,
            "sim.view_dropout" => s.view_dropout = num(v)?,
            "sim.init_gain_hidden" => s.init_gain.0 = num(v)?,
            "sim.init_gain_output" => s.init_gain.1 = num(v)?,
            "data.mode" => s.data.mode = parsed(v)?,
            "data.n_classes" => s.data.n_classes = num(v)?,
            "data.input_dim" => s.data.input_dim = num(v)?,
            "data.per_class" => s.data.per_class = num(v)?,
            "data.longtail_exponent" => s.data.longtail_exponent = num(v)?,
            "data.longtail_total" => s.data.longtail_total = num(v)?,
            "data.radius" => s.data.radius = num(v)?,
            "data.spread" => s.data.spread = num(v)?,
            "data.test_per_class" => s.data.test_per_class = num(v)?,
            "data.head_above" => s.data.head_above = num(v)?,
            "data.tail_at_most" => s.data.tail_at_most = num(v)?,
            "gmm.beta" => s.gmm.beta = num(v)?,
            "gmm.beta_start" => s.gmm.beta_start = num(v)?,
            "gmm.eta.start" => s.gmm.eta.start = num(v)?,
            "gmm.eta.end" => s.gmm.eta.end = num(v)?,
            "gmm.variance_floor" => s.gmm.variance_floor = num(v)?,
            "gmm.init_variance" => s.gmm.init_variance = num(v)?,
            "gmm.resurrect_threshold" => s.gmm.resurrect_threshold = num(v)?,
            "gmm.responsibility_forgetting" => s.gmm.toggles.responsibility_forgetting = flag(v)?,
            "gmm.annealing" => s.gmm.toggles.annealing = flag(v)?,
            "gmm.resurrect" => s.gmm.toggles.resurrect = flag(v)?,
            "gmm.rescaling" => s.gmm.toggles.rescaling = flag(v)?,
            "stream.k" => self.stream.k = num(v)?,
            "stream.batch" => self.stream.batch = num(v)?,
            "stream.passes" => self.stream.passes = num(v)?,
            "stream.shuffle" => self.stream.shuffle = flag(v)?,
            "stream.init" => self.stream.init = parsed(v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses `text` on top of the defaults. Errors carry the byte offset of
    /// the offending line and name the key.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut offset = 0u64;
        for (lineno, raw) in text.split_inclusive('\n').enumerate() {
            let here = offset;
            offset += raw.len() as u64;
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                offset: here,
                message: format!("line {}: {message}", lineno + 1),
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("expected key = value, got '{line}'")));
            };
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(err(format!("duplicate key '{key}'")));
            }
            match cfg.set(key, value) {
                Ok(true) => seen.push(key.to_string()),
                Ok(false) => return Err(err(format!("unknown key '{key}'"))),
                Err(m) => return Err(err(format!("key '{key}': {m}"))),
            }
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.stream.validate()
    }
}
