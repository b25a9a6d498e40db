//! Sectioned `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! [model]
//! potential = sin2            # sin2 | cos-lattice | const
//! potential_amplitude = 1
//! perturbation = w-cos        # none | w-cos | w-tanh
//! perturbation_amplitude = 1
//! perturbation_width = 1      # w-tanh only
//! cell_size = 1
//! num_cells = 16
//! points_per_cell = 256
//!
//! [params]
//! hbar = 0.1
//! hbar_list = 0.14, 0.12, 0.1, 0.08, 0.06
//! regime = model1             # model1 | model2 | custom
//! f = 0                       # custom only
//! eta = 0                     # custom only
//! k_f = 1
//! k_eta = 1
//! k_t = 1
//! gamma = 0.5
//!
//! [integrator]
//! dt_scale = 0.01
//! final_time = 1
//! sample_stride = 250
//! max_steps = 2000000
//! initial = gaussian          # gaussian | random
//! initial_sites = 5
//! initial_sigma = 1
//!
//! [output]
//! dir = out
//! seed = 0
//! ```
//!
//! Every key is optional and falls back to the value shown. Values may be
//! overridden with `section.key=value` strings, which are applied after the
//! file and reported as line 0.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::harness::SweepConfig;
use crate::model::{LatticeModel, Perturbation, Potential, SemiclassicalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeKind {
    Model1,
    Model2,
    Custom,
}

impl RegimeKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeKind::Model1 => "model1",
            RegimeKind::Model2 => "model2",
            RegimeKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Gaussian,
    Random,
}

impl InitialKind {
    pub fn name(&self) -> &'static str {
        match self {
            InitialKind::Gaussian => "gaussian",
            InitialKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub potential: Potential,
    pub perturbation: Perturbation,
    pub cell_size: f64,
    pub num_cells: usize,
    pub points_per_cell: usize,
    pub hbar: f64,
    pub hbar_list: Vec<f64>,
    pub regime: RegimeKind,
    pub f: f64,
    pub eta: f64,
    pub k_f: f64,
    pub k_eta: f64,
    pub k_t: f64,
    pub gamma: f64,
    pub dt_scale: f64,
    pub final_time: f64,
    pub sample_stride: usize,
    pub max_steps: usize,
    pub initial: InitialKind,
    pub initial_sites: usize,
    pub initial_sigma: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            potential: Potential::Sin2 { amplitude: 1.0 },
            perturbation: Perturbation::Cos { amplitude: 1.0 },
            cell_size: 1.0,
            num_cells: 16,
            points_per_cell: 256,
            hbar: 0.1,
            hbar_list: vec![0.14, 0.12, 0.1, 0.08, 0.06],
            regime: RegimeKind::Model1,
            f: 0.0,
            eta: 0.0,
            k_f: 1.0,
            k_eta: 1.0,
            k_t: 1.0,
            gamma: 0.5,
            dt_scale: 0.01,
            final_time: 1.0,
            sample_stride: 250,
            max_steps: 2_000_000,
            initial: InitialKind::Gaussian,
            initial_sites: 5,
            initial_sigma: 1.0,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// One problem found while parsing; `line` is 0 for defaults and overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

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

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::Config(e.to_string())
    }
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "model",
        &[
            "potential",
            "potential_amplitude",
            "perturbation",
            "perturbation_amplitude",
            "perturbation_width",
            "cell_size",
            "num_cells",
            "points_per_cell",
        ],
    ),
    ("params", &["hbar", "hbar_list", "regime", "f", "eta", "k_f", "k_eta", "k_t", "gamma"]),
    (
        "integrator",
        &["dt_scale", "final_time", "sample_stride", "max_steps", "initial", "initial_sites", "initial_sigma"],
    ),
    ("output", &["dir", "seed"]),
];

fn known(section: &str, key: &str) -> bool {
    KEYS.iter().any(|(s, ks)| *s == section && ks.contains(&key))
}

struct Entry {
    line: usize,
    value: String,
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn issue(&mut self, key: &str, message: String) {
        let line = self.line_of(key);
        self.issues.push(ConfigIssue { line, message });
    }

    fn string(&self, key: &str) -> Option<String> {
        self.entries.get(key).map(|e| e.value.clone())
    }

    fn float(&mut self, key: &str, default: f64) -> f64 {
        match self.entries.get(key).map(|e| e.value.clone()) {
            None => default,
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => {
                    self.issue(key, format!("{key}: expected a finite number, got '{v}'"));
                    default
                }
            },
        }
    }

    fn uint(&mut self, key: &str, default: u64) -> u64 {
        match self.entries.get(key).map(|e| e.value.clone()) {
            None => default,
            Some(v) => v.parse::<u64>().unwrap_or_else(|_| {
                self.issue(key, format!("{key}: expected a non-negative integer, got '{v}'"));
                default
            }),
        }
    }

    fn floats(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        match self.entries.get(key).map(|e| e.value.clone()) {
            None => default.to_vec(),
            Some(v) => {
                let parsed: std::result::Result<Vec<f64>, _> =
                    v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(str::parse::<f64>).collect();
                match parsed {
                    Ok(xs) if xs.iter().all(|x| x.is_finite()) => xs,
                    _ => {
                        self.issue(key, format!("{key}: expected a comma-separated list of numbers, got '{v}'"));
                        default.to_vec()
                    }
                }
            }
        }
    }
}

fn read_lines(text: &str, reader: &mut Reader) {
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) => {
                    let name = name.trim();
                    if KEYS.iter().any(|(s, _)| *s == name) {
                        section = Some(name.to_string());
                    } else {
                        reader.issues.push(ConfigIssue { line, message: format!("unknown section [{name}]") });
                        section = None;
                    }
                }
                None => reader.issues.push(ConfigIssue { line, message: format!("malformed section header '{content}'") }),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            reader.issues.push(ConfigIssue { line, message: format!("expected 'key = value', got '{content}'") });
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let Some(sec) = &section else {
            reader.issues.push(ConfigIssue { line, message: format!("key '{key}' outside a known section") });
            continue;
        };
        insert(reader, sec, key, value, line);
    }
}

fn insert(reader: &mut Reader, section: &str, key: &str, value: &str, line: usize) {
    if !known(section, key) {
        reader.issues.push(ConfigIssue { line, message: format!("unknown key '{key}' in [{section}]") });
        return;
    }
    let full = format!("{section}.{key}");
    if let Some(prev) = reader.entries.get(&full) {
        if line > 0 {
            reader.issues.push(ConfigIssue {
                line,
                message: format!("duplicate key '{full}' (lines {} and {line})", prev.line),
            });
            return;
        }
    }
    reader.entries.insert(full, Entry { line, value: value.to_string() });
}

/// Parses and validates a configuration; all problems are reported together.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, ConfigErrors> {
    parse_config_with_overrides(text, &[] as &[&str])
}

/// As [`parse_config`], then applies `section.key=value` overrides.
pub fn parse_config_with_overrides<S: AsRef<str>>(
    text: &str,
    overrides: &[S],
) -> std::result::Result<ExperimentConfig, ConfigErrors> {
    let mut r = Reader { entries: BTreeMap::new(), issues: Vec::new() };
    read_lines(text, &mut r);
    for o in overrides {
        let o = o.as_ref();
        match o.split_once('=').and_then(|(k, v)| k.trim().split_once('.').map(|(s, k)| (s.to_string(), k.to_string(), v.trim().to_string()))) {
            Some((s, k, v)) => insert(&mut r, &s, &k, &v, 0),
            None => r.issues.push(ConfigIssue { line: 0, message: format!("malformed override '{o}', expected section.key=value") }),
        }
    }
    let d = ExperimentConfig::default();

    let amplitude = r.float("model.potential_amplitude", 1.0);
    let potential = match r.string("model.potential").as_deref() {
        None | Some("sin2") => Potential::Sin2 { amplitude },
        Some("cos-lattice") => Potential::CosLattice { amplitude },
        Some("const") => Potential::Constant { value: amplitude },
        Some(other) => {
            r.issue("model.potential", format!("unknown potential '{other}'"));
            d.potential
        }
    };
    let w_amp = r.float("model.perturbation_amplitude", 1.0);
    let width = r.float("model.perturbation_width", 1.0);
    let perturbation = match r.string("model.perturbation").as_deref() {
        None | Some("w-cos") => Perturbation::Cos { amplitude: w_amp },
        Some("none") => Perturbation::Zero,
        Some("w-tanh") => Perturbation::Tanh { amplitude: w_amp, width },
        Some(other) => {
            r.issue("model.perturbation", format!("unknown perturbation '{other}'"));
            d.perturbation
        }
    };
    if matches!(perturbation, Perturbation::Tanh { .. }) && !(width > 0.0) {
        r.issue("model.perturbation_width", "perturbation_width must be positive".into());
    }
    let cell_size = r.float("model.cell_size", d.cell_size);
    if !(cell_size > 0.0) {
        r.issue("model.cell_size", "cell_size must be positive".into());
    }
    let num_cells = r.uint("model.num_cells", d.num_cells as u64) as usize;
    if num_cells % 2 != 0 {
        r.issue("model.num_cells", format!("N must be even, got {num_cells}"));
    } else if num_cells < 4 {
        r.issue("model.num_cells", format!("N must be at least 4, got {num_cells}"));
    }
    let points_per_cell = r.uint("model.points_per_cell", d.points_per_cell as u64) as usize;
    if points_per_cell % 2 != 0 || points_per_cell < 4 {
        r.issue("model.points_per_cell", format!("points_per_cell must be even and at least 4, got {points_per_cell}"));
    }

    let hbar = r.float("params.hbar", d.hbar);
    if !(hbar > 0.0 && hbar <= 1.0) {
        r.issue("params.hbar", format!("hbar must lie in (0, 1], got {hbar}"));
    }
    let hbar_list = r.floats("params.hbar_list", &d.hbar_list);
    if hbar_list.is_empty() {
        r.issue("params.hbar_list", "hbar_list must not be empty".into());
    }
    if hbar_list.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
        r.issue("params.hbar_list", "every hbar in hbar_list must lie in (0, 1]".into());
    }
    if hbar_list.windows(2).any(|w| !(w[1] < w[0])) {
        r.issue("params.hbar_list", "hbar_list must be strictly decreasing".into());
    }
    let regime = match r.string("params.regime").as_deref() {
        None | Some("model1") => RegimeKind::Model1,
        Some("model2") => RegimeKind::Model2,
        Some("custom") => RegimeKind::Custom,
        Some(other) => {
            r.issue("params.regime", format!("unknown regime '{other}'"));
            d.regime
        }
    };
    let f = r.float("params.f", d.f);
    if f < 0.0 {
        r.issue("params.f", "F must be >= 0".into());
    }
    let eta = r.float("params.eta", d.eta);
    let k_f = r.float("params.k_f", d.k_f);
    if k_f < 0.0 {
        r.issue("params.k_f", "k_f must be >= 0".into());
    }
    let k_eta = r.float("params.k_eta", d.k_eta);
    let k_t = r.float("params.k_t", d.k_t);
    if !(k_t > 0.0) {
        r.issue("params.k_t", "k_t must be positive".into());
    }
    let gamma = r.float("params.gamma", d.gamma);
    if gamma < 0.0 {
        r.issue("params.gamma", "gamma must be >= 0".into());
    }

    let dt_scale = r.float("integrator.dt_scale", d.dt_scale);
    if !(dt_scale > 0.0) {
        r.issue("integrator.dt_scale", "dt_scale must be positive".into());
    }
    let final_time = r.float("integrator.final_time", d.final_time);
    if !(final_time > 0.0) {
        r.issue("integrator.final_time", "final_time must be positive".into());
    }
    let sample_stride = r.uint("integrator.sample_stride", d.sample_stride as u64) as usize;
    if sample_stride == 0 {
        r.issue("integrator.sample_stride", "sample_stride must be at least 1".into());
    }
    let max_steps = r.uint("integrator.max_steps", d.max_steps as u64) as usize;
    if max_steps == 0 {
        r.issue("integrator.max_steps", "max_steps must be at least 1".into());
    }
    let initial = match r.string("integrator.initial").as_deref() {
        None | Some("gaussian") => InitialKind::Gaussian,
        Some("random") => InitialKind::Random,
        Some(other) => {
            r.issue("integrator.initial", format!("unknown initial state '{other}'"));
            d.initial
        }
    };
    let initial_sites = r.uint("integrator.initial_sites", d.initial_sites as u64) as usize;
    if initial_sites == 0 || initial_sites > num_cells.max(1) {
        r.issue("integrator.initial_sites", format!("initial_sites must lie in 1..={num_cells}"));
    }
    let initial_sigma = r.float("integrator.initial_sigma", d.initial_sigma);
    if !(initial_sigma > 0.0) {
        r.issue("integrator.initial_sigma", "initial_sigma must be positive".into());
    }
    let output_dir = PathBuf::from(r.string("output.dir").unwrap_or_else(|| "out".into()));
    let seed = r.uint("output.seed", d.seed);

    if r.issues.is_empty() {
        Ok(ExperimentConfig {
            potential,
            perturbation,
            cell_size,
            num_cells,
            points_per_cell,
            hbar,
            hbar_list,
            regime,
            f,
            eta,
            k_f,
            k_eta,
            k_t,
            gamma,
            dt_scale,
            final_time,
            sample_stride,
            max_steps,
            initial,
            initial_sites,
            initial_sigma,
            output_dir,
            seed,
        })
    } else {
        r.issues.sort_by_key(|i| i.line);
        Err(ConfigErrors(r.issues))
    }
}

impl ExperimentConfig {
    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let (pname, pamp) = match self.potential {
            Potential::Sin2 { amplitude } | Potential::CosLattice { amplitude } => (self.potential.name(), amplitude),
            Potential::Constant { value } => ("const", value),
        };
        let (wname, wamp, width) = match self.perturbation {
            Perturbation::Zero => ("none", 1.0, 1.0),
            Perturbation::Cos { amplitude } => ("w-cos", amplitude, 1.0),
            Perturbation::Tanh { amplitude, width } => ("w-tanh", amplitude, width),
        };
        let list: Vec<String> = self.hbar_list.iter().map(|h| format!("{h:?}")).collect();
        format!(
            "[model]\npotential = {pname}\npotential_amplitude = {pamp:?}\nperturbation = {wname}\n\
             perturbation_amplitude = {wamp:?}\nperturbation_width = {width:?}\ncell_size = {:?}\n\
             num_cells = {}\npoints_per_cell = {}\n\n[params]\nhbar = {:?}\nhbar_list = {}\nregime = {}\n\
             f = {:?}\neta = {:?}\nk_f = {:?}\nk_eta = {:?}\nk_t = {:?}\ngamma = {:?}\n\n[integrator]\n\
             dt_scale = {:?}\nfinal_time = {:?}\nsample_stride = {}\nmax_steps = {}\ninitial = {}\n\
             initial_sites = {}\ninitial_sigma = {:?}\n\n[output]\ndir = {}\nseed = {}\n",
            self.cell_size,
            self.num_cells,
            self.points_per_cell,
            self.hbar,
            list.join(", "),
            self.regime.name(),
            self.f,
            self.eta,
            self.k_f,
            self.k_eta,
            self.k_t,
            self.gamma,
            self.dt_scale,
            self.final_time,
            self.sample_stride,
            self.max_steps,
            self.initial.name(),
            self.initial_sites,
            self.initial_sigma,
            self.output_dir.display(),
            self.seed,
        )
    }

    pub fn model(&self) -> Result<LatticeModel> {
        LatticeModel::new(self.cell_size, self.num_cells, self.points_per_cell, self.potential, self.perturbation)
    }

    /// Parameters at `hbar`; model-2 parameters still need beta.
    pub fn params(&self, hbar: f64) -> Result<SemiclassicalParams> {
        match self.regime {
            RegimeKind::Model1 => SemiclassicalParams::model1(hbar, self.k_f, self.k_eta),
            RegimeKind::Model2 => SemiclassicalParams::model2(hbar, self.k_f, self.k_eta),
            RegimeKind::Custom => SemiclassicalParams::custom(hbar, self.f, self.eta),
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            hbars: self.hbar_list.clone(),
            k_f: self.k_f,
            k_eta: self.k_eta,
            k_t: self.k_t,
            gamma: self.gamma,
            dt_scale: self.dt_scale,
            sample_stride: self.sample_stride,
            max_steps: Some(self.max_steps),
            sites: self.initial_sites,
            sigma: self.initial_sigma,
            comparisons: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), ExperimentConfig::default());
        let c = parse_config("[model]\npotential = sin2\n").unwrap();
        assert_eq!(c.num_cells, 16);
        assert_eq!(c.hbar_list, vec![0.14, 0.12, 0.1, 0.08, 0.06]);
    }

    #[test]
    fn odd_cell_count() {
        let e = parse_config("[model]\nnum_cells = 7\n").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].line, 2);
        assert!(e.0[0].message.contains("N must be even"));
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let e = parse_config("[model]\nnum_cells = 8\n\n[params]\nhbar = 0.1\n[model]\nnum_cells = 8\n").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].line, 7);
        assert!(e.0[0].message.contains("lines 2 and 7"), "{}", e.0[0].message);
    }

    #[test]
    fn all_violations_reported() {
        let text = "[model]\nnum_cells = 7\nbogus = 1\n[params]\nhbar_list = 0.1, 0.12\nk_t = x\n[nowhere]\n";
        let e = parse_config(text).unwrap_err();
        let lines: Vec<usize> = e.0.iter().map(|i| i.line).collect();
        assert_eq!(lines, vec![2, 3, 5, 6, 7]);
    }

    #[test]
    fn overrides_apply() {
        let c = parse_config_with_overrides("[params]\nhbar = 0.1\n", &["params.hbar=0.2", "model.num_cells = 8"]).unwrap();
        assert_eq!(c.hbar, 0.2);
        assert_eq!(c.num_cells, 8);
        assert!(parse_config_with_overrides("", &["hbar=0.2"]).is_err());
        assert!(parse_config_with_overrides("", &["params.nothing=1"]).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.perturbation = Perturbation::Tanh { amplitude: 0.3, width: 2.5 };
        c.regime = RegimeKind::Custom;
        c.f = 1.0 / 3.0;
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }
}
