//! Experiment configs and their flat `key = value` text form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::multistage::MomentumMode;
use crate::optimizers::{default_record_every, RunConfig};
use crate::problems::{
    fmt_f64, generate_diagonal_lb, generate_feasible_system, generate_regression, QuadraticProblem,
};
use crate::schedules::StepScale;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Regression { n: usize, d: usize, kappa: f64, noise: f64, seed: u64 },
    Feasible { n: usize, d: usize, kappa: f64, seed: u64 },
    Diagonal { n: usize, kappa: f64 },
    File(PathBuf),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<QuadraticProblem> {
        match self {
            ProblemSpec::Regression { n, d, kappa, noise, seed } => {
                generate_regression(*n, *d, *kappa, *noise, *seed)
            }
            ProblemSpec::Feasible { n, d, kappa, seed } => generate_feasible_system(*n, *d, *kappa, *seed),
            ProblemSpec::Diagonal { n, kappa } => generate_diagonal_lb(*n, *kappa),
            ProblemSpec::File(path) => QuadraticProblem::load(path),
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |n: usize, d: usize, kappa: f64| -> Result<()> {
            if n < 2 || d == 0 || d > n {
                return Err(Error::invalid(format!("need 1 <= d <= n and n >= 2, got n = {n}, d = {d}")));
            }
            if !(kappa >= 1.0) || !kappa.is_finite() {
                return Err(Error::invalid(format!("kappa must be a finite value >= 1, got {kappa}")));
            }
            Ok(())
        };
        match self {
            ProblemSpec::Regression { n, d, kappa, noise, .. } => {
                check(*n, *d, *kappa)?;
                if !(*noise >= 0.0) {
                    return Err(Error::invalid(format!("noise must be >= 0, got {noise}")));
                }
                Ok(())
            }
            ProblemSpec::Feasible { n, d, kappa, .. } => check(*n, *d, *kappa),
            ProblemSpec::Diagonal { n, kappa } => check(*n, *n, *kappa),
            ProblemSpec::File(_) => Ok(()),
        }
    }
}

/// An integer is an absolute size; anything with a decimal point or an
/// exponent is a fraction of `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSpec {
    Absolute(usize),
    Fraction(f64),
}

impl BatchSpec {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        let b = match *self {
            BatchSpec::Absolute(b) => b,
            BatchSpec::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidBatch(format!("batch fraction must lie in (0, 1], got {f}")));
                }
                ((f * n as f64).round() as usize).max(1)
            }
        };
        if b == 0 || b > n {
            return Err(Error::InvalidBatch(format!("batch size {b} outside [1, {n}]")));
        }
        Ok(b)
    }
}

impl FromStr for BatchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains(['.', 'e', 'E']) {
            s.parse::<f64>()
                .map(BatchSpec::Fraction)
                .map_err(|_| Error::InvalidBatch(format!("bad batch fraction `{s}`")))
        } else {
            s.parse::<usize>()
                .map(BatchSpec::Absolute)
                .map_err(|_| Error::InvalidBatch(format!("bad batch size `{s}`")))
        }
    }
}

impl fmt::Display for BatchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSpec::Absolute(b) => write!(f, "{b}"),
            BatchSpec::Fraction(x) => write!(f, "{x:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SgdStep {
    /// `1/L` with `L` the smoothness of the mean objective.
    #[default]
    InverseL,
    /// `1/max_i L_i`, stable for every batch size.
    InverseMaxSample,
}

/// Optimizer choice. The text form is `name` or `name(key=value,...)`, for
/// example `shb-const(a=0.5)` or `shb-exp(tau=1,nu_l=4,scale=half)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Sgd(SgdStep),
    ShbConst { a: f64 },
    ShbExp { tau: f64, nu_l: f64, nu_mu: f64, scale: StepScale },
    Multistage(MomentumMode),
    TwoPhase { c: f64 },
    Nesterov,
    PanMultistage { c: f64 },
}

impl Method {
    /// Exact-curvature exponential schedule.
    pub fn shb_exp(tau: f64) -> Self {
        Method::ShbExp { tau, nu_l: 1.0, nu_mu: 1.0, scale: StepScale::Quarter }
    }

    /// Label that is safe as a directory name.
    pub fn file_stem(&self) -> String {
        self.to_string()
            .chars()
            .map(|c| match c {
                '(' | ',' | '=' => '_',
                ')' => '\0',
                c => c,
            })
            .filter(|&c| c != '\0')
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        match *self {
            Method::ShbConst { a } if !(a > 0.0 && a <= 1.0) => bad(format!("a must lie in (0, 1], got {a}")),
            Method::ShbExp { tau, nu_l, nu_mu, .. } if !(tau >= 1.0 && nu_l > 0.0 && nu_mu > 0.0) => {
                bad(format!("need tau >= 1 and positive misestimation factors, got {self}"))
            }
            Method::TwoPhase { c } if !(c > 0.0 && c < 1.0) => bad(format!("phase split must lie in (0, 1), got {c}")),
            Method::PanMultistage { c } if !(c > 1.0) => bad(format!("stage ratio must exceed 1, got {c}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Method::Sgd(SgdStep::InverseL) => write!(f, "sgd"),
            Method::Sgd(SgdStep::InverseMaxSample) => write!(f, "sgd(step=max-sample)"),
            Method::ShbConst { a } => write!(f, "shb-const(a={a})"),
            Method::ShbExp { tau, nu_l, nu_mu, scale } => {
                write!(f, "shb-exp(tau={tau}")?;
                if nu_l != 1.0 {
                    write!(f, ",nu_l={nu_l}")?;
                }
                if nu_mu != 1.0 {
                    write!(f, ",nu_mu={nu_mu}")?;
                }
                if scale == StepScale::Half {
                    write!(f, ",scale=half")?;
                }
                write!(f, ")")
            }
            Method::Multistage(MomentumMode::PerStage) => write!(f, "multistage"),
            Method::Multistage(MomentumMode::ConstantHeuristic) => write!(f, "multistage(momentum=constant)"),
            Method::TwoPhase { c } => write!(f, "twophase(c={c})"),
            Method::Nesterov => write!(f, "nesterov"),
            Method::PanMultistage { c } => write!(f, "pan(c={c})"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) => {
                let rest = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::invalid(format!("unbalanced parentheses in method `{s}`")))?;
                (&s[..i], rest)
            }
            None => (s, ""),
        };
        let mut kv = Vec::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value in method `{s}`, got `{part}`")))?;
            kv.push((k.trim(), v.trim()));
        }
        let mut used = 0;
        let mut take = |key: &str| -> Option<&str> {
            kv.iter().find(|(k, _)| *k == key).map(|(_, v)| {
                used += 1;
                *v
            })
        };
        let num = |key: &str, v: Option<&str>, default: f64| -> Result<f64> {
            v.map_or(Ok(default), |v| {
                v.parse().map_err(|_| Error::invalid(format!("bad value `{v}` for `{key}`")))
            })
        };
        let method = match name.trim() {
            "sgd" => match take("step") {
                None | Some("inverse-l") => Method::Sgd(SgdStep::InverseL),
                Some("max-sample") => Method::Sgd(SgdStep::InverseMaxSample),
                Some(v) => return Err(Error::invalid(format!("unknown sgd step `{v}`"))),
            },
            "shb-const" => Method::ShbConst { a: num("a", take("a"), 1.0)? },
            "shb-exp" => Method::ShbExp {
                tau: num("tau", take("tau"), 1.0)?,
                nu_l: num("nu_l", take("nu_l"), 1.0)?,
                nu_mu: num("nu_mu", take("nu_mu"), 1.0)?,
                scale: match take("scale") {
                    None | Some("quarter") => StepScale::Quarter,
                    Some("half") => StepScale::Half,
                    Some(v) => return Err(Error::invalid(format!("unknown step scale `{v}`"))),
                },
            },
            "multistage" => match take("momentum") {
                None | Some("per-stage") => Method::Multistage(MomentumMode::PerStage),
                Some("constant") => Method::Multistage(MomentumMode::ConstantHeuristic),
                Some(v) => return Err(Error::invalid(format!("unknown momentum mode `{v}`"))),
            },
            "twophase" => Method::TwoPhase { c: num("c", take("c"), 0.5)? },
            "nesterov" => Method::Nesterov,
            "pan" => Method::PanMultistage { c: num("c", take("c"), 2.0)? },
            other => return Err(Error::invalid(format!("unknown method `{other}`"))),
        };
        if used != kv.len() {
            return Err(Error::invalid(format!("unused parameters in method `{s}`")));
        }
        method.validate()?;
        Ok(method)
    }
}

/// Splits at commas that are not inside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|p| !p.is_empty());
    out
}

/// One figure panel: a problem, the methods compared on it, and the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSpec,
    pub methods: Vec<Method>,
    pub batch: BatchSpec,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    /// `None` picks the default thinning for the horizon.
    pub record_every: Option<usize>,
    /// Every coordinate of the starting point.
    pub w0: f64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::invalid(format!("experiment name `{}` is not a plain file name", self.name)));
        }
        self.problem.validate()?;
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods given"));
        }
        for m in &self.methods {
            m.validate()?;
        }
        if self.horizon == 0 {
            return Err(Error::invalid("iters must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("no seeds given"));
        }
        if self.record_every == Some(0) {
            return Err(Error::invalid("record_every must be positive"));
        }
        if !self.w0.is_finite() {
            return Err(Error::invalid("w0 must be finite"));
        }
        match self.problem {
            ProblemSpec::Regression { n, .. } | ProblemSpec::Feasible { n, .. } | ProblemSpec::Diagonal { n, .. } => {
                self.batch.resolve(n).map(|_| ())
            }
            ProblemSpec::File(_) => Ok(()),
        }
    }

    pub fn run_config(&self, p: &QuadraticProblem) -> Result<RunConfig> {
        let b = self.batch.resolve(p.n())?;
        let every = self.record_every.unwrap_or_else(|| default_record_every(self.horizon));
        let cfg = RunConfig::new(b, self.horizon, vec![self.w0; p.d()]).with_record_every(every);
        cfg.validate(p)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut lines = vec![format!("name = {}", self.name)];
        match &self.problem {
            ProblemSpec::Regression { n, d, kappa, noise, seed } => {
                lines.push("problem = regression".into());
                lines.push(format!("n = {n}"));
                lines.push(format!("d = {d}"));
                lines.push(format!("kappa = {}", fmt_f64(*kappa)));
                lines.push(format!("noise = {}", fmt_f64(*noise)));
                lines.push(format!("problem_seed = {seed}"));
            }
            ProblemSpec::Feasible { n, d, kappa, seed } => {
                lines.push("problem = feasible".into());
                lines.push(format!("n = {n}"));
                lines.push(format!("d = {d}"));
                lines.push(format!("kappa = {}", fmt_f64(*kappa)));
                lines.push(format!("problem_seed = {seed}"));
            }
            ProblemSpec::Diagonal { n, kappa } => {
                lines.push("problem = diagonal".into());
                lines.push(format!("n = {n}"));
                lines.push(format!("kappa = {}", fmt_f64(*kappa)));
            }
            ProblemSpec::File(path) => {
                lines.push("problem = file".into());
                lines.push(format!("problem_file = {}", path.display()));
            }
        }
        let methods: Vec<String> = self.methods.iter().map(Method::to_string).collect();
        lines.push(format!("methods = {}", methods.join(", ")));
        lines.push(format!("batch = {}", self.batch));
        lines.push(format!("iters = {}", self.horizon));
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        lines.push(format!("seeds = {}", seeds.join(",")));
        if let Some(every) = self.record_every {
            lines.push(format!("record_every = {every}"));
        }
        lines.push(format!("w0 = {}", fmt_f64(self.w0)));
        if let Some(dir) = &self.output_dir {
            lines.push(format!("out = {}", dir.display()));
        }
        lines.join("\n") + "\n"
    }

    /// Parses the `key = value` form written by [`ExperimentConfig::to_text`].
    /// Blank lines and `#` comments are ignored; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let k = k.trim().to_string();
            if kv.iter().any(|(_, key, _)| *key == k) {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key `{k}`") });
            }
            kv.push((i + 1, k, v.trim().to_string()));
        }
        let get = |key: &str| kv.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));
        fn parse<T: FromStr>(key: &str, entry: Option<(usize, &str)>) -> Result<Option<T>> {
            entry
                .map(|(line, v)| {
                    v.parse::<T>().map_err(|_| Error::Parse { line, msg: format!("bad value `{v}` for `{key}`") })
                })
                .transpose()
        }
        let need = |key: &str| -> Result<(usize, &str)> {
            get(key).ok_or_else(|| Error::invalid(format!("missing key `{key}`")))
        };
        const KNOWN: [&str; 14] = [
            "name", "problem", "n", "d", "kappa", "noise", "problem_seed", "problem_file", "methods", "batch",
            "iters", "seeds", "record_every", "w0",
        ];
        if let Some((line, k, _)) = kv.iter().find(|(_, k, _)| !KNOWN.contains(&k.as_str()) && k != "out") {
            return Err(Error::Parse { line: *line, msg: format!("unknown key `{k}`") });
        }

        let n = || -> Result<usize> { Ok(parse("n", Some(need("n")?))?.unwrap()) };
        let kappa = || -> Result<f64> { Ok(parse("kappa", Some(need("kappa")?))?.unwrap()) };
        let problem = match need("problem")?.1 {
            "regression" => ProblemSpec::Regression {
                n: n()?,
                d: parse("d", Some(need("d")?))?.unwrap(),
                kappa: kappa()?,
                noise: parse("noise", get("noise"))?.unwrap_or(0.0),
                seed: parse("problem_seed", get("problem_seed"))?.unwrap_or(0),
            },
            "feasible" => ProblemSpec::Feasible {
                n: n()?,
                d: parse("d", Some(need("d")?))?.unwrap(),
                kappa: kappa()?,
                seed: parse("problem_seed", get("problem_seed"))?.unwrap_or(0),
            },
            "diagonal" => ProblemSpec::Diagonal { n: n()?, kappa: kappa()? },
            "file" => ProblemSpec::File(PathBuf::from(need("problem_file")?.1)),
            other => return Err(Error::invalid(format!("unknown problem kind `{other}`"))),
        };
        let methods = split_top_level(need("methods")?.1)
            .into_iter()
            .map(str::parse)
            .collect::<Result<Vec<Method>>>()?;
        let seeds = need("seeds")?
            .1
            .split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| Error::invalid(format!("bad seed `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let cfg = ExperimentConfig {
            name: need("name")?.1.to_string(),
            problem,
            methods,
            batch: need("batch")?.1.parse()?,
            horizon: parse("iters", Some(need("iters")?))?.unwrap(),
            seeds,
            record_every: parse("record_every", get("record_every"))?,
            w0: parse("w0", get("w0"))?.unwrap_or(0.0),
            output_dir: get("out").map(|(_, v)| PathBuf::from(v)),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_spec_parsing() {
        assert_eq!("10".parse::<BatchSpec>().unwrap(), BatchSpec::Absolute(10));
        assert_eq!("0.9".parse::<BatchSpec>().unwrap(), BatchSpec::Fraction(0.9));
        assert_eq!("1.0".parse::<BatchSpec>().unwrap(), BatchSpec::Fraction(1.0));
        assert!("ten".parse::<BatchSpec>().is_err());
        assert_eq!(BatchSpec::Fraction(0.9).resolve(10_000).unwrap(), 9000);
        assert_eq!(BatchSpec::Fraction(1.0).resolve(7).unwrap(), 7);
        assert!(BatchSpec::Fraction(1.5).resolve(7).is_err());
        assert!(BatchSpec::Absolute(8).resolve(7).is_err());
        assert_eq!(BatchSpec::Fraction(1.0).to_string(), "1.0");
    }

    #[test]
    fn method_text_round_trip() {
        for s in [
            "sgd",
            "sgd(step=max-sample)",
            "shb-const(a=0.0625)",
            "shb-exp(tau=1)",
            "shb-exp(tau=2,nu_l=4,nu_mu=0.1,scale=half)",
            "multistage",
            "multistage(momentum=constant)",
            "twophase(c=0.5)",
            "nesterov",
            "pan(c=2)",
        ] {
            let m: Method = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!("shb-const".parse::<Method>().unwrap(), Method::ShbConst { a: 1.0 });
        assert!("shb-const(a=2)".parse::<Method>().is_err());
        assert!("shb-const(b=2)".parse::<Method>().is_err());
        assert!("adam".parse::<Method>().is_err());
        assert!("twophase(c=0.5".parse::<Method>().is_err());
        assert_eq!(Method::ShbConst { a: 0.5 }.file_stem(), "shb-const_a_0.5");
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = ExperimentConfig {
            name: "demo".into(),
            problem: ProblemSpec::Regression { n: 100, d: 4, kappa: 50.0, noise: 1e-4, seed: 3 },
            methods: vec![Method::Sgd(SgdStep::InverseL), "shb-exp(tau=1,nu_l=4,scale=half)".parse().unwrap()],
            batch: BatchSpec::Fraction(0.9),
            horizon: 500,
            seeds: vec![1, 2, 3],
            record_every: Some(5),
            w0: 0.0,
            output_dir: Some("out".into()),
        };
        let text = cfg.to_text();
        assert_eq!(ExperimentConfig::from_text(&text).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        let base = "name = x\nproblem = diagonal\nn = 10\nkappa = 5\nmethods = sgd\nbatch = 2\niters = 10\nseeds = 1\n";
        assert!(ExperimentConfig::from_text(base).is_ok());
        let with_comment = format!("# comment\n{base}\n  # another\n");
        assert!(ExperimentConfig::from_text(&with_comment).is_ok());
        assert!(ExperimentConfig::from_text(&format!("{base}colour = red\n")).is_err());
        assert!(ExperimentConfig::from_text(&format!("{base}n = 11\n")).is_err());
        assert!(ExperimentConfig::from_text(&base.replace("batch = 2", "batch = 20"))
            .unwrap_err()
            .is_config_error());
        assert!(ExperimentConfig::from_text(&base.replace("iters = 10", "iters = 0")).is_err());
        assert!(ExperimentConfig::from_text(&base.replace("seeds = 1", "seeds = a")).is_err());
        assert!(ExperimentConfig::from_text("just words").is_err());
    }
}
