//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Grid-valued keys (`alpha`, `eta`, `methods`) take
//! comma-separated lists. Later assignments override earlier ones, which is
//! how command-line `--set` overrides are applied.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    RegressionSweep,
    ClassificationSweep,
    EquivalenceSuite,
    SyntheticReal,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::RegressionSweep => "regression-sweep",
            Self::ClassificationSweep => "classification-sweep",
            Self::EquivalenceSuite => "equivalence-suite",
            Self::SyntheticReal => "synthetic-real",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        [Self::RegressionSweep, Self::ClassificationSweep, Self::EquivalenceSuite, Self::SyntheticReal]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::invalid("experiment", s))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Naive,
    Cfbh,
    CfbhPlus,
    CfbhPlusPlus,
    InfoSp,
    InfoScop,
    InfoSpPlus,
    InfoSpPlusPlus,
    InfoSpModified,
    InfoSpPlusModified,
    Fasi,
    ZhaoSu,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Self::Naive,
        Self::Cfbh,
        Self::CfbhPlus,
        Self::CfbhPlusPlus,
        Self::InfoSp,
        Self::InfoScop,
        Self::InfoSpPlus,
        Self::InfoSpPlusPlus,
        Self::InfoSpModified,
        Self::InfoSpPlusModified,
        Self::Fasi,
        Self::ZhaoSu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Cfbh => "cfbh",
            Self::CfbhPlus => "cfbh+",
            Self::CfbhPlusPlus => "cfbh++",
            Self::InfoSp => "infosp",
            Self::InfoScop => "infoscop",
            Self::InfoSpPlus => "infosp+",
            Self::InfoSpPlusPlus => "infosp++",
            Self::InfoSpModified => "infosp-mod",
            Self::InfoSpPlusModified => "infosp+-mod",
            Self::Fasi => "fasi",
            Self::ZhaoSu => "zhao-su",
        }
    }

    fn allowed_in(self, kind: ExperimentKind, profile: Profile) -> bool {
        use Method::*;
        match kind {
            ExperimentKind::RegressionSweep => !matches!(self, Fasi | ZhaoSu),
            ExperimentKind::ClassificationSweep => !matches!(self, Cfbh | CfbhPlus | CfbhPlusPlus | InfoScop),
            ExperimentKind::SyntheticReal => match profile {
                Profile::CifarLike => !matches!(self, Cfbh | CfbhPlus | CfbhPlusPlus | InfoScop),
                Profile::DtiLike => !matches!(self, Fasi | ZhaoSu),
            },
            ExperimentKind::EquivalenceSuite => false,
        }
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| ConfigError::invalid("methods", s))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    CifarLike,
    DtiLike,
}

impl FromStr for Profile {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "cifar-like" => Ok(Self::CifarLike),
            "dti-like" => Ok(Self::DtiLike),
            _ => Err(ConfigError::invalid("profile", s)),
        }
    }
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub methods: Vec<Method>,
    /// Calibration size.
    pub n: usize,
    /// Test size.
    pub m: usize,
    /// Size of the extra calibration block used to fit truncation levels.
    pub cal0: usize,
    /// Size of the block used to train trust classifiers.
    pub train: usize,
    pub reps: usize,
    pub alphas: Vec<f64>,
    /// Misspecification grid; only used by the regression sweep.
    pub etas: Vec<f64>,
    pub seed: u64,
    /// Fraction of the calibration set used for screening by InfoSCOP.
    pub split_ratio: f64,
    pub screen_alpha: f64,
    pub screen_c: f64,
    /// Target threshold for the cfBH family.
    pub c0: f64,
    /// Class-set size bound in classification.
    pub max_size: usize,
    /// Target class of `fasi`.
    pub y0: usize,
    pub profile: Profile,
    pub feasible_fraction: f64,
    pub threshold: f64,
    pub degree: usize,
    pub lambda: f64,
    /// Random instances per check in the equivalence suite.
    pub instances: usize,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "experiment",
    "methods",
    "n",
    "m",
    "cal0",
    "train",
    "reps",
    "alpha",
    "eta",
    "seed",
    "split_ratio",
    "screen_alpha",
    "screen_c",
    "c0",
    "max_size",
    "y0",
    "profile",
    "feasible_fraction",
    "threshold",
    "degree",
    "lambda",
    "instances",
    "out",
];

/// Raw assignments collected from a file and overrides.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: lineno + 1 })?;
            raw.set(key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    /// Apply a `KEY=VALUE` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) =
            assignment.split_once('=').ok_or_else(|| ConfigError::invalid("--set", assignment))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_owned()));
        }
        self.values.insert(key.to_owned(), value.to_owned());
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn get<T: FromStr>(&self, key: &'static str, default: T) -> Result<T, ConfigError> {
        match self.values.get(key) {
            Some(v) => v.parse().map_err(|_| ConfigError::invalid(key, v)),
            None => Ok(default),
        }
    }

    fn list<T: FromStr>(&self, key: &'static str, default: &[T]) -> Result<Vec<T>, ConfigError>
    where
        T: Clone,
    {
        match self.values.get(key) {
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| ConfigError::invalid(key, s)))
                .collect(),
            None => Ok(default.to_vec()),
        }
    }

    /// Resolve defaults for the chosen experiment and validate.
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let experiment: ExperimentKind = match self.values.get("experiment") {
            Some(v) => v.parse()?,
            None => return Err(ConfigError::Missing("experiment")),
        };
        let profile = self.get("profile", Profile::CifarLike)?;
        let default_methods: &[Method] = match (experiment, profile) {
            (ExperimentKind::RegressionSweep, _) => {
                &[Method::Naive, Method::InfoSp, Method::InfoScop, Method::InfoSpPlus]
            }
            (ExperimentKind::ClassificationSweep, _) | (ExperimentKind::SyntheticReal, Profile::CifarLike) => {
                &[Method::Naive, Method::InfoSp, Method::InfoSpPlus, Method::InfoSpPlusPlus]
            }
            (ExperimentKind::SyntheticReal, Profile::DtiLike) => {
                &[Method::Naive, Method::CfbhPlus, Method::InfoSpPlus]
            }
            (ExperimentKind::EquivalenceSuite, _) => &[],
        };
        let default_alphas: &[f64] = match experiment {
            ExperimentKind::ClassificationSweep => &[0.05, 0.1, 0.15, 0.2],
            _ => &[0.1],
        };
        let default_etas: &[f64] = match experiment {
            ExperimentKind::RegressionSweep => &[0.0, 0.5, 1.0, 1.5],
            _ => &[],
        };
        let default_max_size = match (experiment, profile) {
            (ExperimentKind::SyntheticReal, Profile::CifarLike) => 1,
            _ => 2,
        };
        let n = self.get("n", 1000usize)?;
        let config = ExperimentConfig {
            experiment,
            methods: self.list("methods", default_methods)?,
            n,
            m: self.get("m", 1000)?,
            cal0: self.get("cal0", n)?,
            train: self.get("train", n)?,
            reps: self.get("reps", 1000)?,
            alphas: self.list("alpha", default_alphas)?,
            etas: self.list("eta", default_etas)?,
            seed: self.get("seed", 0)?,
            split_ratio: self.get("split_ratio", 0.5)?,
            screen_alpha: self.get("screen_alpha", 0.05)?,
            screen_c: self.get("screen_c", 0.0)?,
            c0: self.get("c0", 0.0)?,
            max_size: self.get("max_size", default_max_size)?,
            y0: self.get("y0", 0)?,
            profile,
            feasible_fraction: self.get("feasible_fraction", 0.5)?,
            threshold: self.get("threshold", 0.0)?,
            degree: self.get("degree", 2)?,
            lambda: self.get("lambda", 1.0)?,
            instances: self.get("instances", 1000)?,
            out: self.get("out", PathBuf::from("out"))?,
        };
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        let fail = |key: &'static str, value: &dyn fmt::Display| Err(ConfigError::invalid(key, value.to_string()));
        if self.experiment == ExperimentKind::EquivalenceSuite {
            return Ok(());
        }
        if self.methods.is_empty() {
            return fail("methods", &"(empty)");
        }
        if let Some(bad) = self.methods.iter().find(|m| !m.allowed_in(self.experiment, self.profile)) {
            return Err(ConfigError::MethodNotApplicable { method: bad.name(), experiment: self.experiment.name() });
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return fail("methods", m);
            }
        }
        if self.n == 0 {
            return fail("n", &self.n);
        }
        if self.m == 0 {
            return fail("m", &self.m);
        }
        if self.cal0 == 0 {
            return fail("cal0", &self.cal0);
        }
        if self.train == 0 {
            return fail("train", &self.train);
        }
        if self.alphas.is_empty() {
            return fail("alpha", &"(empty)");
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return fail("alpha", a);
        }
        if !(self.screen_alpha > 0.0 && self.screen_alpha < 1.0) {
            return fail("screen_alpha", &self.screen_alpha);
        }
        if self.experiment == ExperimentKind::RegressionSweep {
            if self.etas.is_empty() {
                return fail("eta", &"(empty)");
            }
            if let Some(e) = self.etas.iter().find(|e| !e.is_finite()) {
                return fail("eta", e);
            }
        }
        let split = (self.n as f64 * self.split_ratio).round() as usize;
        if self.methods.contains(&Method::InfoScop) && !(1..self.n).contains(&split) {
            return fail("split_ratio", &self.split_ratio);
        }
        if !(0.0..=1.0).contains(&self.feasible_fraction) {
            return fail("feasible_fraction", &self.feasible_fraction);
        }
        if !(self.lambda > 0.0) {
            return fail("lambda", &self.lambda);
        }
        if self.degree == 0 {
            return fail("degree", &self.degree);
        }
        let classes = match (self.experiment, self.profile) {
            (ExperimentKind::ClassificationSweep, _) => Some(scip_core::simgen::ClassificationDgp::CLASSES),
            (ExperimentKind::SyntheticReal, Profile::CifarLike) => Some(scip_core::simgen::SyntheticProfile::CIFAR_CLASSES),
            _ => None,
        };
        if let Some(k) = classes {
            if self.max_size == 0 || self.max_size >= k {
                return fail("max_size", &self.max_size);
            }
            if self.y0 >= k {
                return fail("y0", &self.y0);
            }
        }
        Ok(())
    }

    /// InfoSCOP screening and stage-two calibration sizes.
    pub fn split_sizes(&self) -> (usize, usize) {
        let a = (self.n as f64 * self.split_ratio).round() as usize;
        (a, self.n - a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_for_regression() {
        let raw = RawConfig::parse("experiment = regression-sweep\n# comment\n\nseed=9\n").unwrap();
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.methods, vec![Method::Naive, Method::InfoSp, Method::InfoScop, Method::InfoSpPlus]);
        assert_eq!(cfg.etas, vec![0.0, 0.5, 1.0, 1.5]);
        assert_eq!((cfg.n, cfg.m, cfg.cal0, cfg.seed), (1000, 1000, 1000, 9));
        assert_eq!(cfg.split_sizes(), (500, 500));
    }

    #[test]
    fn overrides_win() {
        let mut raw = RawConfig::parse("experiment=classification-sweep\nalpha=0.1\n").unwrap();
        raw.apply_override("alpha=0.1,0.2").unwrap();
        raw.apply_override("methods = infosp, infosp+").unwrap();
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.alphas, vec![0.1, 0.2]);
        assert_eq!(cfg.methods, vec![Method::InfoSp, Method::InfoSpPlus]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RawConfig::parse("bogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(RawConfig::parse("no equals sign"), Err(ConfigError::Syntax { line: 1 })));
        let resolve = |text: &str| RawConfig::parse(text).unwrap().resolve();
        assert!(matches!(resolve("n=5"), Err(ConfigError::Missing("experiment"))));
        assert!(resolve("experiment=regression-sweep\nalpha=1.2").is_err());
        assert!(resolve("experiment=regression-sweep\nn=ten").is_err());
        assert!(resolve("experiment=regression-sweep\nmethods=fasi").is_err());
        assert!(resolve("experiment=classification-sweep\nmethods=cfbh+").is_err());
        assert!(resolve("experiment=classification-sweep\nmax_size=4").is_err());
        assert!(resolve("experiment=regression-sweep\nmethods=naive,naive").is_err());
        assert!(resolve("experiment=synthetic-real\nprofile=dti-like\nmethods=cfbh+").is_ok());
        assert!(resolve("experiment=nonsense").is_err());
    }
}
