//! Flat `key = value` study configuration. List-valued keys repeat; `#`
//! starts a comment line.

use std::fmt::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::random_grid::Coupling;
use crate::scheme::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyKind {
    Params,
    Expand,
    MatrixConvergence,
    SdeBaseError,
    SdeWeakError,
    TvStudy,
    DensityCompare,
    SplittingCheck,
    HypothesisReport,
}

impl StudyKind {
    pub const ALL: [StudyKind; 9] = [
        StudyKind::Params,
        StudyKind::Expand,
        StudyKind::MatrixConvergence,
        StudyKind::SdeBaseError,
        StudyKind::SdeWeakError,
        StudyKind::TvStudy,
        StudyKind::DensityCompare,
        StudyKind::SplittingCheck,
        StudyKind::HypothesisReport,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::Params => "params",
            StudyKind::Expand => "expand",
            StudyKind::MatrixConvergence => "matrix-convergence",
            StudyKind::SdeBaseError => "sde-base-error",
            StudyKind::SdeWeakError => "sde-weak-error",
            StudyKind::TvStudy => "tv-study",
            StudyKind::DensityCompare => "density-compare",
            StudyKind::SplittingCheck => "splitting-check",
            StudyKind::HypothesisReport => "hypothesis-report",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown study kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Ou,
    Brownian,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Ou => "ou",
            SchemeKind::Brownian => "brownian",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ou" => Ok(SchemeKind::Ou),
            "brownian" => Ok(SchemeKind::Brownian),
            _ => Err(Error::Config(format!("unknown scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    /// Uniform on `[-1, 1]`.
    Uniform,
    Rademacher,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Uniform => "uniform",
            NoiseKind::Rademacher => "rademacher",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "uniform" => Ok(NoiseKind::Uniform),
            "rademacher" => Ok(NoiseKind::Rademacher),
            _ => Err(Error::Config(format!("unknown noise {s:?}"))),
        }
    }
}

fn coupling_name(c: Coupling) -> &'static str {
    match c {
        Coupling::Independent => "independent",
        Coupling::Common => "common",
    }
}

fn parse_coupling(s: &str) -> Result<Coupling> {
    match s {
        "independent" => Ok(Coupling::Independent),
        "common" => Ok(Coupling::Common),
        _ => Err(Error::Config(format!("unknown coupling {s:?}"))),
    }
}

/// Evenly spaced evaluation points `lo, ..., hi`, `points` of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: u32,
}

impl PointGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        (0..self.points)
            .map(|k| self.lo + (self.hi - self.lo) * f64::from(k) / f64::from(self.points - 1))
            .collect()
    }
}

impl fmt::Display for PointGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.points)
    }
}

impl FromStr for PointGrid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("grid must read lo:hi:points, got {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, points] = parts[..] else { return Err(bad()) };
        let g = PointGrid {
            lo: lo.trim().parse().map_err(|_| bad())?,
            hi: hi.trim().parse().map_err(|_| bad())?,
            points: points.trim().parse().map_err(|_| bad())?,
        };
        if g.points == 0 || !(g.hi >= g.lo) {
            return Err(bad());
        }
        Ok(g)
    }
}

/// Everything a study needs. Every field has a key; [`StudyConfig::to_text`]
/// and [`StudyConfig::parse`] are inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub alpha: u32,
    pub beta: u32,
    pub nu: Vec<u32>,
    pub n: Vec<u32>,
    pub level: u32,
    pub horizon: f64,
    /// Generator rows for the finite-state backend.
    pub generator: Vec<Vec<f64>>,
    pub scheme: SchemeKind,
    pub a: f64,
    pub sigma: f64,
    pub x0: f64,
    pub t: f64,
    pub f: TestFunction,
    pub samples: u64,
    pub seed: u64,
    pub coupling: Coupling,
    pub noise: NoiseKind,
    pub z_star: f64,
    pub r_star: f64,
    pub theta: f64,
    pub grid: PointGrid,
    pub cloud_radius: f64,
    pub out: Option<PathBuf>,
}

impl StudyConfig {
    /// Defaults for `kind`.
    pub fn for_kind(kind: StudyKind) -> Self {
        let mut c = StudyConfig {
            kind,
            alpha: 1,
            beta: 2,
            nu: vec![2],
            n: vec![2, 4, 8],
            level: 0,
            horizon: 1.0,
            generator: vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
            scheme: SchemeKind::Ou,
            a: 1.0,
            sigma: 1.0,
            x0: 1.0,
            t: 1.0,
            f: TestFunction::Square,
            samples: 100_000,
            seed: 1,
            coupling: Coupling::Independent,
            noise: NoiseKind::Gaussian,
            z_star: 0.0,
            r_star: 1.0,
            theta: 1.0,
            grid: PointGrid { lo: -2.0, hi: 2.0, points: 81 },
            cloud_radius: 1.0,
            out: None,
        };
        match kind {
            StudyKind::MatrixConvergence => {
                c.nu = vec![1, 2, 3];
                c.n = vec![2, 4, 8, 16];
            }
            StudyKind::SdeBaseError => {
                c.nu = vec![1];
                c.n = vec![2, 4, 8, 16];
            }
            StudyKind::SdeWeakError => c.nu = vec![1, 2],
            StudyKind::TvStudy => {
                c.nu = vec![1, 2];
                c.f = TestFunction::Indicator(0.0);
            }
            StudyKind::DensityCompare => c.nu = vec![1, 2],
            StudyKind::Expand => c.n = vec![4],
            StudyKind::HypothesisReport => c.n = vec![16, 64, 256, 1024, 4096, 16384],
            StudyKind::Params | StudyKind::SplittingCheck => {}
        }
        c
    }

    /// Parses a full config; `kind` must be present.
    pub fn parse(text: &str) -> Result<Self> {
        let kind = entries(text)?
            .into_iter()
            .find(|(k, _)| k == "kind")
            .ok_or_else(|| Error::Config("missing key \"kind\"".into()))?
            .1;
        let mut c = StudyConfig::for_kind(kind.parse()?);
        c.apply(text)?;
        Ok(c)
    }

    /// Overrides fields from `text`. A list key present in `text` replaces
    /// the whole list.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        let mut cleared = std::collections::HashSet::new();
        for (key, value) in entries(text)? {
            let v = value.as_str();
            let bad = |e: &dyn fmt::Display| Error::Config(format!("bad value for {key}: {v:?} ({e})"));
            macro_rules! num {
                () => {
                    v.parse().map_err(|e| bad(&e))?
                };
            }
            let first = cleared.insert(key.clone());
            match key.as_str() {
                "kind" => {
                    if v.parse::<StudyKind>()? != self.kind {
                        return Err(Error::Config(format!("config is for {v}, not {}", self.kind)));
                    }
                }
                "alpha" => self.alpha = num!(),
                "beta" => self.beta = num!(),
                "nu" => {
                    if first {
                        self.nu.clear();
                    }
                    self.nu.push(num!());
                }
                "n" => {
                    if first {
                        self.n.clear();
                    }
                    self.n.push(num!());
                }
                "level" => self.level = num!(),
                "horizon" => self.horizon = num!(),
                "row" => {
                    if first {
                        self.generator.clear();
                    }
                    let row = v.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
                    self.generator.push(row.map_err(|e| bad(&e))?);
                }
                "scheme" => self.scheme = v.parse()?,
                "a" => self.a = num!(),
                "sigma" => self.sigma = num!(),
                "x0" => self.x0 = num!(),
                "t" => self.t = num!(),
                "f" => self.f = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
                "samples" => self.samples = num!(),
                "seed" => self.seed = num!(),
                "coupling" => self.coupling = parse_coupling(v)?,
                "noise" => self.noise = v.parse()?,
                "z_star" => self.z_star = num!(),
                "r_star" => self.r_star = num!(),
                "theta" => self.theta = num!(),
                "grid" => self.grid = v.parse()?,
                "cloud_radius" => self.cloud_radius = num!(),
                "out" => self.out = Some(PathBuf::from(v)),
                _ => return Err(Error::Config(format!("unknown key {key:?}"))),
            }
        }
        Ok(())
    }

    /// Every key, lists as repeated keys, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind = {}", self.kind);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "beta = {}", self.beta);
        for v in &self.nu {
            let _ = writeln!(s, "nu = {v}");
        }
        for v in &self.n {
            let _ = writeln!(s, "n = {v}");
        }
        let _ = writeln!(s, "level = {}", self.level);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        for row in &self.generator {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "row = {}", cells.join(","));
        }
        let _ = writeln!(s, "scheme = {}", self.scheme);
        let _ = writeln!(s, "a = {}", self.a);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "x0 = {}", self.x0);
        let _ = writeln!(s, "t = {}", self.t);
        let _ = writeln!(s, "f = {}", self.f);
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "coupling = {}", coupling_name(self.coupling));
        let _ = writeln!(s, "noise = {}", self.noise);
        let _ = writeln!(s, "z_star = {}", self.z_star);
        let _ = writeln!(s, "r_star = {}", self.r_star);
        let _ = writeln!(s, "theta = {}", self.theta);
        let _ = writeln!(s, "grid = {}", self.grid);
        let _ = writeln!(s, "cloud_radius = {}", self.cloud_radius);
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        s
    }
}

fn entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
