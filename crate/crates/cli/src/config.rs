//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Unknown
//! and repeated keys are errors. Lists are comma separated. Relative paths
//! are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use oxytaxis_core::cost::CostWeights;
use oxytaxis_core::mesh::{generate_rectangle, load_mesh, Mesh, MeshFormat};
use oxytaxis_core::model::{InitMode, ModelParams};
use oxytaxis_core::optimizer::AdamConfig;
use oxytaxis_core::time::TimeGrid;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
    File { path: PathBuf, format: MeshFormat },
}

impl MeshSource {
    pub fn build(&self) -> Result<Mesh, CliError> {
        match self {
            MeshSource::Rectangle { lx, ly, nx, ny } => Ok(generate_rectangle(*lx, *ly, *nx, *ny)?),
            MeshSource::File { path, format } => Ok(load_mesh(path, *format)?),
        }
    }
}

/// Which initial state the runs start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialData {
    /// Tumor bump at the centre, oxygen with two satellite sources.
    #[default]
    Tumor,
    /// The tumor-free steady state `u = 0, sigma = beta`.
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub mesh_n: usize,
    pub t_final: f64,
    pub dts: Vec<f64>,
    pub spatial_meshes: Vec<usize>,
    pub spatial_dt: f64,
    pub spatial_steps: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            mesh_n: 32,
            t_final: 1.0,
            dts: vec![0.02, 0.01, 0.005],
            spatial_meshes: vec![8, 16, 32, 64],
            spatial_dt: 0.01,
            spatial_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mesh: MeshSource,
    pub initial: InitialData,
    pub init: InitMode,
    /// `None` uses the default offsets from the domain centre.
    pub satellites: Option<[[f64; 2]; 2]>,
    pub grid: TimeGrid,
    pub params: ModelParams,
    pub weights: CostWeights,
    pub c_max: f64,
    pub adam: AdamConfig,
    pub c0: f64,
    pub s0: f64,
    pub out: PathBuf,
    pub stride: usize,
    pub perts: Vec<f64>,
    pub check_directions: usize,
    pub check_eps: Vec<f64>,
    pub seed: u64,
    pub convergence: ConvergenceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSource::Rectangle { lx: 1.0, ly: 1.0, nx: 32, ny: 32 },
            initial: InitialData::Tumor,
            init: InitMode::L2Projection,
            satellites: None,
            grid: TimeGrid::new(0.008, 250).expect("valid default grid"),
            params: ModelParams::default(),
            weights: CostWeights::default(),
            c_max: 0.25,
            adam: AdamConfig::default(),
            c0: 0.5,
            s0: 0.5,
            out: PathBuf::from("out"),
            stride: 25,
            perts: vec![-0.1, -0.05, -0.02, -0.01, 0.0, 0.01, 0.02, 0.05, 0.1],
            check_directions: 5,
            check_eps: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            seed: 0,
            convergence: ConvergenceConfig::default(),
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Entries<'a> {
    source: &'a str,
    map: BTreeMap<String, Entry>,
}

impl Entries<'_> {
    fn err(&self, line: usize, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("{}:{line}: {msg}", self.source))
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.map.remove(key) else {
            return Ok(None);
        };
        e.value
            .parse()
            .map(Some)
            .map_err(|err| self.err(e.line, format_args!("bad value for `{key}`: {err}")))
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), CliError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.map.remove(key) else {
            return Ok(None);
        };
        parse_list(&e.value)
            .map(Some)
            .map_err(|err| self.err(e.line, format_args!("bad list for `{key}`: {err}")))
    }

    fn point(&mut self, key: &str) -> Result<Option<[f64; 2]>, CliError> {
        let line = self.map.get(key).map_or(0, |e| e.line);
        match self.list::<f64>(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some([v[0], v[1]])),
            Some(v) => Err(self.err(line, format_args!("`{key}` needs two coordinates, got {}", v.len()))),
        }
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

fn parse_init(s: &str) -> Result<InitMode, String> {
    match s {
        "projection" => Ok(InitMode::L2Projection),
        "interpolation" => Ok(InitMode::Interpolation),
        other => Err(format!("unknown init mode `{other}` (projection | interpolation)")),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// Parses config text; `source` names it in messages and `base` anchors
    /// relative paths.
    pub fn parse(text: &str, source: &str, base: &Path) -> Result<Self, CliError> {
        let mut entries = Entries { source, map: BTreeMap::new() };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(entries.err(line, "expected `key = value`"));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(entries.err(line, "empty key"));
            }
            if let Some(prev) = entries.map.get(k) {
                return Err(entries.err(line, format_args!("`{k}` already set on line {}", prev.line)));
            }
            entries.map.insert(k.to_owned(), Entry { value: v.to_owned(), line });
        }

        let mut cfg = ExperimentConfig::default();
        let e = &mut entries;

        let mesh_kind: Option<String> = e.take("mesh")?;
        match mesh_kind.as_deref() {
            None | Some("rectangle") => {
                let (mut lx, mut ly, mut nx, mut ny) = (1.0, 1.0, 32usize, 32usize);
                e.set("mesh.lx", &mut lx)?;
                e.set("mesh.ly", &mut ly)?;
                e.set("mesh.nx", &mut nx)?;
                e.set("mesh.ny", &mut ny)?;
                cfg.mesh = MeshSource::Rectangle { lx, ly, nx, ny };
            }
            Some("file") => {
                let line = e.map.get("mesh.path").map_or(0, |x| x.line);
                let Some(p) = e.take::<String>("mesh.path")? else {
                    return Err(e.err(0, "`mesh = file` requires `mesh.path`"));
                };
                let format = e
                    .take::<String>("mesh.format")?
                    .map_or(Ok(MeshFormat::NodeEle), |f| f.parse::<MeshFormat>())
                    .map_err(|err| e.err(line, err))?;
                let path = base.join(p);
                let probe = match format {
                    MeshFormat::NodeEle if path.extension().is_none() => path.with_extension("node"),
                    _ => path.clone(),
                };
                if !probe.exists() {
                    return Err(e.err(line, format_args!("mesh file {} does not exist", probe.display())));
                }
                cfg.mesh = MeshSource::File { path, format };
            }
            Some(other) => return Err(e.err(0, format_args!("unknown mesh kind `{other}` (rectangle | file)"))),
        }

        if let Some(s) = e.map.remove("initial") {
            cfg.initial = match s.value.as_str() {
                "tumor" => InitialData::Tumor,
                "equilibrium" => InitialData::Equilibrium,
                other => return Err(e.err(s.line, format_args!("unknown initial data `{other}` (tumor | equilibrium)"))),
            };
        }
        if let Some(s) = e.map.remove("init") {
            cfg.init = parse_init(&s.value).map_err(|m| e.err(s.line, m))?;
        }
        match (e.point("satellite1")?, e.point("satellite2")?) {
            (Some(a), Some(b)) => cfg.satellites = Some([a, b]),
            (None, None) => {}
            _ => return Err(e.err(0, "set both `satellite1` and `satellite2` or neither")),
        }

        let (mut dt, mut steps) = (cfg.grid.dt(), cfg.grid.n_steps());
        e.set("dt", &mut dt)?;
        e.set("steps", &mut steps)?;
        cfg.grid = TimeGrid::new(dt, steps)?;

        let p = &mut cfg.params;
        e.set("D_u", &mut p.d_u)?;
        e.set("D_sigma", &mut p.d_sigma)?;
        e.set("alpha", &mut p.alpha)?;
        e.set("rho_hat", &mut p.rho_hat)?;
        e.set("b", &mut p.b)?;
        e.set("chi", &mut p.chi)?;
        e.set("kappa", &mut p.kappa)?;
        e.set("A_ox", &mut p.a_ox)?;
        e.set("k_ox", &mut p.k_ox)?;
        e.set("beta", &mut p.beta)?;
        e.set("gamma", &mut p.gamma)?;
        e.set("S_c", &mut p.s_c)?;

        let w = &mut cfg.weights;
        e.set("k1", &mut w.k1)?;
        e.set("k2", &mut w.k2)?;
        e.set("k3", &mut w.k3)?;
        e.set("k4", &mut w.k4)?;
        e.set("l1", &mut w.l1)?;
        e.set("l2", &mut w.l2)?;
        e.set("sigma_Q", &mut w.sigma_q)?;
        e.set("sigma_Omega", &mut w.sigma_omega)?;

        e.set("c_max", &mut cfg.c_max)?;
        e.set("c0", &mut cfg.c0)?;
        e.set("s0", &mut cfg.s0)?;

        let a = &mut cfg.adam;
        e.set("adam.beta1", &mut a.beta1)?;
        e.set("adam.beta2", &mut a.beta2)?;
        e.set("adam.epsilon", &mut a.epsilon)?;
        e.set("adam.alpha0", &mut a.alpha0)?;
        e.set("adam.decay", &mut a.decay)?;
        e.set("adam.tol", &mut a.tol)?;
        e.set("adam.n_stable", &mut a.n_stable)?;
        e.set("adam.max_iter", &mut a.max_iter)?;

        if let Some(o) = e.take::<String>("out")? {
            cfg.out = base.join(o);
        }
        e.set("stride", &mut cfg.stride)?;
        if let Some(v) = e.list("perts")? {
            cfg.perts = v;
        }
        e.set("check.directions", &mut cfg.check_directions)?;
        if let Some(v) = e.list("check.eps")? {
            cfg.check_eps = v;
        }
        e.set("seed", &mut cfg.seed)?;

        let c = &mut cfg.convergence;
        e.set("convergence.mesh", &mut c.mesh_n)?;
        e.set("convergence.t_final", &mut c.t_final)?;
        if let Some(v) = e.list("convergence.dts")? {
            c.dts = v;
        }
        if let Some(v) = e.list("convergence.meshes")? {
            c.spatial_meshes = v;
        }
        e.set("convergence.spatial_dt", &mut c.spatial_dt)?;
        e.set("convergence.spatial_steps", &mut c.spatial_steps)?;

        if let Some((k, entry)) = e.map.iter().next() {
            return Err(e.err(entry.line, format_args!("unknown key `{k}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        self.weights.validate()?;
        self.adam.validate()?;
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.c_max > 0.0) {
            return bad(format!("c_max must be positive, got {}", self.c_max));
        }
        for (name, v) in [("c0", self.c0), ("s0", self.s0)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if let MeshSource::Rectangle { lx, ly, nx, ny } = self.mesh {
            if !(lx > 0.0 && ly > 0.0) || nx == 0 || ny == 0 {
                return bad("mesh sizes and cell counts must be positive".into());
            }
        }
        if self.check_eps.iter().any(|e| !(*e > 0.0)) {
            return bad("check.eps entries must be positive".into());
        }
        Ok(())
    }
}
