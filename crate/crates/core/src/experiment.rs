//! Twin-experiment presets, the flat config format and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assimilation::{
    build_rhs, gauss_newton, linearise, low_rank_solve, propagate, storage_report,
    AssimilationProblem, DynamicsModel, ExperimentResult, OuterLoopConfig, SolverMode,
    StorageReport,
};
use crate::error::{Error, Result};
use crate::gmres::{GmresConfig, SolveReport};
use crate::lowrank::{Mat, TruncationPolicy, Vector};
use crate::models::{
    AdvectionDiffusionModel, CovarianceKind, CovarianceModel, Lorenz95Model,
    ObservationOperator,
};
use crate::precond::PreconditionerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    AdvectionDiffusion,
    Lorenz95,
}

/// What a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Gauss-Newton with full- and/or low-rank inner solves.
    Assimilate,
    /// One LR-GMRES solve per preconditioner on the first linearisation.
    ComparePreconditioners,
}

/// Which inner solvers an assimilation run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunModes {
    Both,
    Only(SolverMode),
}

impl RunModes {
    fn includes(self, mode: SolverMode) -> bool {
        match self {
            Self::Both => true,
            Self::Only(m) => m == mode,
        }
    }
}

/// Every knob of a twin experiment. Presets fill it; config files and CLI
/// flags override fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    pub model: ModelKind,
    pub n: usize,
    pub dt: f64,
    pub c_d: f64,
    pub c_a: f64,
    pub forcing: f64,
    /// Lorenz steps discarded before the truth starts.
    pub spinup: usize,
    pub window: usize,
    pub forecast: usize,
    pub obs_stride: usize,
    pub obs_offset: usize,
    /// False gives perfect (noise-free) observations.
    pub obs_noise: bool,
    pub b: CovarianceKind,
    pub q_variance: f64,
    pub r_variance: f64,
    pub ranks: Vec<usize>,
    pub trunc_tol: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_outer: usize,
    pub precond: Vec<String>,
    pub modes: RunModes,
    pub seed: u64,
}

pub const PRESETS: [&str; 9] = [
    "ad_perfect",
    "ad_partial",
    "ad_rank_sweep",
    "precond_compare_440",
    "precond_compare_880",
    "lorenz40_perfect",
    "lorenz40_noisy_full",
    "lorenz40_noisy_partial",
    "lorenz150",
];

/// Observation variance assumed for noise-free observations.
pub const PERFECT_OBS_VARIANCE: f64 = 1e-2;

const EXP_B: CovarianceKind = CovarianceKind::ExpDecay {
    variance: 0.1,
    length: 50.0,
};

impl ExperimentConfig {
    fn ad_base(name: &str) -> Self {
        Self {
            name: name.to_string(),
            task: Task::Assimilate,
            model: ModelKind::AdvectionDiffusion,
            n: 100,
            dt: 1e-3,
            c_d: 0.1,
            c_a: 1.4,
            forcing: 8.0,
            spinup: 1000,
            window: 199,
            forecast: 800,
            obs_stride: 1,
            obs_offset: 0,
            obs_noise: false,
            b: CovarianceKind::ScaledIdentity { variance: 0.1 },
            q_variance: 1e-4,
            r_variance: PERFECT_OBS_VARIANCE,
            ranks: vec![20],
            trunc_tol: 1e-8,
            max_iter: 20,
            tol: 1e-6,
            n_outer: 1,
            precond: vec!["none".into()],
            modes: RunModes::Both,
            seed: 0,
        }
    }

    fn lorenz_base(name: &str, n: usize) -> Self {
        Self {
            model: ModelKind::Lorenz95,
            n,
            dt: 5e-3,
            forecast: 1300,
            n_outer: 3,
            ..Self::ad_base(name)
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let noisy = |mut c: Self| {
            c.obs_noise = true;
            c.r_variance = 0.01;
            c.b = EXP_B;
            c
        };
        let compare = |n: usize, stride: usize, precond: &[&str]| {
            let mut c = noisy(Self::ad_base(name));
            c.task = Task::ComparePreconditioners;
            c.n = n;
            c.window = 19;
            c.forecast = 0;
            c.obs_stride = stride;
            c.obs_offset = 2;
            c.ranks = vec![5];
            c.max_iter = 440;
            c.precond = precond.iter().map(|s| s.to_string()).collect();
            c
        };
        let partial = |mut c: Self| {
            c.obs_stride = 5;
            c.obs_offset = 4;
            c
        };
        Ok(match name {
            "ad_perfect" => Self::ad_base(name),
            "ad_partial" => partial(noisy(Self::ad_base(name))),
            "ad_rank_sweep" => Self {
                ranks: vec![20, 5, 1],
                ..partial(noisy(Self::ad_base(name)))
            },
            "precond_compare_440" => compare(10, 2, &PreconditionerSpec::NAMES),
            "precond_compare_880" => compare(20, 5, &["none", "ic-ih"]),
            "lorenz40_perfect" => Self::lorenz_base(name, 40),
            "lorenz40_noisy_full" => noisy(Self::lorenz_base(name, 40)),
            "lorenz40_noisy_partial" => partial(noisy(Self::lorenz_base(name, 40))),
            "lorenz150" => Self {
                window: 149,
                ranks: vec![20, 5],
                ..noisy(Self::lorenz_base(name, 150))
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    /// Reads `key = value` lines. `#` starts a comment. A `preset` key, if
    /// present, supplies the defaults regardless of where it appears.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            pairs.push((lineno + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let base = pairs
            .iter()
            .filter(|(_, k, _)| k == "preset")
            .last()
            .map(|(_, _, v)| v.clone());
        let mut cfg = match base {
            Some(name) => Self::preset(&name)?,
            None => Self::ad_base("custom"),
        };
        if let Some((_, _, v)) = pairs.iter().filter(|(_, k, _)| k == "model").last() {
            cfg.set("model", v)?;
        }
        for (lineno, k, v) in &pairs {
            if k == "preset" || k == "model" {
                continue;
            }
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {lineno}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Overrides one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
            }
        }
        fn list(v: &str) -> Vec<String> {
            v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        }
        match key {
            "name" => self.name = value.to_string(),
            "task" => {
                self.task = match value {
                    "assimilate" => Task::Assimilate,
                    "compare" => Task::ComparePreconditioners,
                    _ => return Err(Error::Config(format!("unknown task `{value}`"))),
                }
            }
            "model" => {
                let name = self.name.clone();
                *self = match value {
                    "advection_diffusion" | "ad" => Self::ad_base(&name),
                    "lorenz95" | "lorenz" => Self::lorenz_base(&name, 40),
                    _ => return Err(Error::Config(format!("unknown model `{value}`"))),
                };
            }
            "n" => self.n = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "c_d" => self.c_d = num(key, value)?,
            "c_a" => self.c_a = num(key, value)?,
            "forcing" => self.forcing = num(key, value)?,
            "spinup" => self.spinup = num(key, value)?,
            "window" => self.window = num(key, value)?,
            "forecast" => self.forecast = num(key, value)?,
            "obs_stride" => self.obs_stride = num(key, value)?,
            "obs_offset" => self.obs_offset = num(key, value)?,
            "obs_noise" => self.obs_noise = flag(key, value)?,
            "b" => {
                let variance = self.b_variance();
                self.b = match value {
                    "identity" => CovarianceKind::ScaledIdentity { variance },
                    "exp_decay" => CovarianceKind::ExpDecay {
                        variance,
                        length: 50.0,
                    },
                    _ => return Err(Error::Config(format!("unknown covariance `{value}`"))),
                }
            }
            "b_variance" => {
                let v = num(key, value)?;
                match &mut self.b {
                    CovarianceKind::ScaledIdentity { variance }
                    | CovarianceKind::ExpDecay { variance, .. } => *variance = v,
                }
            }
            "b_length" => match &mut self.b {
                CovarianceKind::ExpDecay { length, .. } => *length = num(key, value)?,
                CovarianceKind::ScaledIdentity { .. } => {
                    return Err(Error::Config("`b_length` needs `b = exp_decay`".into()))
                }
            },
            "q_variance" => self.q_variance = num(key, value)?,
            "r_variance" => self.r_variance = num(key, value)?,
            "rank" => {
                self.ranks = list(value)
                    .iter()
                    .map(|r| num(key, r))
                    .collect::<Result<_>>()?
            }
            "trunc_tol" => self.trunc_tol = num(key, value)?,
            "max_iter" => self.max_iter = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "outer" => self.n_outer = num(key, value)?,
            "precond" => self.precond = list(value),
            "mode" => {
                self.modes = match value {
                    "lowrank" => RunModes::Only(SolverMode::LowRank),
                    "fullrank" => RunModes::Only(SolverMode::FullRank),
                    "both" => RunModes::Both,
                    _ => return Err(Error::Config(format!("unknown mode `{value}`"))),
                }
            }
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn b_variance(&self) -> f64 {
        match self.b {
            CovarianceKind::ScaledIdentity { variance } | CovarianceKind::ExpDecay { variance, .. } => {
                variance
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return bad("ranks must be a non-empty list of positive integers".into());
        }
        if self.precond.is_empty() {
            return bad("at least one preconditioner is needed".into());
        }
        for p in &self.precond {
            PreconditionerSpec::parse(p)?;
        }
        if self.task == Task::Assimilate && self.precond.len() != 1 {
            return bad("assimilation runs take exactly one preconditioner".into());
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.n_outer == 0 {
            return bad("outer must be at least 1".into());
        }
        if self.obs_offset >= self.n || self.obs_stride == 0 {
            return bad(format!(
                "observation stride {} / offset {} invalid for n = {}",
                self.obs_stride, self.obs_offset, self.n
            ));
        }
        Ok(())
    }

    pub fn gmres(&self, rank: usize) -> Result<GmresConfig> {
        GmresConfig::new(
            self.max_iter,
            self.tol,
            TruncationPolicy::new(Some(rank), self.trunc_tol)?,
        )
    }

    fn dynamics(&self) -> Result<DynamicsModel> {
        Ok(match self.model {
            ModelKind::AdvectionDiffusion => DynamicsModel::AdvectionDiffusion(
                AdvectionDiffusionModel::new(self.n, self.dt, self.c_d, self.c_a)?,
            ),
            ModelKind::Lorenz95 => {
                DynamicsModel::Lorenz95(Lorenz95Model::new(self.n, self.forcing, self.dt)?)
            }
        })
    }

    /// Truth, background and observations, all drawn from one seeded stream
    /// in a fixed order: spin-up perturbation, background error, then
    /// observation noise for `k = 0..=N`.
    pub fn build_problem(&self) -> Result<AssimilationProblem> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let model = self.dynamics()?;
        let x0 = match &model {
            DynamicsModel::AdvectionDiffusion(m) => m.initial_condition(),
            DynamicsModel::Lorenz95(m) => {
                let start = Vector::from_fn(self.n, |_, _| {
                    self.forcing + rng.sample::<f64, _>(StandardNormal)
                });
                let spun = propagate(m, &start, self.spinup + 1)?;
                spun.column(self.spinup).into_owned()
            }
        };
        let steps = self.window + 1;
        let truth = propagate(&model, &x0, steps + self.forecast)?;
        let obs = ObservationOperator::new(self.n, self.obs_stride, self.obs_offset)?;
        let cov_b = CovarianceModel::new(self.b, self.n)?;
        let cov_q = CovarianceModel::scaled_identity(self.q_variance, self.n)?;
        let cov_r = CovarianceModel::scaled_identity(self.r_variance, obs.p())?;
        let background = truth.column(0) + cov_b.sample(&mut rng);
        let mut y = Mat::zeros(obs.p(), steps);
        for k in 0..steps {
            let mut yk = obs.apply(&truth.column(k).into_owned())?;
            if self.obs_noise {
                yk += cov_r.sample(&mut rng);
            }
            y.set_column(k, &yk);
        }
        AssimilationProblem::new(model, obs, cov_b, cov_q, cov_r, background, y, truth)
    }
}

/// One low-rank run at a given rank.
#[derive(Debug, Clone)]
pub struct RankRun {
    pub rank: usize,
    pub result: ExperimentResult,
    pub storage: StorageReport,
}

/// One preconditioner's LR-GMRES history.
#[derive(Debug, Clone)]
pub struct PrecondRun {
    pub name: String,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub problem: AssimilationProblem,
    pub full_rank: Option<ExperimentResult>,
    pub low_rank: Vec<RankRun>,
    pub comparisons: Vec<PrecondRun>,
}

impl RunOutput {
    pub fn storage(&self) -> Vec<StorageReport> {
        let (n, w, p) = (self.problem.n(), self.problem.window, self.problem.p());
        self.config
            .ranks
            .iter()
            .map(|&r| storage_report(n, w, p, r))
            .collect()
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let problem = cfg.build_problem()?;
    let mut out = RunOutput {
        config: cfg.clone(),
        problem,
        full_rank: None,
        low_rank: Vec::new(),
        comparisons: Vec::new(),
    };
    let pb = &out.problem;
    match cfg.task {
        Task::Assimilate => {
            let spec = PreconditionerSpec::parse(&cfg.precond[0])?;
            if cfg.modes.includes(SolverMode::FullRank) {
                let outer = OuterLoopConfig::new(
                    cfg.n_outer,
                    cfg.gmres(cfg.ranks[0])?,
                    spec,
                    SolverMode::FullRank,
                )?;
                out.full_rank = Some(gauss_newton(pb, &outer)?);
            }
            if cfg.modes.includes(SolverMode::LowRank) {
                for &rank in &cfg.ranks {
                    let outer =
                        OuterLoopConfig::new(cfg.n_outer, cfg.gmres(rank)?, spec, SolverMode::LowRank)?;
                    let result = gauss_newton(pb, &outer)?;
                    out.low_rank.push(RankRun {
                        rank,
                        storage: storage_report(pb.n(), pb.window, pb.p(), rank),
                        result,
                    });
                }
            }
        }
        Task::ComparePreconditioners => {
            let traj = pb.first_guess()?;
            let sys = linearise(pb, &traj)?;
            let gm = cfg.gmres(cfg.ranks[0])?;
            for name in &cfg.precond {
                let spec = PreconditionerSpec::parse(name)?;
                let (b, d) = build_rhs(pb, &traj, &gm.trunc)?;
                let (_, report) = low_rank_solve(&sys, b, d, spec, &gm)?;
                out.comparisons.push(PrecondRun {
                    name: name.clone(),
                    report,
                });
            }
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.unwrap_or(f64::NAN).to_string()
}

pub fn rmse_csv(no_assim: &[f64], full: Option<&[f64]>, low: Option<&[f64]>) -> String {
    let mut s = String::from("step,no_assim,full_rank,low_rank\n");
    for (t, b) in no_assim.iter().enumerate() {
        let f = full.map(|v| v[t]);
        let l = low.map(|v| v[t]);
        writeln!(s, "{t},{b},{},{}", fmt_opt(f), fmt_opt(l)).unwrap();
    }
    s
}

/// Iterations are numbered consecutively across outer loops; each outer
/// loop contributes its initial residual followed by one row per iteration.
pub fn residual_csv<'a>(runs: impl IntoIterator<Item = (&'a str, &'a [SolveReport])>) -> String {
    let mut s = String::from("iteration,preconditioner,rotated_residual\n");
    for (name, reports) in runs {
        let mut it = 0;
        for rep in reports {
            for r in &rep.residuals {
                writeln!(s, "{it},{name},{r}").unwrap();
                it += 1;
            }
        }
    }
    s
}

pub fn storage_csv(rows: &[StorageReport]) -> String {
    let mut s = String::from("n,N,p,rank,full_elems,low_elems,reduction\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.n, r.window, r.p, r.rank, r.full_elems, r.low_elems, r.reduction
        )
        .unwrap();
    }
    s
}

/// Components of the last window state for truth, background and analyses.
pub fn state_final_csv(truth: &Vector, no_assim: &Vector, full: Option<&Vector>, low: Option<&Vector>) -> String {
    let mut s = String::from("index,truth,no_assim,full_rank,low_rank\n");
    for i in 0..truth.len() {
        writeln!(
            s,
            "{i},{},{},{},{}",
            truth[i],
            no_assim[i],
            fmt_opt(full.map(|v| v[i])),
            fmt_opt(low.map(|v| v[i]))
        )
        .unwrap();
    }
    s
}

/// Writes the CSVs under `dir`. With several ranks each one gets a
/// `rank_<r>` subdirectory; `storage.csv` always sits at the top.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, body: String| -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put(dir.join("storage.csv"), storage_csv(&out.storage()))?;

    let pb = &out.problem;
    match out.config.task {
        Task::ComparePreconditioners => {
            let runs = out
                .comparisons
                .iter()
                .map(|c| (c.name.as_str(), std::slice::from_ref(&c.report)));
            put(dir.join("residual.csv"), residual_csv(runs))?;
        }
        Task::Assimilate => {
            let last = pb.window;
            let background = propagate(&pb.model, &pb.background, pb.truth.ncols())?;
            let background_rmse = crate::assimilation::rmse(&background, &pb.truth)?;
            let truth_final = pb.truth.column(last).into_owned();
            let bg_final = background.column(last).into_owned();
            let full = out.full_rank.as_ref();
            let full_final = full.map(|r| r.analysis.column(last).into_owned());
            let precond = out.config.precond[0].as_str();

            let mut targets: Vec<(PathBuf, Option<&RankRun>)> = Vec::new();
            if out.low_rank.is_empty() {
                targets.push((dir.to_path_buf(), None));
            } else if out.low_rank.len() == 1 {
                targets.push((dir.to_path_buf(), out.low_rank.first()));
            } else {
                for rr in &out.low_rank {
                    targets.push((dir.join(format!("rank_{}", rr.rank)), Some(rr)));
                }
            }
            for (sub, low) in targets {
                let low_res = low.map(|r| &r.result);
                put(
                    sub.join("rmse.csv"),
                    rmse_csv(
                        &background_rmse,
                        full.map(|r| r.rmse.as_slice()),
                        low_res.map(|r| r.rmse.as_slice()),
                    ),
                )?;
                let reports: &[SolveReport] = low_res.map(|r| r.reports.as_slice()).unwrap_or(&[]);
                put(sub.join("residual.csv"), residual_csv([(precond, reports)]))?;
                let low_final = low_res.map(|r| r.analysis.column(last).into_owned());
                put(
                    sub.join("state_final.csv"),
                    state_final_csv(&truth_final, &bg_final, full_final.as_ref(), low_final.as_ref()),
                )?;
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds_a_valid_config() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn preset_dimensions() {
        let c = ExperimentConfig::preset("precond_compare_440").unwrap();
        let pb = c.build_problem().unwrap();
        assert_eq!((pb.n(), pb.window, pb.p()), (10, 19, 4));
        let c = ExperimentConfig::preset("precond_compare_880").unwrap();
        let pb = c.build_problem().unwrap();
        assert_eq!((pb.n(), pb.window, pb.p()), (20, 19, 4));
        let c = ExperimentConfig::preset("lorenz40_noisy_partial").unwrap();
        assert_eq!(ObservationOperator::new(c.n, c.obs_stride, c.obs_offset).unwrap().p(), 8);
        let c = ExperimentConfig::preset("ad_partial").unwrap();
        assert_eq!(ObservationOperator::new(c.n, c.obs_stride, c.obs_offset).unwrap().p(), 20);
    }

    #[test]
    fn config_file_overrides_preset() {
        let text = "# small run\nseed = 7\npreset = ad_partial\nwindow = 9 # shorter\nrank = 5, 1\nmode = fullrank\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.window, 9);
        assert_eq!(cfg.ranks, vec![5, 1]);
        assert_eq!(cfg.modes, RunModes::Only(SolverMode::FullRank));
        assert_eq!(cfg.obs_stride, 5);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(matches!(ExperimentConfig::parse("colour = blue"), Err(Error::Config(_))));
        assert!(ExperimentConfig::parse("window = many").is_err());
        assert!(ExperimentConfig::parse("just text").is_err());
        assert!(ExperimentConfig::parse("precond = bogus").is_err());
        assert!(ExperimentConfig::parse("rank = 0").is_err());
    }

    #[test]
    fn model_key_switches_defaults() {
        let cfg = ExperimentConfig::parse("n = 12\nmodel = lorenz95\nwindow = 5").unwrap();
        assert_eq!(cfg.model, ModelKind::Lorenz95);
        assert_eq!((cfg.n, cfg.window, cfg.dt), (12, 5, 5e-3));
    }

    #[test]
    fn same_seed_same_problem() {
        let mut cfg = ExperimentConfig::preset("lorenz40_noisy_full").unwrap();
        cfg.spinup = 50;
        cfg.window = 5;
        cfg.forecast = 3;
        let a = cfg.build_problem().unwrap();
        let b = cfg.build_problem().unwrap();
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.background, b.background);
        cfg.seed = 1;
        assert_ne!(cfg.build_problem().unwrap().background, a.background);
    }

    #[test]
    fn csv_layouts() {
        let s = rmse_csv(&[1.0, 0.5], None, Some(&[0.25, 0.125]));
        assert_eq!(s, "step,no_assim,full_rank,low_rank\n0,1,NaN,0.25\n1,0.5,NaN,0.125\n");
        let s = storage_csv(&[storage_report(100, 199, 100, 20)]);
        assert_eq!(s.lines().nth(1).unwrap(), "100,199,100,20,20000,6000,0.7");
    }
}
