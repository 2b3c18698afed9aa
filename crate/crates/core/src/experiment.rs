//! Seeded experiment harness: draw instances, run rankers over a `phi` grid,
//! score them against the realized groups and emit fixed-format CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairspec::u_phi;
use crate::io::read_instance;
use crate::metrics::evaluate;
use crate::noiselab::{
    estimate_group_size, estimate_group_size_unbiased, flip_labels, half_half_instance, posterior_probs,
    synth_multigroup, synth_nonuniform_fdr, tau_for_gap, FdrSynthSpec, RandomizedResponseParams,
};
use crate::rankers;
use crate::rng::{derive_path, derive_seed, rng_from};
use crate::types::{FairnessSpec, GammaMode, GroupSample, Instance, Ranking, SpecParams, Structure};

/// How the group sizes behind randomized-response probabilities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeSource {
    /// The true sizes.
    True,
    /// `((1 - eta)/(1 - 2 eta)) ((1 - eta)|N_1| - eta |N_2|)`.
    Estimated,
    /// `((1 - eta)|N_1| - eta |N_2|) / (1 - 2 eta)`.
    #[default]
    Unbiased,
}

fn default_gap() -> f64 {
    0.3
}
fn default_low() -> f64 {
    0.1
}
fn default_high() -> f64 {
    0.4
}
fn default_share() -> f64 {
    0.5
}

/// Where each iteration's instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSource {
    /// Two groups, mixture probabilities. `tau` wins over `gap` when both are set.
    FdrSynth {
        m: usize,
        n: usize,
        #[serde(default = "default_gap")]
        gap: f64,
        #[serde(default)]
        tau: Option<f64>,
    },
    Multigroup {
        m: usize,
        n: usize,
        p: usize,
        #[serde(default = "default_low")]
        fdr_low: f64,
        #[serde(default = "default_high")]
        fdr_high: f64,
    },
    HalfHalf { m: usize, n: usize, p: usize },
    /// Two groups; each true label is flipped with probability `eta`.
    RandomizedResponse {
        m: usize,
        n: usize,
        eta: f64,
        /// Chance an item truly belongs to the first group.
        #[serde(default = "default_share")]
        share: f64,
        #[serde(default)]
        sizes: SizeSource,
    },
    /// A fixed instance with truth, reused by every iteration.
    File { path: PathBuf },
}

impl InstanceSource {
    pub fn name(&self) -> &'static str {
        match self {
            InstanceSource::FdrSynth { .. } => "fdr-synth",
            InstanceSource::Multigroup { .. } => "multigroup",
            InstanceSource::HalfHalf { .. } => "half-half",
            InstanceSource::RandomizedResponse { .. } => "randomized-response",
            InstanceSource::File { .. } => "file",
        }
    }

    /// Draws one instance. Sampled truth is attached when the generator has none.
    pub fn generate(&self, seed: u64) -> Result<Instance> {
        let inst = match self {
            InstanceSource::FdrSynth { m, n, gap, tau } => {
                let base = FdrSynthSpec::new(*m, *n, 0.0)?;
                let tau = match tau {
                    Some(t) => *t,
                    None => tau_for_gap(&base, *gap)?,
                };
                synth_nonuniform_fdr(&base.with_tau(tau)?, seed)?
            }
            InstanceSource::Multigroup {
                m,
                n,
                p,
                fdr_low,
                fdr_high,
            } => synth_multigroup(*m, *n, *p, *fdr_low, *fdr_high, seed)?,
            InstanceSource::HalfHalf { m, n, p } => {
                let mut rng = rng_from(seed);
                let values: Vec<f64> = (0..*m).map(|_| rng.random()).collect();
                let shape = half_half_instance(*m, *n, *p)?;
                Instance::from_values(values, *n, shape.probs().clone(), shape.structure(), None)?
            }
            InstanceSource::RandomizedResponse {
                m,
                n,
                eta,
                share,
                sizes,
            } => randomized_response_instance(*m, *n, *eta, *share, *sizes, seed)?,
            InstanceSource::File { path } => read_instance(path)?,
        };
        if inst.truth().is_some() {
            return Ok(inst);
        }
        let truth = crate::noiselab::sample_groups(inst.probs(), inst.structure(), derive_seed(seed, STREAM_TRUTH))?;
        inst.with_truth(Some(truth))
    }
}

const STREAM_TRUTH: u64 = 21;

fn randomized_response_instance(m: usize, n: usize, eta: f64, share: f64, sizes: SizeSource, seed: u64) -> Result<Instance> {
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::ConfigInvalid(format!("share = {share} is outside [0, 1]")));
    }
    let params = RandomizedResponseParams::symmetric(eta)?;
    let mut rng = rng_from(seed);
    let values: Vec<f64> = (0..m).map(|_| rng.random()).collect();
    let labels: Vec<usize> = (0..m).map(|_| usize::from(rng.random::<f64>() >= share)).collect();
    let truth = GroupSample::from_labels(&labels, 2)?;
    let noisy = flip_labels(&truth, &params, derive_seed(seed, STREAM_TRUTH))?;
    let counts = noisy.sizes();
    let (n1, n2) = (counts[0] as f64, counts[1] as f64);
    let g = match sizes {
        SizeSource::True => truth.sizes().iter().map(|&s| s as f64).collect(),
        SizeSource::Estimated => {
            let a = estimate_group_size(n1, n2, eta)?;
            vec![a, m as f64 - a]
        }
        SizeSource::Unbiased => {
            let a = estimate_group_size_unbiased(n1, n2, eta)?;
            vec![a, m as f64 - a]
        }
    };
    let probs = posterior_probs(&noisy, &params, &g)?;
    Instance::from_values(values, n, probs, Structure::Disjoint, Some(truth))
}

/// Rankers the harness can run. Group-based baselines see most-likely-group
/// imputation unless the name ends in `-indep` (groups sampled from `P`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Nresilient,
    Uncons,
    Csv,
    Sj,
    Gak,
    Mc,
    CsvIndep,
    SjIndep,
    GakIndep,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Nresilient,
        Algorithm::Uncons,
        Algorithm::Csv,
        Algorithm::Sj,
        Algorithm::Gak,
        Algorithm::Mc,
        Algorithm::CsvIndep,
        Algorithm::SjIndep,
        Algorithm::GakIndep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Nresilient => "nresilient",
            Algorithm::Uncons => "uncons",
            Algorithm::Csv => "csv",
            Algorithm::Sj => "sj",
            Algorithm::Gak => "gak",
            Algorithm::Mc => "mc",
            Algorithm::CsvIndep => "csv-indep",
            Algorithm::SjIndep => "sj-indep",
            Algorithm::GakIndep => "gak-indep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown algorithm {s:?}")))
    }

    /// Fixed seed stream, independent of the configured algorithm list.
    fn stream(self) -> u64 {
        100 + self as u64
    }

    fn is_gak(self) -> bool {
        matches!(self, Algorithm::Gak | Algorithm::GakIndep)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Rd,
    Sl,
    PropRd,
    Ndcg,
    Utility,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Rd, Metric::Sl, Metric::PropRd, Metric::Ndcg, Metric::Utility];
}

fn all_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}
fn default_gamma() -> GammaMode {
    GammaMode::Heuristic
}
fn default_c() -> f64 {
    SpecParams::default().c
}
fn default_delta() -> f64 {
    SpecParams::default().delta
}
fn default_d() -> f64 {
    SpecParams::default().d
}
fn default_t() -> usize {
    crate::swapround::DEFAULT_T
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub algorithms: Vec<Algorithm>,
    /// Each value in `[1, p]`; conventionally listed from `p` down to 1.
    pub phi: Vec<f64>,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gamma")]
    pub gamma: GammaMode,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_t")]
    pub t: usize,
    /// Columns left out of this set are written blank.
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Fill `runtime_ms`; off by default so output is reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn params(&self) -> SpecParams {
        SpecParams {
            c: self.c,
            delta: self.delta,
            d: self.d,
        }
    }

    /// Checks everything that does not need an instance.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms listed".into());
        }
        if self.phi.is_empty() {
            return bad("empty phi grid".into());
        }
        if self.t == 0 {
            return bad("t must be at least 1".into());
        }
        if let Some(p) = self.declared_groups() {
            if let Some(phi) = self.phi.iter().find(|&&f| !(f >= 1.0 && f <= p as f64)) {
                return bad(format!("phi = {phi} is outside [1, {p}]"));
            }
        }
        let params = self.params();
        if !(params.c > 1.0) || !(params.delta > 0.0 && params.delta <= 0.5) || !(params.d > 2.0) {
            return bad("need c > 1, 0 < delta <= 1/2 and d > 2".into());
        }
        Ok(())
    }

    fn declared_groups(&self) -> Option<usize> {
        match &self.source {
            InstanceSource::FdrSynth { .. } | InstanceSource::RandomizedResponse { .. } => Some(2),
            InstanceSource::Multigroup { p, .. } | InstanceSource::HalfHalf { p, .. } => Some(*p),
            InstanceSource::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub rd: f64,
    pub sl: f64,
    pub prop_rd: f64,
    pub ndcg: f64,
    pub utility: f64,
}

impl RowMetrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Rd => self.rd,
            Metric::Sl => self.sl,
            Metric::PropRd => self.prop_rd,
            Metric::Ndcg => self.ndcg,
            Metric::Utility => self.utility,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Stuck,
    Infeasible,
    /// GAK away from `phi = 1`.
    Skipped,
    Error,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Stuck => "stuck",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Skipped => "skipped",
            RunStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub algorithm: Algorithm,
    pub phi: f64,
    /// 0-based.
    pub iter: usize,
    /// Seed the instance was drawn with.
    pub seed: u64,
    pub metrics: Option<RowMetrics>,
    pub runtime_ms: Option<f64>,
    pub status: RunStatus,
}

fn imputed_groups(probs: &Array2<f64>, structure: Structure) -> Result<GroupSample> {
    if structure.is_categorical() {
        rankers::impute_bayes(probs, structure)
    } else {
        Ok(GroupSample::new(probs.mapv(|v| v >= 0.5)))
    }
}

struct Unit<'a> {
    cfg: &'a ExperimentConfig,
    inst: &'a Instance,
    phi: f64,
    seed: u64,
    bayes: &'a Result<GroupSample>,
}

/// Everything besides the instance that a single ranking request needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOptions {
    pub phi: f64,
    pub gamma: GammaMode,
    pub params: SpecParams,
    pub t: usize,
    pub seed: u64,
}

/// Runs one algorithm. `bayes` is a precomputed most-likely imputation and is
/// recomputed when absent.
pub fn rank_with(alg: Algorithm, inst: &Instance, opts: &RankOptions, bayes: Option<&GroupSample>) -> Result<Ranking> {
    let (n, p) = (inst.n(), inst.p());
    let upper = u_phi(n, p, opts.phi)?;
    let seed = opts.seed;
    let groups = || -> Result<GroupSample> {
        match (alg, bayes) {
            (Algorithm::CsvIndep | Algorithm::SjIndep | Algorithm::GakIndep, _) => {
                rankers::impute_independent(inst.probs(), inst.structure(), seed)
            }
            (_, Some(g)) => Ok(g.clone()),
            (_, None) => imputed_groups(inst.probs(), inst.structure()),
        }
    };
    let spec = || FairnessSpec::new(upper.clone(), p, opts.gamma.clone(), opts.params, None);
    match alg {
        Algorithm::Uncons => Ok(rankers::uncons(inst)),
        Algorithm::Nresilient => rankers::nresilient_with(inst, &spec()?, opts.t, seed),
        Algorithm::Mc => rankers::mc_baseline(inst, &spec()?, opts.phi, seed),
        Algorithm::Csv | Algorithm::CsvIndep => rankers::csv_greedy(inst, &groups()?, upper.matrix().view()),
        Algorithm::Sj | Algorithm::SjIndep => rankers::sj_sample(inst, &groups()?, &upper, seed),
        Algorithm::Gak | Algorithm::GakIndep => rankers::gak_detgreedy(inst, &groups()?, &vec![1.0 / p as f64; p]),
    }
}

impl Unit<'_> {
    fn run(&self, alg: Algorithm) -> Result<Ranking> {
        let opts = RankOptions {
            phi: self.phi,
            gamma: self.cfg.gamma.clone(),
            params: self.cfg.params(),
            t: self.cfg.t,
            seed: derive_seed(self.seed, alg.stream()),
        };
        // a failed imputation is recomputed, and reported, only by algorithms that use it
        rank_with(alg, self.inst, &opts, self.bayes.as_ref().ok())
    }

    fn row(&self, alg: Algorithm, iter: usize) -> Result<ExperimentRow> {
        let mut row = ExperimentRow {
            algorithm: alg,
            phi: self.phi,
            iter,
            seed: self.seed,
            metrics: None,
            runtime_ms: None,
            status: RunStatus::Ok,
        };
        if alg.is_gak() && self.phi != 1.0 {
            row.status = RunStatus::Skipped;
            return Ok(row);
        }
        let start = Instant::now();
        let outcome = self.run(alg);
        if self.cfg.timing {
            row.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        match outcome {
            Ok(r) => {
                let truth = self.inst.truth().ok_or_else(|| Error::ConfigInvalid("instance has no truth".into()))?;
                let rep = evaluate(&r, self.inst, truth)?;
                row.metrics = Some(RowMetrics {
                    rd: rep.rd,
                    sl: rep.sl,
                    prop_rd: rep.prop_rd,
                    ndcg: rep.ndcg,
                    utility: rep.raw_utility,
                });
            }
            Err(Error::Stuck { .. }) => row.status = RunStatus::Stuck,
            Err(Error::Infeasible) => row.status = RunStatus::Infeasible,
            // configuration problems abort the run; anything else is recorded
            Err(e @ (Error::PhiOutOfRange { .. } | Error::ConfigInvalid(_) | Error::PsiAssumptionViolated { .. })) => {
                return Err(Error::ConfigInvalid(e.to_string()))
            }
            Err(_) => row.status = RunStatus::Error,
        }
        Ok(row)
    }
}

/// One row per (algorithm, phi, iteration), sorted by algorithm name, then
/// `phi` ascending, then iteration. Iteration `i` at grid position `g` draws
/// its instance with seed `derive_path(seed, [g, i])`; work runs on the
/// current rayon pool and the result does not depend on its size.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let fixed = match &cfg.source {
        InstanceSource::File { .. } => Some(cfg.source.generate(cfg.seed)?),
        _ => None,
    };
    if let Some(inst) = &fixed {
        if inst.truth().is_none() {
            return Err(Error::ConfigInvalid("instance file has no truth".into()));
        }
        let p = inst.p();
        if let Some(phi) = cfg.phi.iter().find(|&&f| !(f >= 1.0 && f <= p as f64)) {
            return Err(Error::ConfigInvalid(format!("phi = {phi} is outside [1, {p}]")));
        }
    }
    let units: Vec<(usize, usize)> = (0..cfg.phi.len())
        .flat_map(|g| (0..cfg.iterations).map(move |i| (g, i)))
        .collect();
    let nested: Vec<Vec<ExperimentRow>> = units
        .par_iter()
        .map(|&(g, i)| -> Result<Vec<ExperimentRow>> {
            let seed = derive_path(cfg.seed, &[g as u64, i as u64]);
            let owned;
            let inst = match &fixed {
                Some(inst) => inst,
                None => {
                    owned = cfg.source.generate(seed)?;
                    &owned
                }
            };
            let bayes = imputed_groups(inst.probs(), inst.structure());
            let unit = Unit {
                cfg,
                inst,
                phi: cfg.phi[g],
                seed,
                bayes: &bayes,
            };
            cfg.algorithms.iter().map(|&a| unit.row(a, i)).collect()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ExperimentRow> = nested.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.algorithm
            .as_str()
            .cmp(b.algorithm.as_str())
            .then(a.phi.total_cmp(&b.phi))
            .then(a.iter.cmp(&b.iter))
    });
    Ok(rows)
}

/// Six significant digits, plain decimal notation, trailing zeros trimmed.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub const CSV_HEADER: [&str; 11] = [
    "algorithm",
    "phi",
    "iter",
    "seed",
    "rd",
    "sl",
    "prop_rd",
    "ndcg",
    "utility",
    "runtime_ms",
    "status",
];

/// UTF-8 CSV with a header row; `metrics` selects which metric columns are filled.
pub fn write_csv(rows: &[ExperimentRow], metrics: &[Metric]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        let cell = |m: Metric| match (&r.metrics, metrics.contains(&m)) {
            (Some(v), true) => format_sig(v.get(m)),
            _ => String::new(),
        };
        w.write_record([
            r.algorithm.as_str().to_string(),
            format_sig(r.phi),
            r.iter.to_string(),
            r.seed.to_string(),
            cell(Metric::Rd),
            cell(Metric::Sl),
            cell(Metric::PropRd),
            cell(Metric::Ndcg),
            cell(Metric::Utility),
            r.runtime_ms.map(format_sig).unwrap_or_default(),
            r.status.as_str().to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se })
    }
}

/// Aggregate of one (algorithm, phi) cell over its successful iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub phi: f64,
    pub runs: usize,
    pub ok: usize,
    /// Absent when no run succeeded.
    pub rd: Option<MeanSe>,
    pub sl: Option<MeanSe>,
    pub prop_rd: Option<MeanSe>,
    pub ndcg: Option<MeanSe>,
    pub utility: Option<MeanSe>,
}

impl Summary {
    pub fn get(&self, m: Metric) -> Option<MeanSe> {
        match m {
            Metric::Rd => self.rd,
            Metric::Sl => self.sl,
            Metric::PropRd => self.prop_rd,
            Metric::Ndcg => self.ndcg,
            Metric::Utility => self.utility,
        }
    }
}

/// Cells in the row order of [`run_experiment`].
pub fn summarize(rows: &[ExperimentRow]) -> Vec<Summary> {
    let mut cells: BTreeMap<(&'static str, u64), (Algorithm, f64, Vec<&ExperimentRow>)> = BTreeMap::new();
    for r in rows {
        // total order on phi: its bit pattern is monotone for nonnegative values
        cells
            .entry((r.algorithm.as_str(), r.phi.to_bits()))
            .or_insert_with(|| (r.algorithm, r.phi, Vec::new()))
            .2
            .push(r);
    }
    cells
        .into_values()
        .map(|(algorithm, phi, rs)| {
            let ok: Vec<RowMetrics> = rs.iter().filter_map(|r| r.metrics).collect();
            let stat = |m: Metric| MeanSe::of(&ok.iter().map(|x| x.get(m)).collect::<Vec<_>>());
            Summary {
                algorithm,
                phi,
                runs: rs.len(),
                ok: ok.len(),
                rd: stat(Metric::Rd),
                sl: stat(Metric::Sl),
                prop_rd: stat(Metric::PropRd),
                ndcg: stat(Metric::Ndcg),
                utility: stat(Metric::Utility),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(algorithms: Vec<Algorithm>) -> ExperimentConfig {
        ExperimentConfig {
            source: InstanceSource::FdrSynth {
                m: 40,
                n: 10,
                gap: 0.3,
                tau: None,
            },
            algorithms,
            phi: vec![2.0, 1.5, 1.0],
            iterations: 2,
            seed: 5,
            gamma: GammaMode::Heuristic,
            c: 1.5,
            delta: 0.1,
            d: 3.0,
            t: 100,
            metrics: all_metrics(),
            output: None,
            timing: false,
        }
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(-0.0), "0");
        assert_eq!(format_sig(0.952561234), "0.952561");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(123.456789), "123.457");
        assert_eq!(format_sig(1234567.8), "1234568");
        assert_eq!(format_sig(0.000123456789), "0.000123457");
        assert_eq!(format_sig(-2.5), "-2.5");
    }

    #[test]
    fn uncons_rows_ignore_phi() {
        let mut cfg = small_config(vec![Algorithm::Uncons]);
        cfg.iterations = 1;
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.status == RunStatus::Ok));
        // one instance per grid point, so compare against a fixed instance
        let path = std::env::temp_dir().join(format!("fairrank-exp-{}.json", std::process::id()));
        let inst = cfg.source.generate(1).unwrap();
        crate::io::write_instance(&path, &inst).unwrap();
        cfg.source = InstanceSource::File { path: path.clone() };
        let rows = run_experiment(&cfg).unwrap();
        std::fs::remove_file(&path).unwrap();
        let rd: Vec<f64> = rows.iter().map(|r| r.metrics.unwrap().rd).collect();
        assert!(rd.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn row_count_and_gak_skips() {
        let cfg = small_config(Algorithm::ALL.to_vec());
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 9 * 3 * 2);
        for r in &rows {
            if r.algorithm.is_gak() {
                assert_eq!(r.status == RunStatus::Skipped, r.phi != 1.0);
            }
            assert_eq!(r.metrics.is_some(), r.status == RunStatus::Ok);
        }
    }

    #[test]
    fn csv_is_deterministic_and_thread_independent() {
        let cfg = small_config(vec![Algorithm::Nresilient, Algorithm::Csv, Algorithm::Mc]);
        let a = write_csv(&run_experiment(&cfg).unwrap(), &cfg.metrics).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| write_csv(&run_experiment(&cfg).unwrap(), &cfg.metrics).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("algorithm,phi,iter,seed,rd,sl,prop_rd,ndcg,utility,runtime_ms,status\n"));
    }

    #[test]
    fn unselected_metrics_are_blank() {
        let mut cfg = small_config(vec![Algorithm::Uncons]);
        cfg.metrics = vec![Metric::Rd];
        let out = write_csv(&run_experiment(&cfg).unwrap(), &cfg.metrics).unwrap();
        let line = out.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert!(!cells[4].is_empty());
        assert!(cells[5..10].iter().all(|c| c.is_empty()));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config(vec![Algorithm::Uncons]);
        cfg.iterations = 0;
        assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
        let mut cfg = small_config(vec![Algorithm::Uncons]);
        cfg.phi = vec![2.5];
        assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
        let json = r#"{"source":{"kind":"half-half","m":10,"n":5,"p":2},"algorithms":["uncons"],"phi":[1],"iterations":1}"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(cfg.gamma, GammaMode::Heuristic);
        assert!(ExperimentConfig::from_json(r#"{"source":{"kind":"nope"}}"#).is_err());
        assert!(Algorithm::parse("sj-indep").is_ok());
        assert!(Algorithm::parse("xyz").is_err());
    }

    #[test]
    fn randomized_response_sizes() {
        for sizes in [SizeSource::True, SizeSource::Estimated, SizeSource::Unbiased] {
            let src = InstanceSource::RandomizedResponse {
                m: 200,
                n: 10,
                eta: 0.2,
                share: 0.5,
                sizes,
            };
            let inst = src.generate(3).unwrap();
            assert!(inst.truth().is_some());
            assert!(inst.validate().is_ok());
        }
    }

    #[test]
    fn summary_groups_cells() {
        let cfg = small_config(vec![Algorithm::Uncons, Algorithm::Gak]);
        let rows = run_experiment(&cfg).unwrap();
        let s = summarize(&rows);
        assert_eq!(s.len(), 6);
        let gak_skipped = s.iter().find(|c| c.algorithm == Algorithm::Gak && c.phi == 2.0).unwrap();
        assert_eq!((gak_skipped.runs, gak_skipped.ok), (2, 0));
        assert!(gak_skipped.rd.is_none());
    }
}
