//! Monte-Carlo experiment runner.
//!
//! Replication `r` draws its data from stream `r` of the root seed, and each
//! method draws tie-breaking randomness from a child stream named after it,
//! so results do not depend on scheduling or on which other methods run.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scip_core::conformal::{LabelSpace, NonconformityScore};
use scip_core::data::hide_labels;
use scip_core::metrics::{mean_stderr, mfcr_estimate, replication_metrics};
use scip_core::procedures::{
    run_cfbh, run_cfbh_plus, run_cfbh_plus_plus, run_infoscop, run_infosp, run_infosp_modified, run_infosp_plus,
    run_infosp_plus_modified, run_infosp_plus_plus, run_naive, run_selective_classification, ClassTarget,
    EnhancedTrust, ProcedureConfig, ProcedureOutput, Sidedness,
};
use scip_core::simgen::{ClassificationDgp, RegressionDgp, SoftmaxRegression, SyntheticProfile};
use scip_core::trust::{OptimizerConfig, TrainingConfig};
use scip_core::{
    InformativeConstraint, Label, LabeledSample, ProbabilityModel, Regressor, RngStream, UnlabeledSample,
};

use crate::config::{ExperimentConfig, ExperimentKind, Method, Profile};
use crate::error::RunError;

pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// One row of `replications.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub experiment: String,
    pub method: String,
    pub rep: usize,
    pub alpha: f64,
    /// Empty outside the regression sweep.
    pub eta: Option<f64>,
    pub fcp: f64,
    pub cpow: f64,
    pub rpow: f64,
    pub n_selected: usize,
}

impl ReplicationRow {
    /// False coverages, recovered exactly from `fcp · n_selected`.
    pub fn n_false(&self) -> usize {
        (self.fcp * self.n_selected as f64).round() as usize
    }
}

/// One row of `aggregate.csv`: means and Monte-Carlo standard errors over
/// replications for a `(method, alpha, eta)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub method: String,
    pub alpha: f64,
    pub eta: Option<f64>,
    pub reps: usize,
    pub fcr: f64,
    pub fcr_stderr: f64,
    pub cpow: f64,
    pub cpow_stderr: f64,
    pub rpow: f64,
    pub rpow_stderr: f64,
    /// Empty when no replication selected anything.
    pub mfcr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub replications: Vec<ReplicationRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl Report {
    pub fn cell(&self, method: Method, alpha: f64, eta: Option<f64>) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.method == method.name() && a.alpha == alpha && a.eta == eta)
    }
}

/// Groups consecutive rows of the same `(method, alpha, eta)` cell, in order
/// of first appearance.
pub fn aggregate_rows(rows: &[ReplicationRow]) -> Vec<AggregateRow> {
    let mut cells: Vec<(&ReplicationRow, Vec<&ReplicationRow>)> = Vec::new();
    for row in rows {
        let same = |a: &ReplicationRow| a.method == row.method && a.alpha == row.alpha && a.eta == row.eta;
        match cells.iter_mut().find(|(head, _)| same(head)) {
            Some((_, members)) => members.push(row),
            None => cells.push((row, vec![row])),
        }
    }
    cells
        .into_iter()
        .map(|(head, members)| {
            let col = |f: fn(&ReplicationRow) -> f64| mean_stderr(&members.iter().map(|r| f(r)).collect::<Vec<_>>());
            let n_false: Vec<usize> = members.iter().map(|r| r.n_false()).collect();
            let n_sel: Vec<usize> = members.iter().map(|r| r.n_selected).collect();
            let (fcr, cpow, rpow) = (col(|r| r.fcp), col(|r| r.cpow), col(|r| r.rpow));
            AggregateRow {
                experiment: head.experiment.clone(),
                method: head.method.clone(),
                alpha: head.alpha,
                eta: head.eta,
                reps: members.len(),
                fcr: fcr.mean,
                fcr_stderr: fcr.stderr,
                cpow: cpow.mean,
                cpow_stderr: cpow.stderr,
                rpow: rpow.mean,
                rpow_stderr: rpow.stderr,
                mfcr: mfcr_estimate(&n_false, &n_sel).ok(),
            }
        })
        .collect()
}

/// Grid cell: a target level and, for the regression sweep, a
/// misspecification level.
#[derive(Debug, Clone, Copy)]
struct GridPoint {
    alpha: f64,
    eta: Option<f64>,
}

fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    match cfg.experiment {
        ExperimentKind::RegressionSweep => cfg
            .etas
            .iter()
            .flat_map(|&eta| cfg.alphas.iter().map(move |&alpha| GridPoint { alpha, eta: Some(eta) }))
            .collect(),
        _ => cfg.alphas.iter().map(|&alpha| GridPoint { alpha, eta: None }).collect(),
    }
}

/// Data blocks shared by all methods in one replication.
struct Blocks {
    cal: Vec<LabeledSample>,
    cal0: Vec<LabeledSample>,
    train: Vec<LabeledSample>,
    test: Vec<UnlabeledSample>,
    truth: Vec<Label>,
}

impl Blocks {
    fn draw(cfg: &ExperimentConfig, mut sample: impl FnMut(usize) -> Vec<LabeledSample>) -> Self {
        let cal = sample(cfg.n);
        let (test, truth) = hide_labels(&sample(cfg.m));
        let cal0 = sample(cfg.cal0);
        let train = sample(cfg.train);
        Self { cal, cal0, train, test, truth }
    }
}

/// Models and set family for one grid cell.
struct Task {
    score: NonconformityScore,
    constraint: InformativeConstraint,
    space: LabelSpace,
    mu_hat: Option<Arc<dyn Regressor>>,
    p_hat: Option<Arc<dyn ProbabilityModel>>,
    c0: f64,
}

fn training(cfg: &ExperimentConfig) -> TrainingConfig {
    TrainingConfig { lambda: cfg.lambda, degree: cfg.degree, optimizer: OptimizerConfig::default() }
}

fn run_method(
    method: Method,
    cfg: &ExperimentConfig,
    task: &Task,
    blocks: &Blocks,
    alpha: f64,
    stream: RngStream,
) -> Result<ProcedureOutput, RunError> {
    let config = ProcedureConfig::new(alpha, task.constraint, task.score.clone(), task.space);
    let Blocks { cal, cal0, train, test, .. } = blocks;
    let mu = || task.mu_hat.clone().expect("regression task");
    let p = || task.p_hat.clone().expect("classification task");
    let one_sided = Sidedness::OneSided { c0: task.c0 };
    let out = match method {
        Method::Naive => run_naive(cal, test, &config)?,
        Method::InfoSp => run_infosp(cal, test, &config)?,
        Method::InfoSpPlus => run_infosp_plus(cal, cal0, test, &config, stream)?,
        Method::InfoSpPlusPlus => {
            let trust = match &task.p_hat {
                Some(p) => EnhancedTrust::ClassMass(p.clone()),
                None => EnhancedTrust::Classifier { train: train.clone(), training: training(cfg) },
            };
            run_infosp_plus_plus(cal, cal0, test, &trust, &config, stream)?
        }
        Method::InfoSpModified => run_infosp_modified(cal, cal0, test, &config)?,
        Method::InfoSpPlusModified => run_infosp_plus_modified(cal, cal0, test, &config, stream)?,
        Method::InfoScop => {
            let (a, _) = cfg.split_sizes();
            run_infoscop(&cal[..a], &cal[a..], test, &mu(), cfg.screen_c, cfg.screen_alpha, &config, stream)?
        }
        Method::Cfbh => run_cfbh(cal, test, &mu(), task.c0, &config, stream)?,
        Method::CfbhPlus => run_cfbh_plus(cal, test, &mu(), one_sided, &config, stream)?,
        Method::CfbhPlusPlus => {
            run_cfbh_plus_plus(train, cal, test, &mu(), one_sided, training(cfg), &config, stream)?
        }
        Method::Fasi => run_selective_classification(cal, test, &p(), ClassTarget::Single(cfg.y0), alpha, stream)?,
        Method::ZhaoSu => run_selective_classification(cal, test, &p(), ClassTarget::Argmax, alpha, stream)?,
    };
    Ok(out)
}

/// All rows of replication `rep`, ordered by grid point then method.
fn replicate(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<Vec<ReplicationRow>>, RunError> {
    let root = RngStream::new(cfg.seed, 0).derive(rep as u64);
    let mut rng = root.derive_named("data").rng();
    let points = grid(cfg);
    let (blocks, tasks): (Blocks, Vec<Task>) = match cfg.experiment {
        ExperimentKind::RegressionSweep => {
            let sampler = RegressionDgp::new(0.0);
            let blocks = Blocks::draw(cfg, |k| sampler.sample(k, &mut rng));
            let tasks = points
                .iter()
                .map(|pt| {
                    let mu = RegressionDgp::new(pt.eta.expect("eta grid")).mu_hat();
                    Task {
                        score: NonconformityScore::AbsoluteResidual(mu.clone()),
                        constraint: InformativeConstraint::PositiveInterval,
                        space: LabelSpace::Real,
                        mu_hat: Some(mu),
                        p_hat: None,
                        c0: cfg.c0,
                    }
                })
                .collect();
            (blocks, tasks)
        }
        ExperimentKind::ClassificationSweep => {
            let dgp = ClassificationDgp;
            let fit_block = dgp.sample(cfg.n, &mut rng);
            let model: Arc<dyn ProbabilityModel> = Arc::new(SoftmaxRegression::fit(
                &fit_block,
                ClassificationDgp::CLASSES,
                OptimizerConfig::default(),
            ));
            let blocks = Blocks::draw(cfg, |k| dgp.sample(k, &mut rng));
            let tasks = points
                .iter()
                .map(|_| Task {
                    score: NonconformityScore::OneMinusProb(model.clone()),
                    constraint: InformativeConstraint::MaxSize(cfg.max_size),
                    space: LabelSpace::Classes(ClassificationDgp::CLASSES),
                    mu_hat: None,
                    p_hat: Some(model.clone()),
                    c0: cfg.c0,
                })
                .collect();
            (blocks, tasks)
        }
        ExperimentKind::SyntheticReal => {
            let profile = match cfg.profile {
                Profile::CifarLike => SyntheticProfile::CifarLike { feasible_fraction: cfg.feasible_fraction },
                Profile::DtiLike => {
                    SyntheticProfile::DtiLike { feasible_fraction: cfg.feasible_fraction, threshold: cfg.threshold }
                }
            };
            let blocks = Blocks::draw(cfg, |k| profile.sample(k, &mut rng));
            let constraint = match profile {
                SyntheticProfile::CifarLike { .. } => InformativeConstraint::MaxSize(cfg.max_size),
                SyntheticProfile::DtiLike { .. } => profile.constraint(),
            };
            let tasks = points
                .iter()
                .map(|_| Task {
                    score: profile.score(),
                    constraint,
                    space: profile.label_space(),
                    mu_hat: profile.mu_hat(),
                    p_hat: profile.p_hat(),
                    c0: cfg.threshold,
                })
                .collect();
            (blocks, tasks)
        }
        ExperimentKind::EquivalenceSuite => unreachable!("equivalence suite has no replications"),
    };

    points
        .iter()
        .zip(&tasks)
        .enumerate()
        .map(|(g, (pt, task))| {
            cfg.methods
                .iter()
                .map(|&method| {
                    let stream = root.derive_named(method.name()).derive(g as u64);
                    let out = run_method(method, cfg, task, &blocks, pt.alpha, stream)?;
                    let metrics = replication_metrics(&out.reported, &blocks.truth)?;
                    Ok(ReplicationRow {
                        experiment: cfg.experiment.name().to_owned(),
                        method: method.name().to_owned(),
                        rep,
                        alpha: pt.alpha,
                        eta: pt.eta,
                        fcp: metrics.fcp,
                        cpow: metrics.cpow,
                        rpow: metrics.rpow,
                        n_selected: metrics.n_selected,
                    })
                })
                .collect()
        })
        .collect()
}

/// Runs every replication on `jobs` worker threads (0 picks the number of
/// cores). Rows are ordered by grid point, method and replication whatever
/// the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Report, RunError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let per_rep: Vec<Vec<Vec<ReplicationRow>>> =
        pool.install(|| (0..cfg.reps).into_par_iter().map(|rep| replicate(cfg, rep)).collect::<Result<_, _>>())?;
    let cells = grid(cfg).len() * cfg.methods.len();
    let mut replications = Vec::with_capacity(cells * cfg.reps);
    let n_methods = cfg.methods.len();
    for cell in 0..cells {
        let (g, k) = (cell / n_methods, cell % n_methods);
        replications.extend(per_rep.iter().map(|rows| rows[g][k].clone()));
    }
    let aggregates = aggregate_rows(&replications);
    Ok(Report { replications, aggregates })
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_owned(), source }
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunError> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(io_error(path))
}

pub fn write_report(report: &Report, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    write_csv(&dir.join(REPLICATIONS_FILE), &report.replications)?;
    write_csv(&dir.join(AGGREGATE_FILE), &report.aggregates)
}

pub fn read_replications(path: &Path) -> Result<Vec<ReplicationRow>, RunError> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn small(text: &str) -> ExperimentConfig {
        RawConfig::parse(text).unwrap().resolve().unwrap()
    }

    #[test]
    fn regression_rows_are_ordered() {
        let cfg = small("experiment=regression-sweep\nn=100\nm=50\nreps=3\neta=0,1\nmethods=naive,infosp+,cfbh+\n");
        let report = run_experiment(&cfg, 2).unwrap();
        assert_eq!(report.replications.len(), 2 * 3 * 3);
        assert_eq!(report.aggregates.len(), 6);
        let first: Vec<_> = report.replications[..3].iter().map(|r| (r.method.as_str(), r.rep)).collect();
        assert_eq!(first, vec![("naive", 0), ("naive", 1), ("naive", 2)]);
        assert_eq!(report.replications[9].eta, Some(1.0));
    }

    #[test]
    fn parallel_matches_serial() {
        let cfg = small("experiment=classification-sweep\nn=80\nm=40\nreps=4\nalpha=0.1,0.3\nmethods=infosp,infosp++,zhao-su\n");
        assert_eq!(run_experiment(&cfg, 1).unwrap(), run_experiment(&cfg, 3).unwrap());
    }

    #[test]
    fn csv_roundtrip_reaggregates() {
        let cfg = small("experiment=synthetic-real\nprofile=dti-like\nn=100\nm=60\nreps=3\nmethods=naive,cfbh+,infosp+\n");
        let report = run_experiment(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report(&report, dir.path()).unwrap();
        let rows = read_replications(&dir.path().join(REPLICATIONS_FILE)).unwrap();
        assert_eq!(rows, report.replications);
        assert_eq!(aggregate_rows(&rows), report.aggregates);
        let text = fs::read_to_string(dir.path().join(AGGREGATE_FILE)).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.starts_with("experiment,method,alpha,eta,reps,fcr,fcr_stderr"));
    }

    #[test]
    fn infeasible_profile_reports_nothing() {
        let cfg = small("experiment=synthetic-real\nprofile=cifar-like\nfeasible_fraction=0\nn=60\nm=30\nreps=2\nmethods=naive,infosp,infosp+,infosp++\n");
        let report = run_experiment(&cfg, 1).unwrap();
        assert!(report.replications.iter().all(|r| r.n_selected == 0));
    }
}
