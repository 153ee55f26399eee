use std::sync::Arc;

use dino_core::linops::ParameterVector;
use dino_core::problems::{
    generate_classification, load_csv, partition, random_start, CsvSchema, Dataset, LabelKind,
    LossModel, NllsModel, Objective, QuadraticOracle, SoftmaxModel,
};

use crate::config::{ProblemKind, RunConfig};
use crate::error::Result;

/// Seeds derived from the run seed, one per random stream.
pub struct Seeds {
    pub data: u64,
    pub partition: u64,
    pub workers: u64,
    pub lipschitz: u64,
    pub init: u64,
}

impl Seeds {
    pub fn from_run(seed: u64) -> Self {
        Seeds {
            data: seed,
            partition: seed.wrapping_add(1),
            workers: seed.wrapping_add(2),
            lipschitz: seed.wrapping_add(3),
            init: seed.wrapping_add(4),
        }
    }
}

/// Everything a party needs to take part in a run. The driver and every
/// worker build the same value from the same config.
pub struct Problem {
    pub models: Vec<LossModel>,
    pub w0: ParameterVector,
    /// Closed-form optimum, for quadratic problems.
    pub oracle: Option<QuadraticOracle>,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.w0.dim()
    }

    pub fn checksums(&self) -> Vec<u64> {
        self.models.iter().map(|m| m.checksum()).collect()
    }

    /// `(1/m) Σ f_i(w)`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        self.models.iter().map(|m| m.value(w)).sum::<f64>() / self.models.len() as f64
    }
}

fn dataset(cfg: &RunConfig, seeds: &Seeds) -> Result<Dataset> {
    let p = &cfg.problem;
    let labels = match p.kind {
        ProblemKind::Nlls => LabelKind::Real,
        _ => LabelKind::Class { classes: p.classes },
    };
    if let Some(path) = &p.dataset {
        return Ok(load_csv(
            path,
            CsvSchema {
                labels,
                normalize: p.normalize,
            },
        )?);
    }
    let mut data = generate_classification(p.n, p.features, p.classes, p.separation, seeds.data)?;
    if p.normalize {
        data.normalize();
    }
    if labels == LabelKind::Real {
        data = data.with_real_labels();
    }
    Ok(data)
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let seeds = Seeds::from_run(cfg.seed);
    let m = cfg.workers;
    let p = &cfg.problem;
    let (models, oracle) = match p.kind {
        ProblemKind::Quadratic => {
            let oracle = QuadraticOracle::random(p.dim, m, (p.eig_low, p.eig_high), seeds.data)?;
            let models = oracle
                .models()
                .iter()
                .cloned()
                .map(LossModel::Quadratic)
                .collect();
            (models, Some(oracle))
        }
        ProblemKind::Softmax | ProblemKind::Nlls => {
            let data = Arc::new(dataset(cfg, &seeds)?);
            let shards = partition(data.len(), m, seeds.partition)?;
            let models = shards
                .into_iter()
                .map(|s| {
                    Ok(if p.kind == ProblemKind::Softmax {
                        LossModel::Softmax(SoftmaxModel::new(data.clone(), s, m, p.regularization)?)
                    } else {
                        LossModel::NonlinearLeastSquares(NllsModel::new(data.clone(), s, m)?)
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (models, None)
        }
    };
    let d = models[0].dim();
    let w0 = if p.init_scale > 0.0 {
        random_start(d, p.init_scale, seeds.init)
    } else {
        vec![0.0; d]
    };
    Ok(Problem {
        models,
        w0: ParameterVector::new(w0)?,
        oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_each_kind() {
        for kind in [
            ProblemKind::Quadratic,
            ProblemKind::Softmax,
            ProblemKind::Nlls,
        ] {
            let mut cfg = RunConfig::default();
            cfg.problem.kind = kind;
            cfg.problem.n = 60;
            cfg.problem.features = 4;
            cfg.problem.classes = 3;
            cfg.problem.dim = 5;
            cfg.workers = 3;
            let p = build_problem(&cfg).unwrap();
            assert_eq!(p.models.len(), 3);
            assert_eq!(p.oracle.is_some(), kind == ProblemKind::Quadratic);
            let d = match kind {
                ProblemKind::Quadratic => 5,
                ProblemKind::Softmax => 12,
                ProblemKind::Nlls => 4,
            };
            assert_eq!(p.dim(), d);
            assert!(p.objective(p.w0.as_slice()).is_finite());
        }
    }

    #[test]
    fn rebuilding_gives_the_same_checksums() {
        let cfg = RunConfig::default();
        let a = build_problem(&cfg).unwrap().checksums();
        let b = build_problem(&cfg).unwrap().checksums();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(a, build_problem(&other).unwrap().checksums());
    }
}
