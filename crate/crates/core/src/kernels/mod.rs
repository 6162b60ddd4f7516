//! Kernel matrices and the two imputation-dependent baseline kernels.

mod gak;
mod linear;
mod matrix;

pub use gak::{fit_gak_params, log_gak, log_gak_frames, GakParams};
pub use linear::linear_kernel;
pub use matrix::{
    assemble_cross, assemble_symmetric, psd_report, read_matrix, write_matrix, KernelMatrix,
    PsdReport, ASYMMETRY_TOLERANCE, EIGENVALUE_TOLERANCE,
};

use nalgebra::DMatrix;

use crate::cohort::{Cohort, MtSample};
use crate::error::{Error, Result};

/// A kernel that needs complete (imputed) input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKernel {
    Linear { c: f64 },
    Gak(GakParams),
}

impl BaselineKernel {
    pub fn tag(&self) -> &'static str {
        match self {
            BaselineKernel::Linear { .. } => "linear",
            BaselineKernel::Gak(_) => "gak",
        }
    }
}

fn require_complete(c: &Cohort, kernel: &'static str) -> Result<()> {
    if c.is_complete() {
        Ok(())
    } else {
        Err(Error::IncompleteData { kernel })
    }
}

/// Train Gram plus the optional train×test cross kernel.
///
/// The GAK Gram is normalized per pair, `exp(log k(x,y) - log k(x,x)/2 -
/// log k(y,y)/2)`, so its diagonal is one. The linear Gram is raw.
pub fn gram_matrix(
    kernel: &BaselineKernel,
    train: &Cohort,
    test: Option<&Cohort>,
) -> Result<KernelMatrix> {
    let tag = kernel.tag();
    require_complete(train, tag)?;
    if let Some(t) = test {
        require_complete(t, tag)?;
        if t.n_attrs() != train.n_attrs() {
            return Err(Error::DimensionMismatch(format!(
                "train has {} attributes, test has {}",
                train.n_attrs(),
                t.n_attrs()
            )));
        }
    }
    let tr = train.samples();
    let (gram, cross) = match *kernel {
        BaselineKernel::Linear { c } => {
            let gram = assemble_symmetric(tr.len(), |i, j| linear_kernel(&tr[i], &tr[j], c))?;
            let cross = test
                .map(|t| {
                    let te = t.samples();
                    assemble_cross(tr.len(), te.len(), |i, j| linear_kernel(&tr[i], &te[j], c))
                })
                .transpose()?;
            (gram, cross)
        }
        BaselineKernel::Gak(params) => {
            let log_self = |s: &[MtSample]| -> Result<Vec<f64>> {
                s.iter().map(|x| log_gak(x, x, &params)).collect()
            };
            let diag = log_self(tr)?;
            let gram = assemble_symmetric(tr.len(), |i, j| {
                if i == j {
                    return Ok(1.0);
                }
                let l = log_gak(&tr[i], &tr[j], &params)?;
                Ok((l - 0.5 * diag[i] - 0.5 * diag[j]).exp())
            })?;
            let cross = test
                .map(|t| {
                    let te = t.samples();
                    let tdiag = log_self(te)?;
                    assemble_cross(tr.len(), te.len(), |i, j| {
                        let l = log_gak(&tr[i], &te[j], &params)?;
                        Ok((l - 0.5 * diag[i] - 0.5 * tdiag[j]).exp())
                    })
                })
                .transpose()?;
            (gram, cross)
        }
    };
    Ok(KernelMatrix::new(gram, cross, tag))
}

/// Linear Gram over plain feature vectors (used by the manual-feature baseline).
pub fn linear_gram_vectors(train: &[Vec<f64>], test: Option<&[Vec<f64>]>) -> KernelMatrix {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = DMatrix::from_fn(train.len(), train.len(), |i, j| dot(&train[i], &train[j]));
    let cross =
        test.map(|te| DMatrix::from_fn(train.len(), te.len(), |i, j| dot(&train[i], &te[j])));
    KernelMatrix::new(gram, cross, "linear")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{
        apply_missingness, generate_synthetic_cohort, Mechanism, MissingnessSpec, SynthConfig,
    };
    use crate::impute::{fit_imputer, impute};

    fn imputed(n: usize, seed: u64, imp: &str) -> Cohort {
        let c = generate_synthetic_cohort(&SynthConfig::new(n / 4, n - n / 4, 3, 12, 1.5, seed))
            .unwrap();
        let c = apply_missingness(
            &c,
            &MissingnessSpec {
                mechanism: Mechanism::Mcar,
                rate: 0.3,
                seed,
            },
        )
        .unwrap();
        let spec = fit_imputer(&c, imp.parse().unwrap()).unwrap();
        impute(&spec, &c).unwrap()
    }

    #[test]
    fn gak_gram_is_normalized_symmetric_psd() {
        let c = imputed(40, 1, "zero+bc");
        let params = fit_gak_params(&c).unwrap();
        let k = gram_matrix(&BaselineKernel::Gak(params), &c, None).unwrap();
        for i in 0..c.len() {
            assert_eq!(k.gram[(i, i)], 1.0);
        }
        assert_eq!(k.gram, k.gram.transpose());
        assert!(psd_report(&k.gram).passes());
    }

    #[test]
    fn linear_gram_of_one_hot_is_identity() {
        let samples = (0..4)
            .map(|i| {
                let mut v = vec![0.0; 4];
                v[i] = 1.0;
                MtSample::complete(format!("s{i}"), None, 2, 2, v).unwrap()
            })
            .collect();
        let c = Cohort::new(vec!["a".into(), "b".into()], 2, samples).unwrap();
        let k = gram_matrix(&BaselineKernel::Linear { c: 0.0 }, &c, None).unwrap();
        assert_eq!(k.gram, DMatrix::identity(4, 4));
    }

    #[test]
    fn incomplete_input_rejected() {
        let c = generate_synthetic_cohort(&SynthConfig::new(5, 5, 2, 6, 1.0, 2)).unwrap();
        let c = apply_missingness(
            &c,
            &MissingnessSpec {
                mechanism: Mechanism::Mcar,
                rate: 0.3,
                seed: 1,
            },
        )
        .unwrap();
        let err = gram_matrix(&BaselineKernel::Linear { c: 0.0 }, &c, None).unwrap_err();
        assert!(matches!(err, Error::IncompleteData { kernel: "linear" }));
    }

    #[test]
    fn cross_kernel_on_train_reproduces_gram() {
        let c = imputed(20, 3, "mean");
        let params = fit_gak_params(&c).unwrap();
        for kernel in [
            BaselineKernel::Linear { c: 0.0 },
            BaselineKernel::Gak(params),
        ] {
            let k = gram_matrix(&kernel, &c, Some(&c)).unwrap();
            let cross = k.cross.unwrap();
            assert!((cross - &k.gram).amax() <= 1e-12 * k.gram.amax());
        }
    }

    #[test]
    fn linear_is_additive_over_indicator_block() {
        let raw = generate_synthetic_cohort(&SynthConfig::new(3, 3, 2, 5, 1.0, 4)).unwrap();
        let raw = apply_missingness(
            &raw,
            &MissingnessSpec {
                mechanism: Mechanism::Mcar,
                rate: 0.4,
                seed: 2,
            },
        )
        .unwrap();
        let plain = impute(&fit_imputer(&raw, "mean".parse().unwrap()).unwrap(), &raw).unwrap();
        let bc = impute(
            &fit_imputer(&raw, "mean+bc".parse().unwrap()).unwrap(),
            &raw,
        )
        .unwrap();
        let lin = BaselineKernel::Linear { c: 0.0 };
        let kp = gram_matrix(&lin, &plain, None).unwrap().gram;
        let kb = gram_matrix(&lin, &bc, None).unwrap().gram;
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                let mi = raw.samples()[i].mask();
                let mj = raw.samples()[j].mask();
                let shared = mi.iter().zip(mj).filter(|(a, b)| **a && **b).count() as f64;
                assert!(
                    (kb[(i, j)] - kp[(i, j)] - shared).abs() < 1e-9 * kb[(i, j)].abs().max(1.0)
                );
            }
        }
    }
}
