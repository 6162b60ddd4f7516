use crate::cohort::MtSample;
use crate::error::{Error, Result};

/// Inner product of the row-major vectorizations plus `c`.
pub fn linear_kernel(x: &MtSample, y: &MtSample, c: f64) -> Result<f64> {
    let a = x.complete_values("linear")?;
    let b = y.complete_values("linear")?;
    if x.n_attrs() != y.n_attrs() || x.n_steps() != y.n_steps() {
        return Err(Error::DimensionMismatch(format!(
            "linear kernel on {}x{} and {}x{}",
            x.n_attrs(),
            x.n_steps(),
            y.n_attrs(),
            y.n_steps()
        )));
    }
    Ok(a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() + c)
}
