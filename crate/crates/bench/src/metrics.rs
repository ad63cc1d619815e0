use matnet_core::online::PathResult;
use matnet_core::{Error, Result};

/// Relative L2 error of one stress history against its reference, with the
/// norm taken over all steps and components.
pub fn path_stress_error(predicted: &PathResult, reference: &PathResult) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::Config(format!(
            "path {} has {} steps, reference has {}",
            predicted.name,
            predicted.len(),
            reference.len()
        )));
    }
    let den: f64 = reference.stress.iter().map(|s| s.norm_squared()).sum();
    if !(den > 0.0) {
        return Err(Error::InvalidReference { index: 0 });
    }
    let num: f64 = predicted.stress.iter().zip(&reference.stress).map(|(p, r)| (p - r).norm_squared()).sum();
    Ok((num / den).sqrt())
}

/// Mean over the paths of the relative stress error.
pub fn stress_error(predicted: &[PathResult], reference: &[PathResult]) -> Result<f64> {
    if predicted.len() != reference.len() || predicted.is_empty() {
        return Err(Error::Config(format!(
            "expected matching path sets, got {} and {}",
            predicted.len(),
            reference.len()
        )));
    }
    let mut sum = 0.0;
    for (index, (p, r)) in predicted.iter().zip(reference).enumerate() {
        sum += path_stress_error(p, r).map_err(|e| match e {
            Error::InvalidReference { .. } => Error::InvalidReference { index },
            other => other,
        })?;
    }
    Ok(sum / predicted.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
