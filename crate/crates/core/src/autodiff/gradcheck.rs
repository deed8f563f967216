//! Central finite differences, independent of the tape's reverse pass.

use super::params::{ParamGrads, ParamSet};

/// Norm-based relative error `|a - n| / (|a| + |n|)`, with both-zero as 0.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let scale: f64 =
        analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Numerical gradient of `f` with respect to each listed parameter.
pub fn numeric_grads<'a>(
    params: &ParamSet,
    names: impl IntoIterator<Item = &'a String>,
    step: f64,
    mut f: impl FnMut(&ParamSet) -> f64,
) -> ParamGrads {
    let mut probe = params.clone();
    let mut out = ParamGrads::default();
    for name in names {
        let n = probe.get(name).map_or(0, |t| t.len());
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let orig = probe.get(name).unwrap().data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + step;
            let plus = f(&probe);
            probe.get_mut(name).unwrap().data_mut()[i] = orig - step;
            let minus = f(&probe);
            probe.get_mut(name).unwrap().data_mut()[i] = orig;
            g.push((plus - minus) / (2.0 * step));
        }
        let shape = probe.get(name).map(|t| t.shape().to_vec()).unwrap_or_default();
        out.insert(name.clone(), super::Tensor::new(shape, g).expect("same length"));
    }
    out
}

/// Worst per-parameter relative error between two gradient sets, with the
/// offending name. A parameter absent from `analytic` counts as all zeros.
pub fn worst_error(analytic: &ParamGrads, numeric: &ParamGrads) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for (name, n) in numeric.iter() {
        let zeros = vec![0.0; n.len()];
        let a = analytic.get(name).map_or(zeros.as_slice(), |t| t.data());
        let e = relative_error(a, n.data());
        if e > worst.0 || worst.1.is_empty() {
            worst = (e, name.clone());
        }
    }
    worst
}
