//! Central finite-difference gradient verification.

use std::collections::BTreeMap;

use crate::error::{MatError, Result};
use crate::tensor::graph::{Graph, NodeId};
use crate::tensor::param::ParamStore;
use crate::tensor::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub per_param: BTreeMap<String, f64>,
    pub checked_coords: usize,
}

/// Compare reverse-mode gradients against central finite differences.
///
/// `f` builds a scalar loss from the store; it is evaluated twice at the base
/// point first and must match bitwise (non-deterministic functions are
/// rejected). Per parameter, up to `max_coords` coordinates are probed; when a
/// parameter is larger, an evenly strided subset is used. Relative error is
/// `|fd - ad| / max(|fd|, |ad|, 1)`. Frozen parameters are skipped.
pub fn grad_check<S, F>(
    f: F,
    store: &ParamStore<S>,
    eps: f64,
    max_coords: usize,
) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&mut Graph<S>, &ParamStore<S>) -> Result<NodeId>,
{
    let eval = |st: &ParamStore<S>| -> Result<f64> {
        let mut g = Graph::new();
        let loss = f(&mut g, st)?;
        if !g.value(loss).is_scalar() {
            return Err(MatError::NonScalarLoss(g.shape(loss).to_vec()));
        }
        Ok(g.value(loss).item().to_f64())
    };

    let base1 = eval(store)?;
    let base2 = eval(store)?;
    if base1.to_bits() != base2.to_bits() {
        return Err(MatError::NonDeterministic(format!(
            "loss {base1} vs {base2} at the same point"
        )));
    }

    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let analytic = g.backward(loss)?;

    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        per_param: BTreeMap::new(),
        checked_coords: 0,
    };

    let names: Vec<String> = store
        .iter()
        .filter(|p| !p.frozen)
        .map(|p| p.name.clone())
        .collect();
    for name in names {
        let Some(ad) = analytic.get(&name) else {
            // parameter provably unused by f; finite differences would be 0
            continue;
        };
        let numel = ad.numel();
        let coords: Vec<usize> = if numel <= max_coords {
            (0..numel).collect()
        } else {
            (0..max_coords).map(|i| i * numel / max_coords).collect()
        };
        let mut worst = 0.0f64;
        for &c in &coords {
            let orig = work.get(&name)?.tensor.data()[c];
            work.get_mut(&name)?.tensor.data_mut()[c] = orig + S::from_f64(eps);
            let lp = eval(&work)?;
            work.get_mut(&name)?.tensor.data_mut()[c] = orig - S::from_f64(eps);
            let lm = eval(&work)?;
            work.get_mut(&name)?.tensor.data_mut()[c] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let av = ad.data()[c].to_f64();
            let rel = (fd - av).abs() / fd.abs().max(av.abs()).max(1.0);
            worst = worst.max(rel);
            report.checked_coords += 1;
        }
        report.max_rel_err = report.max_rel_err.max(worst);
        report.per_param.insert(name, worst);
    }
    Ok(report)
}
