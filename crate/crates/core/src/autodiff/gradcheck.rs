//! Central finite-difference verification of analytic gradients.

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::params::{GradTable, ParamStore};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-3;

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst scalar.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst scalar.
    pub worst_values: (f64, f64),
    pub checked: usize,
}

/// Compares backward-pass gradients against `(L(θ+ε) − L(θ−ε)) / 2ε` for every
/// trainable scalar in `store`. `loss` records a fresh graph for the given
/// parameter values and returns its scalar loss node.
pub fn check_gradients<L>(store: &mut ParamStore<f64>, eps: f64, mut loss: L) -> Result<GradCheckReport>
where
    L: FnMut(&ParamStore<f64>) -> Result<(Graph<f64>, NodeId)>,
{
    check_gradient_terms(store, eps, |s| {
        let (g, out) = loss(s)?;
        Ok((g, out, vec![out]))
    })
}

/// Like [`check_gradients`] for a loss that is the sum of scalar `terms`.
/// `L(θ+ε) − L(θ−ε)` is formed term by term before summing, which keeps the
/// rounding of a large total out of the difference of two nearly equal values.
pub fn check_gradient_terms<L>(store: &mut ParamStore<f64>, eps: f64, mut loss: L) -> Result<GradCheckReport>
where
    L: FnMut(&ParamStore<f64>) -> Result<(Graph<f64>, NodeId, Vec<NodeId>)>,
{
    let mut analytic = GradTable::zeros_like(store);
    let (graph, out, _) = loss(store)?;
    graph.backward(out, &mut analytic)?;
    drop(graph);

    let mut eval = |s: &ParamStore<f64>| -> Result<Vec<f64>> {
        let (g, _, terms) = loss(s)?;
        Ok(terms.iter().map(|&t| g.value(t).data()[0]).collect())
    };

    let names: Vec<String> = analytic.iter().map(|(n, _)| n.to_string()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        checked: 0,
    };
    for name in names {
        let n = store.expect(&name).len();
        for i in 0..n {
            let orig = store.expect(&name).data()[i];
            store.get_mut(&name).expect("registered").data_mut()[i] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(&name).expect("registered").data_mut()[i] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(&name).expect("registered").data_mut()[i] = orig;

            let diff: f64 = plus.iter().zip(&minus).map(|(p, m)| p - m).sum();
            let numeric = diff / (2.0 * eps);
            let a = analytic.get(&name).expect("trainable").data()[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
                report.worst_values = (a, numeric);
            }
        }
    }
    Ok(report)
}
