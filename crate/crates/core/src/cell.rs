//! LSTM cell on the autodiff graph, shared by the graph nodes of the spatial
//! network and by every skip-clip layer.

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::error::Result;
use crate::rng::ModelRng;
use crate::tensor::{Scalar, Tensor};

/// Gate weights `[input + hidden, 4·hidden]` in `[input, forget, candidate, output]`
/// column order, plus bias `[4·hidden]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub weight: NodeId,
    pub bias: NodeId,
    pub hidden: usize,
}

impl LstmWeights {
    pub fn register<F: Scalar>(
        store: &mut ParamStore<F>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut ModelRng,
    ) -> Result<()> {
        let fan_in = input + hidden;
        store.insert_uniform(format!("{prefix}.weight"), &[fan_in, 4 * hidden], fan_in, rng)?;
        let mut bias = vec![F::zero(); 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = F::one());
        store.insert(format!("{prefix}.bias"), Tensor::vector(bias))
    }

    pub fn bind<F: Scalar>(g: &mut Graph<F>, store: &ParamStore<F>, prefix: &str) -> Result<Self> {
        let weight = g.param(store, &format!("{prefix}.weight"))?;
        let bias = g.param(store, &format!("{prefix}.bias"))?;
        let hidden = g.shape(bias)[0] / 4;
        Ok(Self { weight, bias, hidden })
    }
}

/// One step: returns `(h, c)`.
pub fn lstm_cell<F: Scalar>(
    g: &mut Graph<F>,
    w: &LstmWeights,
    input: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let h = w.hidden;
    let xh = g.concat(&[input, h_prev])?;
    let gates = g.linear(xh, w.weight, w.bias)?;
    let i = g.slice(gates, 0, h)?;
    let f = g.slice(gates, h, 2 * h)?;
    let cand = g.slice(gates, 2 * h, 3 * h)?;
    let o = g.slice(gates, 3 * h, 4 * h)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let cand = g.tanh(cand)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c)?;
    let h_new = g.mul(o, squashed)?;
    Ok((h_new, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_gate_algebra() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ModelRng::seed_from(0);
        LstmWeights::register(&mut store, "cell", 3, 2, &mut rng).unwrap();
        store.zero_all();
        let mut g = Graph::new();
        let w = LstmWeights::bind(&mut g, &store, "cell").unwrap();
        let x = g.constant(Tensor::from_f64(&[1, 3], &[0.3, -1.0, 2.0]).unwrap()).unwrap();
        let h0 = g.constant(Tensor::from_f64(&[1, 2], &[0.7, 0.1]).unwrap()).unwrap();
        let c0 = g.constant(Tensor::from_f64(&[1, 2], &[1.0, -4.0]).unwrap()).unwrap();
        let (h, c) = lstm_cell(&mut g, &w, x, h0, c0).unwrap();
        assert_eq!(g.value(c).data(), &[0.5, -2.0]);
        assert_eq!(g.value(h).data(), &[0.5 * 0.5f64.tanh(), 0.5 * (-2.0f64).tanh()]);
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut store = ParamStore::<f32>::new();
        LstmWeights::register(&mut store, "c", 4, 3, &mut ModelRng::seed_from(1)).unwrap();
        let b = store.expect("c.bias").data();
        assert_eq!(&b[3..6], &[1.0; 3]);
        assert!(b[..3].iter().chain(&b[6..]).all(|&v| v == 0.0));
        let w = store.expect("c.weight");
        assert_eq!(w.shape(), &[7, 12]);
        let bound = 1.0 / 7f32.sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }
}
