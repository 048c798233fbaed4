//! Plain-`Vec` reference implementations used as oracles by the integration tests.
#![allow(dead_code)]

use srtsl::autodiff::ParamStore;

/// LSTM weights copied out of a parameter store.
pub struct RefCell {
    pub input: usize,
    pub hidden: usize,
    /// Row-major `[input + hidden, 4·hidden]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl RefCell {
    pub fn from_store(store: &ParamStore<f64>, prefix: &str) -> Self {
        let w = store.expect(&format!("{prefix}.weight"));
        let b = store.expect(&format!("{prefix}.bias"));
        let hidden = b.len() / 4;
        Self {
            input: w.shape()[0] - hidden,
            hidden,
            w: w.data().to_vec(),
            b: b.data().to_vec(),
        }
    }

    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let cols = 4 * hd;
        let xh: Vec<f64> = x.iter().chain(h).copied().collect();
        assert_eq!(xh.len(), self.input + hd);
        let mut z = self.b.clone();
        for (r, v) in xh.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += v * self.w[r * cols + j];
            }
        }
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for u in 0..hd {
            let i = sigmoid(z[u]);
            let f = sigmoid(z[hd + u]);
            let g = z[2 * hd + u].tanh();
            let o = sigmoid(z[3 * hd + u]);
            c_new[u] = f * c[u] + i * g;
            h_new[u] = o * c_new[u].tanh();
        }
        (h_new, c_new)
    }
}

/// Input sequence of the layer above: `[h_{t−1}; h_t]` with `h_{−1} = 0`.
pub fn pair_previous(hs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..hs.len())
        .map(|t| {
            let prev = if t == 0 { vec![0.0; hs[0].len()] } else { hs[t - 1].clone() };
            prev.into_iter().chain(hs[t].iter().copied()).collect()
        })
        .collect()
}

/// Per-layer outputs of the reference skip-clip stack.
pub struct RefLayer {
    pub hiddens: Vec<Vec<f64>>,
    pub clip_final: Vec<Vec<f64>>,
    pub accum: Vec<Vec<f64>>,
}

/// Skip-clip stack over `xs` split into clips of `d` frames: clip `m`
/// starts from `H_{m−1}` with cell zero, and `H_m = H_{m−1} + h'_m`.
pub fn skip_clip_stack(cells: &[RefCell], xs: &[Vec<f64>], d: usize) -> Vec<RefLayer> {
    let mut out = Vec::new();
    let mut seq = xs.to_vec();
    for (l, cell) in cells.iter().enumerate() {
        if l > 0 {
            seq = pair_previous(&out.last().map(|x: &RefLayer| x.hiddens.clone()).unwrap());
        }
        let hd = cell.hidden;
        let mut big_h = vec![0.0; hd];
        let mut layer = RefLayer {
            hiddens: Vec::new(),
            clip_final: Vec::new(),
            accum: Vec::new(),
        };
        for clip in seq.chunks(d) {
            let mut h = big_h.clone();
            let mut c = vec![0.0; hd];
            for x in clip {
                (h, c) = cell.step(x, &h, &c);
                layer.hiddens.push(h.clone());
            }
            for (a, b) in big_h.iter_mut().zip(&h) {
                *a += b;
            }
            layer.clip_final.push(h);
            layer.accum.push(big_h.clone());
        }
        out.push(layer);
    }
    out
}

/// Conventional stacked LSTM from zero state over the whole sequence.
pub fn plain_stack(cells: &[RefCell], xs: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    let mut layers: Vec<Vec<Vec<f64>>> = Vec::new();
    for (l, cell) in cells.iter().enumerate() {
        let seq = if l == 0 { xs.to_vec() } else { pair_previous(&layers[l - 1]) };
        let (mut h, mut c) = (vec![0.0; cell.hidden], vec![0.0; cell.hidden]);
        let mut hs = Vec::new();
        for x in &seq {
            (h, c) = cell.step(x, &h, &c);
            hs.push(h.clone());
        }
        layers.push(hs);
    }
    layers
}

fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let cols = b.len();
    let mut z = b.to_vec();
    for (r, v) in x.iter().enumerate() {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += v * w[r * cols + j];
        }
    }
    z
}

/// `log softmax(W₂ᵀ tanh(W₁ᵀ H + b₁) + b₂)` with the head `head.{stream}`.
pub fn head_log_probs(store: &ParamStore<f64>, stream: &str, h: &[f64]) -> Vec<f64> {
    let p = |n: &str| store.expect(&format!("head.{stream}.{n}")).data().to_vec();
    let z: Vec<f64> = dense(h, &p("fc1.weight"), &p("fc1.bias")).iter().map(|v| v.tanh()).collect();
    let o = dense(&z, &p("fc2.weight"), &p("fc2.bias"));
    let lse = o.iter().map(|v| v.exp()).sum::<f64>().ln();
    o.iter().map(|v| v - lse).collect()
}

/// `v_1 = 0`, `v_n = q_n − q_{n−1}`.
pub fn velocity(xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..xs.len())
        .map(|t| {
            if t == 0 {
                vec![0.0; xs[0].len()]
            } else {
                xs[t].iter().zip(&xs[t - 1]).map(|(a, b)| a - b).collect()
            }
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
