//! Linear and LSTM layers expressed as tape operations over named parameters.

use rand::Rng;

use super::params::ParamSet;
use super::tape::{Bound, Tape, Var};
use super::{AdError, Tensor};

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Affine map `y = x W^T + b` with `W: [output x input]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Self { name: name.into(), input, output }
    }

    pub fn weight_name(&self) -> String {
        format!("{}/weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}/bias", self.name)
    }

    /// Uniform in `±1/sqrt(input)` for weights and bias.
    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        let bound = 1.0 / (self.input.max(1) as f64).sqrt();
        params.insert(self.weight_name(), uniform(rng, &[self.output, self.input], bound));
        params.insert(self.bias_name(), uniform(rng, &[self.output], bound));
    }

    pub fn init_zero(&self, params: &mut ParamSet) {
        params.insert(self.weight_name(), Tensor::zeros(&[self.output, self.input]));
        params.insert(self.bias_name(), Tensor::zeros(&[self.output]));
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, AdError> {
        let w = bound.get(&self.weight_name())?;
        let b = bound.get(&self.bias_name())?;
        let xw = tape.matmul_t(x, w)?;
        tape.add_row(xw, b)
    }
}

/// One LSTM cell. Gate blocks are stacked in the order
/// input, forget, cell candidate, output along the `4H` axis.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

/// Plain-value parameters of a single cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams {
    /// `[4H x D]`
    pub input_weights: Tensor,
    /// `[4H x H]`
    pub recurrent_weights: Tensor,
    /// `[4H]`
    pub bias: Tensor,
    pub hidden_size: usize,
}

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_weights: Tensor::zeros(&[4 * hidden, input]),
            recurrent_weights: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
            hidden_size: hidden,
        }
    }
}

impl LstmCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self { name: name.into(), input, hidden }
    }

    pub fn input_weights_name(&self) -> String {
        format!("{}/w_ih", self.name)
    }

    pub fn recurrent_weights_name(&self) -> String {
        format!("{}/w_hh", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}/bias", self.name)
    }

    /// Weights uniform in `±1/sqrt(H)`, bias zero except the forget block at 1.
    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        let h = self.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        params.insert(self.input_weights_name(), uniform(rng, &[4 * h, self.input], bound));
        params.insert(self.recurrent_weights_name(), uniform(rng, &[4 * h, h], bound));
        let mut bias = Tensor::zeros(&[4 * h]);
        bias.data_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        params.insert(self.bias_name(), bias);
    }

    pub fn init_zero(&self, params: &mut ParamSet) {
        let p = LstmCellParams::zeros(self.input, self.hidden);
        self.store(params, p);
    }

    pub fn store(&self, params: &mut ParamSet, p: LstmCellParams) {
        params.insert(self.input_weights_name(), p.input_weights);
        params.insert(self.recurrent_weights_name(), p.recurrent_weights);
        params.insert(self.bias_name(), p.bias);
    }

    pub fn extract(&self, params: &ParamSet) -> Option<LstmCellParams> {
        Some(LstmCellParams {
            input_weights: params.get(&self.input_weights_name())?.clone(),
            recurrent_weights: params.get(&self.recurrent_weights_name())?.clone(),
            bias: params.get(&self.bias_name())?.clone(),
            hidden_size: self.hidden,
        })
    }

    /// Batched step: `x: [B x D]`, `h, c: [B x H]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var), AdError> {
        let w_ih = bound.get(&self.input_weights_name())?;
        let w_hh = bound.get(&self.recurrent_weights_name())?;
        let b = bound.get(&self.bias_name())?;
        lstm_forward(tape, self.hidden, w_ih, w_hh, b, x, h, c)
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_forward(
    tape: &mut Tape,
    hidden: usize,
    w_ih: Var,
    w_hh: Var,
    b: Var,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var), AdError> {
    let xi = tape.matmul_t(x, w_ih)?;
    let hh = tape.matmul_t(h, w_hh)?;
    let pre = tape.add(xi, hh)?;
    let gates = tape.add_row(pre, b)?;
    let i_pre = tape.slice_cols(gates, 0, hidden)?;
    let f_pre = tape.slice_cols(gates, hidden, hidden)?;
    let g_pre = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let o_pre = tape.slice_cols(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i_pre)?;
    let f = tape.sigmoid(f_pre)?;
    let g = tape.tanh(g_pre)?;
    let o = tape.sigmoid(o_pre)?;
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let c_act = tape.tanh(c_next)?;
    let h_next = tape.mul(o, c_act)?;
    Ok((h_next, c_next))
}

/// Single unbatched LSTM step on plain vectors.
pub fn lstm_step(params: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>), AdError> {
    let hidden = params.hidden_size;
    let dims_ok = params.input_weights.shape() == [4 * hidden, x.len()]
        && params.recurrent_weights.shape() == [4 * hidden, hidden]
        && params.bias.len() == 4 * hidden
        && h.len() == hidden
        && c.len() == hidden;
    if !dims_ok {
        return Err(AdError::Shape {
            op: "lstm_step",
            detail: format!(
                "w_ih {:?}, w_hh {:?}, bias {:?}, x {}, h {}, c {} for H={hidden}",
                params.input_weights.shape(),
                params.recurrent_weights.shape(),
                params.bias.shape(),
                x.len(),
                h.len(),
                c.len()
            ),
        });
    }
    let mut tape = Tape::new();
    let w_ih = tape.constant(params.input_weights.clone());
    let w_hh = tape.constant(params.recurrent_weights.clone());
    let b = tape.constant(params.bias.clone());
    let xv = tape.constant(Tensor::matrix(1, x.len(), x.to_vec()));
    let hv = tape.constant(Tensor::matrix(1, hidden, h.to_vec()));
    let cv = tape.constant(Tensor::matrix(1, hidden, c.to_vec()));
    let (h2, c2) = lstm_forward(&mut tape, hidden, w_ih, w_hh, b, xv, hv, cv)?;
    Ok((tape.value(h2).data().to_vec(), tape.value(c2).data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_yields_zero_state() {
        let p = LstmCellParams::zeros(3, 4);
        let (h, c) = lstm_step(&p, &[0.3, -2.0, 7.0], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().chain(&c).all(|v| *v == 0.0));
    }

    #[test]
    fn step_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCell::new("c", 3, 4);
        let mut ps = ParamSet::new();
        cell.init(&mut ps, &mut rng);
        let p = cell.extract(&ps).unwrap();
        let a = lstm_step(&p, &[0.1, 0.2, 0.3], &[0.5; 4], &[-0.5; 4]).unwrap();
        let b = lstm_step(&p, &[0.1, 0.2, 0.3], &[0.5; 4], &[-0.5; 4]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = LstmCellParams::zeros(3, 4);
        assert!(lstm_step(&p, &[0.0; 2], &[0.0; 4], &[0.0; 4]).is_err());
        assert!(lstm_step(&p, &[0.0; 3], &[0.0; 5], &[0.0; 4]).is_err());
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::new("c", 2, 3);
        let mut ps = ParamSet::new();
        cell.init(&mut ps, &mut rng);
        assert_eq!(ps.get("c/bias").unwrap().data(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
