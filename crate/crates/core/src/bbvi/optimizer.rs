/// Per-parameter AdaGrad ascent: `G += g²`, `λ += η g / (√G + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGrad {
    rates: Vec<f64>,
    accum: Vec<f64>,
}

impl AdaGrad {
    pub const EPS: f64 = 1e-8;

    pub fn new(rates: Vec<f64>) -> Self {
        let accum = vec![0.0; rates.len()];
        Self { rates, accum }
    }

    /// Rate applied to the next step of parameter `n`, given the history so far.
    pub fn effective_rate(&self, n: usize) -> f64 {
        self.rates[n] / (self.accum[n].sqrt() + Self::EPS)
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, &g), (acc, &rate)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.accum.iter_mut().zip(&self.rates))
        {
            *acc += g * g;
            *p += rate * g / (acc.sqrt() + Self::EPS);
        }
    }

    pub fn accumulated(&self) -> &[f64] {
        &self.accum
    }
}
