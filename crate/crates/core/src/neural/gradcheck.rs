//! Finite-difference verification of graph gradients.

use crate::error::Result;
use crate::neural::tape::{Graph, Tensor, Var};

/// Largest relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
/// over all inputs, with central differences of step `h`.
///
/// `build` receives a fresh graph and one parameter leaf per input and must
/// return a scalar.
pub fn gradient_error<F>(inputs: &[Tensor], h: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|v| g.param(v.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.scalar(out))
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|v| g.param(v.clone())).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut values = inputs.to_vec();
    for (n, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[n].raw_dim()));
        let mut numeric = Tensor::zeros(inputs[n].raw_dim());
        for idx in 0..inputs[n].len() {
            let orig = inputs[n].as_slice_memory_order().expect("contiguous")[idx];
            values[n].as_slice_memory_order_mut().expect("contiguous")[idx] = orig + h;
            let plus = eval(&values)?;
            values[n].as_slice_memory_order_mut().expect("contiguous")[idx] = orig - h;
            let minus = eval(&values)?;
            values[n].as_slice_memory_order_mut().expect("contiguous")[idx] = orig;
            numeric.as_slice_memory_order_mut().expect("contiguous")[idx] = (plus - minus) / (2.0 * h);
        }
        let diff = (&analytic - &numeric).mapv(|v| v * v).sum().sqrt();
        let scale = analytic
            .mapv(|v| v * v)
            .sum()
            .sqrt()
            .max(numeric.mapv(|v| v * v).sum().sqrt());
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    Ok(worst)
}
