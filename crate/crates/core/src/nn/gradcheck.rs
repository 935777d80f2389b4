//! Central finite-difference checks for [`Graph`] computations.
//!
//! The error reported is `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`
//! over all checked entries, which stays meaningful when individual
//! gradient entries are near zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Tensor, Var};
use super::params::{ParamGrads, ParamId, ParamStore};

pub const STEP: f64 = 1e-5;

pub fn random_tensor(shape: (usize, usize), seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_shape_simple_fn(shape, || rng.gen_range(-1.0..1.0))
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    if na + nn < 1e-14 {
        diff
    } else {
        diff / (na + nn)
    }
}

/// Checks gradients with respect to graph inputs. `f` receives the inputs
/// as nodes and must return a 1×1 loss.
pub fn check_input_gradients<F>(store: &ParamStore, inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |ins: &[Tensor]| {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = ins.iter().map(|t| g.input(t.clone())).collect();
        let loss = f(&mut g, &vars);
        g.scalar(loss)
    };
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = f(&mut g, &vars);
    let grads = g.backward(loss);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, t) in inputs.iter().enumerate() {
        let ga = grads
            .wrt(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(t.dim()));
        for idx in ndarray::indices(t.dim()) {
            let mut plus: Vec<Tensor> = inputs.to_vec();
            let mut minus: Vec<Tensor> = inputs.to_vec();
            plus[k][idx] += STEP;
            minus[k][idx] -= STEP;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * STEP));
            analytic.push(ga[idx]);
        }
    }
    relative_error(&analytic, &numeric)
}

/// Checks gradients with respect to the parameters in `ids` (all trainable
/// parameters when `ids` is empty). `f` builds the loss from a fresh graph.
pub fn check_param_gradients<F>(store: &ParamStore, ids: &[ParamId], f: F) -> f64
where
    F: Fn(&mut Graph) -> Var,
{
    let ids: Vec<ParamId> = if ids.is_empty() {
        store.ids().filter(|&i| store.is_trainable(i)).collect()
    } else {
        ids.to_vec()
    };
    let mut g = Graph::new(store);
    let loss = f(&mut g);
    let mut acc = ParamGrads::new(store);
    g.backward_into(loss, &mut acc);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut work = store.clone();
    for id in ids {
        let ga = acc
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.value(id).dim()));
        for idx in ndarray::indices(ga.dim()) {
            let orig = store.value(id)[idx];
            work.value_mut(id)[idx] = orig + STEP;
            let lp = {
                let mut g = Graph::new(&work);
                let l = f(&mut g);
                g.scalar(l)
            };
            work.value_mut(id)[idx] = orig - STEP;
            let lm = {
                let mut g = Graph::new(&work);
                let l = f(&mut g);
                g.scalar(l)
            };
            work.value_mut(id)[idx] = orig;
            numeric.push((lp - lm) / (2.0 * STEP));
            analytic.push(ga[idx]);
        }
    }
    relative_error(&analytic, &numeric)
}
