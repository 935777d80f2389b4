use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a freshly created parameter is filled.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    /// Uniform in ±sqrt(3 / fan_in), with fan_in = rows.
    FanIn,
    /// Orthogonal columns (or rows, whichever is shorter).
    Orthogonal,
    /// Uniform in ±bound.
    Uniform(f64),
}

/// Named parameter tensors. Models hold [`ParamId`]s into a store.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    trainable: Vec<bool>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the parameter called `name`, creating it if it does not exist.
    ///
    /// An existing parameter keeps its values; this is how models are
    /// rebuilt on top of a store read from disk. Panics if the stored shape
    /// differs from `shape`.
    pub fn get_or_init(
        &mut self,
        name: &str,
        shape: (usize, usize),
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        if let Some(&id) = self.index.get(name) {
            assert_eq!(
                self.values[id.0].dim(),
                shape,
                "parameter {} has shape {:?}, model expects {:?}",
                name,
                self.values[id.0].dim(),
                shape
            );
            return id;
        }
        let t = init_tensor(shape, init, rng);
        self.insert(name, t, true)
    }

    /// Adds or replaces a tensor.
    pub fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> ParamId {
        if let Some(&id) = self.index.get(name) {
            self.values[id.0] = value;
            self.trainable[id.0] = trainable;
            return id;
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        self.trainable.push(trainable);
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.trainable[id.0] = trainable;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

pub fn init_tensor(shape: (usize, usize), init: Init, rng: &mut ChaCha8Rng) -> Tensor {
    let (rows, cols) = shape;
    match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::FanIn => {
            let bound = (3.0 / rows.max(1) as f64).sqrt();
            Tensor::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound))
        }
        Init::Uniform(bound) => Tensor::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound)),
        Init::Orthogonal => {
            // Gram-Schmidt on the longer dimension
            let transpose = rows < cols;
            let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
            let mut q = Tensor::from_shape_simple_fn((n, m), || rng.gen_range(-1.0..1.0));
            for j in 0..m {
                for k in 0..j {
                    let d = q.column(j).dot(&q.column(k));
                    let ck = q.column(k).to_owned();
                    let mut cj = q.column_mut(j);
                    cj.scaled_add(-d, &ck);
                }
                let norm = q.column(j).dot(&q.column(j)).sqrt().max(1e-12);
                q.column_mut(j).mapv_inplace(|x| x / norm);
            }
            if transpose {
                q.t().to_owned()
            } else {
                q
            }
        }
    }
}

/// Gradient accumulator indexed like a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ParamGrads {
    grads: Vec<Option<Tensor>>,
}

impl ParamGrads {
    pub fn new(store: &ParamStore) -> Self {
        ParamGrads {
            grads: vec![None; store.len()],
        }
    }

    pub fn add(&mut self, id: ParamId, g: &Tensor) {
        if id.0 >= self.grads.len() {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(x) => *x += g,
            slot => *slot = Some(g.clone()),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * k);
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so that the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
    }

    pub fn clear(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }
}
