//! Adam / AMSGrad and the two-phase early-stopping schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::Tensor;
use super::params::{ParamGrads, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam, optionally with the AMSGrad running maximum of the second moment.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub amsgrad: bool,
    t: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
    v_max: Vec<Option<Tensor>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            amsgrad: false,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
            v_max: Vec::new(),
        }
    }

    /// Continues with AMSGrad from the current moment estimates.
    pub fn switch_to_amsgrad(&mut self) {
        if !self.amsgrad {
            self.amsgrad = true;
            self.v_max = self.v.clone();
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) {
        self.t += 1;
        let n = store.len();
        self.m.resize(n, None);
        self.v.resize(n, None);
        self.v_max.resize(n, None);
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            if !store.is_trainable(id) {
                continue;
            }
            let g = match grads.get(id) {
                Some(g) => g,
                None => continue,
            };
            let i = id.index();
            let m = self.m[i].get_or_insert_with(|| Tensor::zeros(g.dim()));
            m.zip_mut_with(g, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
            let v = self.v[i].get_or_insert_with(|| Tensor::zeros(g.dim()));
            v.zip_mut_with(g, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            let denom_src = if self.amsgrad {
                let vm = self.v_max[i].get_or_insert_with(|| Tensor::zeros(g.dim()));
                vm.zip_mut_with(v, |a, &b| *a = a.max(b));
                &*vm
            } else {
                &*v
            };
            let m = self.m[i].as_ref().unwrap();
            let p = store.value_mut(id);
            ndarray::Zip::from(p).and(m).and(denom_src).for_each(|p, &m, &v| {
                *p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            });
        }
    }
}

/// Adam until the dev metric first decreases, then AMSGrad until
/// `patience` steps pass without a new best dev metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSchedule {
    pub adam: AdamConfig,
    pub eval_interval: usize,
    pub patience: usize,
    pub max_steps: usize,
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerSchedule {
    fn default() -> Self {
        OptimizerSchedule {
            adam: AdamConfig {
                lr: 0.003,
                beta1: 0.9,
                beta2: 0.95,
                eps: 1e-8,
            },
            eval_interval: 100,
            patience: 3000,
            max_steps: 50_000,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScheduleEvent {
    Eval { step: usize, metric: f64, loss: f64 },
    SwitchToAmsgrad { step: usize },
    Stop { step: usize, reason: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleLog {
    pub events: Vec<ScheduleEvent>,
    pub switch_step: Option<usize>,
    pub best_step: usize,
    pub best_metric: f64,
    pub steps: usize,
}

/// Runs the schedule. `train_step(store, step)` returns the minibatch loss
/// and gradients; `dev_eval(store)` returns a metric where higher is better.
/// On return `store` holds the parameters with the best dev metric.
pub fn run_schedule<T, E>(schedule: &OptimizerSchedule, store: &mut ParamStore, mut train_step: T, mut dev_eval: E) -> ScheduleLog
where
    T: FnMut(&ParamStore, usize) -> (f64, ParamGrads),
    E: FnMut(&ParamStore) -> f64,
{
    assert!(schedule.adam.lr > 0.0 && schedule.patience > 0 && schedule.eval_interval > 0);
    let mut opt = Adam::new(schedule.adam);
    let mut log = ScheduleLog {
        best_metric: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best = store.clone();
    let mut prev_metric: Option<f64> = None;
    let mut last_improvement = 0;
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    for step in 1..=schedule.max_steps {
        let (loss, mut grads) = train_step(store, step);
        if let Some(c) = schedule.clip_norm {
            grads.clip_norm(c);
        }
        opt.step(store, &grads);
        loss_sum += loss;
        loss_n += 1;
        log.steps = step;
        if step % schedule.eval_interval != 0 && step != schedule.max_steps {
            continue;
        }
        let metric = dev_eval(store);
        log.events.push(ScheduleEvent::Eval {
            step,
            metric,
            loss: loss_sum / loss_n as f64,
        });
        loss_sum = 0.0;
        loss_n = 0;
        if metric > log.best_metric {
            log.best_metric = metric;
            log.best_step = step;
            best = store.clone();
            last_improvement = step;
        }
        if let Some(prev) = prev_metric {
            if metric < prev && !opt.amsgrad {
                opt.switch_to_amsgrad();
                log.switch_step = Some(step);
                log.events.push(ScheduleEvent::SwitchToAmsgrad { step });
            }
        }
        prev_metric = Some(metric);
        if step - last_improvement >= schedule.patience {
            log.events.push(ScheduleEvent::Stop {
                step,
                reason: "patience".into(),
            });
            *store = best;
            return log;
        }
    }
    log.events.push(ScheduleEvent::Stop {
        step: log.steps,
        reason: "max_steps".into(),
    });
    *store = best;
    log
}

/// Plain Adam with learning-rate decay: after `warmup_steps`, every
/// evaluation whose dev metric is below the previous one multiplies the
/// learning rate by `decay`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub adam: AdamConfig,
    pub max_steps: usize,
    pub eval_interval: usize,
    pub warmup_steps: usize,
    pub decay: f64,
    pub clip_norm: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnealLog {
    /// `(step, dev metric, mean training loss, learning rate after the eval)`.
    pub evals: Vec<(usize, f64, f64, f64)>,
    pub best_step: usize,
    pub best_metric: f64,
    pub steps: usize,
    pub final_lr: f64,
}

/// Runs an [`AnnealSchedule`]; `store` ends with the best-dev parameters.
pub fn run_annealed<T, E>(schedule: &AnnealSchedule, store: &mut ParamStore, mut train_step: T, mut dev_eval: E) -> AnnealLog
where
    T: FnMut(&ParamStore, usize) -> (f64, ParamGrads),
    E: FnMut(&ParamStore) -> f64,
{
    assert!(schedule.adam.lr > 0.0 && schedule.eval_interval > 0);
    let mut opt = Adam::new(schedule.adam);
    let mut log = AnnealLog {
        best_metric: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best = store.clone();
    let mut prev: Option<f64> = None;
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    for step in 1..=schedule.max_steps {
        let (loss, mut grads) = train_step(store, step);
        if let Some(c) = schedule.clip_norm {
            grads.clip_norm(c);
        }
        opt.step(store, &grads);
        loss_sum += loss;
        loss_n += 1;
        log.steps = step;
        if step % schedule.eval_interval != 0 && step != schedule.max_steps {
            continue;
        }
        let metric = dev_eval(store);
        if step > schedule.warmup_steps && prev.map_or(false, |p| metric < p) {
            opt.config.lr *= schedule.decay;
        }
        prev = Some(metric);
        log.evals.push((step, metric, loss_sum / loss_n as f64, opt.config.lr));
        loss_sum = 0.0;
        loss_n = 0;
        if metric > log.best_metric {
            log.best_metric = metric;
            log.best_step = step;
            best = store.clone();
        }
    }
    log.final_lr = opt.config.lr;
    *store = best;
    log
}

/// Item indices of minibatch `step` (1-based) over `n` items. Each epoch
/// visits the items in a fresh permutation drawn from `seed`.
pub fn batch_indices(n: usize, batch_size: usize, step: usize, seed: u64) -> Vec<usize> {
    assert!(n > 0 && batch_size > 0);
    let per_epoch = (n + batch_size - 1) / batch_size;
    let k = step.saturating_sub(1);
    let (epoch, b) = (k / per_epoch, k % per_epoch);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    perm.shuffle(&mut rng);
    perm[b * batch_size..((b + 1) * batch_size).min(n)].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;
    use ndarray::array;

    fn quadratic() -> (ParamStore, crate::nn::params::ParamId) {
        let mut st = ParamStore::new();
        let id = st.insert("x", array![[3.0, -2.0]], true);
        (st, id)
    }

    fn quad_step(st: &ParamStore, id: crate::nn::params::ParamId) -> (f64, ParamGrads) {
        let mut g = Graph::new(st);
        let x = g.param(id);
        let sq = g.square(x);
        let l = g.sum(sq);
        let mut grads = ParamGrads::new(st);
        g.backward_into(l, &mut grads);
        (g.scalar(l), grads)
    }

    #[test]
    fn annealing_decays_only_after_warmup() {
        let (mut st, id) = quadratic();
        let sched = AnnealSchedule {
            adam: AdamConfig { lr: 0.002, ..Default::default() },
            max_steps: 6,
            eval_interval: 1,
            warmup_steps: 2,
            decay: 0.999,
            clip_norm: None,
        };
        // drops at steps 2 (inside warmup) and 4
        let metrics = [0.5, 0.4, 0.6, 0.5, 0.7, 0.8];
        let mut i = 0;
        let log = run_annealed(&sched, &mut st, |s, _| quad_step(s, id), |_| {
            i += 1;
            metrics[i - 1]
        });
        assert_eq!(log.evals[1].3, 0.002);
        assert!((log.evals[3].3 - 0.002 * 0.999).abs() < 1e-15);
        assert!((log.final_lr - 0.002 * 0.999).abs() < 1e-15);
        assert_eq!(log.best_step, 6);
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let mut seen: Vec<usize> = (1..=4).flat_map(|s| batch_indices(10, 3, s, 5)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(batch_indices(10, 3, 4, 5).len(), 1);
        assert_eq!(batch_indices(10, 3, 2, 5), batch_indices(10, 3, 2, 5));
    }

    #[test]
    fn monotone_metric_never_switches() {
        let (mut st, id) = quadratic();
        let sched = OptimizerSchedule {
            eval_interval: 2,
            max_steps: 10,
            patience: 4,
            ..Default::default()
        };
        let mut k = 0.0;
        let log = run_schedule(&sched, &mut st, |s, _| quad_step(s, id), |_| {
            k += 1.0;
            k
        });
        assert_eq!(log.switch_step, None);
        assert_eq!(log.steps, 10);
        assert_eq!(log.best_step, 10);
        assert!(matches!(log.events.last(), Some(ScheduleEvent::Stop { reason, .. }) if reason == "max_steps"));
    }

    #[test]
    fn first_decrease_switches_phase() {
        let (mut st, id) = quadratic();
        let sched = OptimizerSchedule {
            eval_interval: 1,
            max_steps: 20,
            patience: 3,
            ..Default::default()
        };
        let metrics = [0.5, 0.4, 0.6, 0.6, 0.6, 0.6, 0.6];
        let mut i = 0;
        let log = run_schedule(&sched, &mut st, |s, _| quad_step(s, id), |_| {
            let m = metrics[i.min(metrics.len() - 1)];
            i += 1;
            m
        });
        assert_eq!(log.switch_step, Some(2));
        assert_eq!(log.best_step, 3);
        // stops 3 steps after the last improvement
        assert_eq!(log.steps, 6);
    }

    #[test]
    fn both_phases_reduce_quadratic_loss() {
        let (mut st, id) = quadratic();
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() });
        let start = quad_step(&st, id).0;
        for _ in 0..50 {
            let (_, g) = quad_step(&st, id);
            opt.step(&mut st, &g);
        }
        let mid = quad_step(&st, id).0;
        opt.switch_to_amsgrad();
        for _ in 0..50 {
            let (_, g) = quad_step(&st, id);
            opt.step(&mut st, &g);
        }
        let end = quad_step(&st, id).0;
        assert!(mid < start && end < mid, "{} {} {}", start, mid, end);
    }

    #[test]
    fn returns_best_snapshot() {
        let (mut st, id) = quadratic();
        let sched = OptimizerSchedule {
            eval_interval: 1,
            max_steps: 5,
            patience: 100,
            adam: AdamConfig { lr: 0.1, ..Default::default() },
            clip_norm: None,
        };
        let mut snapshots = Vec::new();
        let mut i = 0;
        run_schedule(&sched, &mut st, |s, _| quad_step(s, id), |s| {
            snapshots.push(s.value(id).clone());
            i += 1;
            if i == 2 {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(st.value(id), &snapshots[1]);
    }
}
