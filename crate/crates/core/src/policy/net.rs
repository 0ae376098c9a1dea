//! MLP policy with masked softmax output, REINFORCE and imitation updates.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::reward::discounted_returns;
use crate::config::Optimizer;
use crate::math::{all_finite, axpy};
use crate::{Error, Result, Rng};

/// Fully connected ReLU network; `sizes[0]` is the state length and the
/// last entry the number of actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub sizes: Vec<usize>,
    /// Per layer, `out x in` row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl PolicyParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let weights = sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        PolicyParams { sizes: sizes.to_vec(), weights, biases }
    }

    /// Uniform Glorot initialisation, zero biases.
    pub fn new(input: usize, hidden: &[usize], actions: usize, rng: &mut Rng) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(actions);
        let mut p = Self::zeros(&sizes);
        for (l, w) in p.weights.iter_mut().enumerate() {
            let bound = libm::sqrt(6.0 / (sizes[l] + sizes[l + 1]) as f64);
            for x in w.iter_mut() {
                *x = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_actions(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn check_input(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: state.len() });
        }
        Ok(())
    }

    /// Activations of every layer (input first, logits last).
    fn activations(&self, state: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![state.to_vec()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let x = acts.last().unwrap();
            let n_in = x.len();
            let mut y: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(r, &bias)| w[r * n_in..(r + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias)
                .collect();
            if l < last {
                for v in y.iter_mut() {
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(y);
        }
        acts
    }

    pub fn logits(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_input(state)?;
        Ok(self.activations(state).pop().unwrap())
    }

    /// Action distribution with `allowed[a] == false` forced to exactly 0.
    pub fn forward(&self, state: &[f64], allowed: &[bool]) -> Result<Vec<f64>> {
        let logits = self.logits(state)?;
        masked_softmax(&logits, allowed)
    }

    /// Adds `scale * ∇_θ ln π(action | state)` to `grad`.
    pub fn accumulate_log_prob_grad(&self, state: &[f64], allowed: &[bool], action: usize, scale: f64, grad: &mut PolicyParams) -> Result<()> {
        self.check_input(state)?;
        if action >= self.n_actions() || !allowed[action] {
            return Err(Error::InvalidAction(action));
        }
        let acts = self.activations(state);
        let probs = masked_softmax(acts.last().unwrap(), allowed)?;
        let mut delta: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(a, &p)| if !allowed[a] { 0.0 } else { scale * ((a == action) as u8 as f64 - p) })
            .collect();
        for l in (0..self.weights.len()).rev() {
            let x = &acts[l];
            let n_in = x.len();
            let gw = &mut grad.weights[l];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, x, &mut gw[r * n_in..(r + 1) * n_in]);
                }
            }
            axpy(1.0, &delta, &mut grad.biases[l]);
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &w[r * n_in..(r + 1) * n_in], &mut prev);
                }
            }
            for (p, &a) in prev.iter_mut().zip(x) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(())
    }

    pub fn axpy(&mut self, alpha: f64, other: &PolicyParams) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights).chain(self.biases.iter_mut().zip(&other.biases)) {
            axpy(alpha, b, a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|t| all_finite(t))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.biases).flat_map(|t| t.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mutable access to the `i`-th scalar of [`flatten`](Self::flatten).
    pub fn scalar_mut(&mut self, mut i: usize) -> &mut f64 {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            if i < t.len() {
                return &mut t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }
}

/// Softmax over the allowed entries; disallowed entries are exactly 0.
pub fn masked_softmax(logits: &[f64], allowed: &[bool]) -> Result<Vec<f64>> {
    assert_eq!(logits.len(), allowed.len(), "mask length");
    let max = logits
        .iter()
        .zip(allowed)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllActionsMasked);
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(allowed)
        .map(|(&l, &ok)| if ok { libm::exp(l - max) } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= total;
    }
    Ok(out)
}

/// Samples an index from a probability vector.
pub fn sample_action(probs: &[f64], rng: &mut Rng) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = a;
            if x < acc {
                return a;
            }
        }
    }
    last
}

/// Highest-probability index, lowest index on ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = a;
        }
    }
    best
}

/// One decision of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    /// Actions available at decision time.
    pub allowed: Vec<bool>,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `∇_θ Σ_t G_t ln π(a_t | s_t)`, optionally with the trajectory's mean
/// return subtracted from every `G_t`.
pub fn reinforce_gradient(params: &PolicyParams, traj: &Trajectory, gamma: f64, mean_baseline: bool) -> Result<PolicyParams> {
    let mut returns = discounted_returns(&traj.rewards(), gamma);
    if mean_baseline && !returns.is_empty() {
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        for g in returns.iter_mut() {
            *g -= mean;
        }
    }
    let mut grad = params.zeros_like();
    for (step, &g) in traj.steps.iter().zip(&returns) {
        if g != 0.0 {
            params.accumulate_log_prob_grad(&step.state, &step.allowed, step.action, g, &mut grad)?;
        }
    }
    Ok(grad)
}

/// Plain gradient-ascent REINFORCE step `θ += lr Σ_t G_t ∇ ln π(a_t|s_t)`.
pub fn reinforce_update(params: &mut PolicyParams, traj: &Trajectory, gamma: f64, lr: f64) -> Result<()> {
    let grad = reinforce_gradient(params, traj, gamma, false)?;
    params.axpy(lr, &grad);
    if params.is_finite() {
        Ok(())
    } else {
        Err(Error::DivergenceDetected)
    }
}

/// Applies ascent steps with SGD or Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptimizer {
    pub kind: Optimizer,
    pub lr: f64,
    moments: Option<(PolicyParams, PolicyParams)>,
    t: u64,
}

impl PolicyOptimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: Optimizer, lr: f64) -> Self {
        PolicyOptimizer { kind, lr, moments: None, t: 0 }
    }

    /// `θ += step(grad)`, i.e. moves along `grad`.
    pub fn ascend(&mut self, params: &mut PolicyParams, grad: &PolicyParams) -> Result<()> {
        match self.kind {
            Optimizer::Sgd => params.axpy(self.lr, grad),
            Optimizer::Adam => {
                let (m, v) = self.moments.get_or_insert_with(|| (params.zeros_like(), params.zeros_like()));
                self.t += 1;
                let c1 = 1.0 - libm::pow(Self::BETA1, self.t as f64);
                let c2 = 1.0 - libm::pow(Self::BETA2, self.t as f64);
                let tensors = params.weights.iter_mut().chain(params.biases.iter_mut());
                let g_t = grad.weights.iter().chain(&grad.biases);
                let m_t = m.weights.iter_mut().chain(m.biases.iter_mut());
                let v_t = v.weights.iter_mut().chain(v.biases.iter_mut());
                for (((p, g), m), v) in tensors.zip(g_t).zip(m_t).zip(v_t) {
                    for i in 0..p.len() {
                        m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                        v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                        p[i] += self.lr * (m[i] / c1) / (libm::sqrt(v[i] / c2) + Self::EPS);
                    }
                }
            }
        }
        if params.is_finite() {
            Ok(())
        } else {
            Err(Error::DivergenceDetected)
        }
    }
}

/// A (state, mask, teacher action) example for imitation pretraining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub state: Vec<f64>,
    pub allowed: Vec<bool>,
    pub action: usize,
}

/// Masked cross-entropy imitation with minibatch SGD. Returns the mean
/// loss of each epoch (measured during the epoch).
pub fn imitate(params: &mut PolicyParams, demos: &[Demonstration], epochs: usize, lr: f64, batch: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..demos.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch.max(1)) {
            let mut grad = params.zeros_like();
            for &i in chunk {
                let d = &demos[i];
                let probs = params.forward(&d.state, &d.allowed)?;
                total -= libm::log(probs[d.action].max(1e-300));
                params.accumulate_log_prob_grad(&d.state, &d.allowed, d.action, 1.0 / chunk.len() as f64, &mut grad)?;
            }
            params.axpy(lr, &grad);
            if !params.is_finite() {
                return Err(Error::DivergenceDetected);
            }
        }
        losses.push(if demos.is_empty() { 0.0 } else { total / demos.len() as f64 });
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use proptest::prelude::*;

    fn random_net(seed: u64) -> PolicyParams {
        let mut rng = rng_from_seed(seed);
        let mut p = PolicyParams::new(7, &[5], 4, &mut rng);
        for b in p.biases.iter_mut() {
            for x in b.iter_mut() {
                *x = rng.gen_range(-0.5..0.5);
            }
        }
        p
    }

    #[test]
    fn single_allowed_action_gets_all_mass() {
        let p = random_net(1);
        let probs = p.forward(&[0.3; 7], &[false, false, true, false]).unwrap();
        assert_eq!(probs, [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.forward(&[0.3; 7], &[false; 4]), Err(Error::AllActionsMasked));
    }

    #[test]
    fn zero_weights_give_uniform() {
        let p = PolicyParams::zeros(&[3, 4, 5]);
        let probs = p.forward(&[1.0, 2.0, 3.0], &[true; 5]).unwrap();
        assert!(probs.iter().all(|&x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn wrong_state_length_is_rejected() {
        let p = random_net(1);
        assert_eq!(p.forward(&[0.0; 3], &[true; 4]), Err(Error::DimensionMismatch { expected: 7, got: 3 }));
    }

    fn random_trajectory(p: &PolicyParams, seed: u64) -> Trajectory {
        let mut rng = rng_from_seed(seed);
        let n = rng.gen_range(1..6);
        let mut steps = Vec::new();
        let mut allowed = vec![true; p.n_actions()];
        for _ in 0..n {
            let state: Vec<f64> = (0..p.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let probs = p.forward(&state, &allowed).unwrap();
            let action = sample_action(&probs, &mut rng);
            steps.push(Step { state, allowed: allowed.clone(), action, reward: rng.gen_range(-0.5..1.0) });
            if action + 1 < p.n_actions() {
                allowed[action] = false;
            }
        }
        Trajectory { steps }
    }

    /// `Σ_t G_t ln π(a_t|s_t)` with returns held fixed.
    fn objective(p: &PolicyParams, traj: &Trajectory, gamma: f64) -> f64 {
        let g = discounted_returns(&traj.rewards(), gamma);
        traj.steps
            .iter()
            .zip(&g)
            .map(|(s, g)| g * p.forward(&s.state, &s.allowed).unwrap()[s.action].ln())
            .sum()
    }

    #[test]
    fn reinforce_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let p = random_net(seed);
            let traj = random_trajectory(&p, seed + 50);
            let grad = reinforce_gradient(&p, &traj, 0.7, false).unwrap().flatten();
            let mut q = p.clone();
            let h = 1e-5;
            let fd: Vec<f64> = (0..p.len())
                .map(|i| {
                    let x = *q.scalar_mut(i);
                    *q.scalar_mut(i) = x + h;
                    let up = objective(&q, &traj, 0.7);
                    *q.scalar_mut(i) = x - h;
                    let down = objective(&q, &traj, 0.7);
                    *q.scalar_mut(i) = x;
                    (up - down) / (2.0 * h)
                })
                .collect();
            let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
            assert!(diff / scale < 1e-4, "seed {seed}: {}", diff / scale);
        }
    }

    #[test]
    fn zero_returns_leave_parameters_unchanged() {
        let mut p = random_net(3);
        let mut traj = random_trajectory(&p, 4);
        for s in traj.steps.iter_mut() {
            s.reward = 0.0;
        }
        let before = p.clone();
        reinforce_update(&mut p, &traj, 0.7, 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn positive_return_raises_taken_action() {
        let mut p = random_net(5);
        let state = vec![0.5; 7];
        let allowed = vec![true, true, false, true];
        let before = p.forward(&state, &allowed).unwrap()[1];
        let traj = Trajectory { steps: vec![Step { state: state.clone(), allowed: allowed.clone(), action: 1, reward: 1.0 }] };
        reinforce_update(&mut p, &traj, 0.7, 0.01).unwrap();
        assert!(p.forward(&state, &allowed).unwrap()[1] > before);
    }

    #[test]
    fn masked_gradient_never_touches_masked_logits() {
        let p = random_net(9);
        let mut grad = p.zeros_like();
        p.accumulate_log_prob_grad(&[0.2; 7], &[true, false, true, true], 0, 1.0, &mut grad).unwrap();
        assert!(grad.biases[1][1] == 0.0 && grad.weights[1][5..10].iter().all(|&x| x == 0.0));
        assert_eq!(p.accumulate_log_prob_grad(&[0.2; 7], &[true, false, true, true], 1, 1.0, &mut grad), Err(Error::InvalidAction(1)));
    }

    #[test]
    fn adam_moves_toward_gradient() {
        let mut p = random_net(2);
        let before = p.clone();
        let mut grad = p.zeros_like();
        grad.biases[1][0] = 3.0;
        let mut opt = PolicyOptimizer::new(Optimizer::Adam, 0.01);
        opt.ascend(&mut p, &grad).unwrap();
        // first Adam step has magnitude lr on coordinates with nonzero gradient
        assert!((p.biases[1][0] - before.biases[1][0] - 0.01).abs() < 1e-6);
        assert_eq!(p.biases[1][1], before.biases[1][1]);
    }

    #[test]
    fn imitation_with_zero_epochs_is_noop_and_learns_otherwise() {
        let mut p = random_net(6);
        let demos: Vec<Demonstration> = (0..20)
            .map(|i| Demonstration { state: vec![i as f64 / 20.0; 7], allowed: vec![true; 4], action: 2 })
            .collect();
        let before = p.clone();
        imitate(&mut p, &demos, 0, 0.1, 8, &mut rng_from_seed(1)).unwrap();
        assert_eq!(p, before);
        let losses = imitate(&mut p, &demos, 50, 0.1, 8, &mut rng_from_seed(1)).unwrap();
        assert!(losses[49] < losses[0]);
        assert_eq!(argmax(&p.forward(&demos[3].state, &demos[3].allowed).unwrap()), 2);
    }

    proptest! {
        #[test]
        fn distribution_is_normalised(seed in any::<u64>(), mask in proptest::collection::vec(any::<bool>(), 4), shift in -50.0f64..50.0) {
            prop_assume!(mask.iter().any(|&m| m));
            let p = random_net(seed);
            let state: Vec<f64> = (0..7).map(|i| (i as f64 - 3.0) * 0.4).collect();
            let probs = p.forward(&state, &mask).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (pr, &ok) in probs.iter().zip(&mask) {
                if !ok { prop_assert_eq!(*pr, 0.0); }
            }
            // adding a constant to every logit changes nothing
            let logits = p.logits(&state).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let q = masked_softmax(&shifted, &mask).unwrap();
            for (a, b) in probs.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
