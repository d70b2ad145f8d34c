//! Joint objective and its analytic gradient.

use serde::{Deserialize, Serialize};

use super::{dot, AttentionClassifier, ForwardOutput, NeuralError, ParamTensors, Result, Trace};
use crate::num::{softmax, Real};

/// How the attention term compares â with the binary rationale mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionLossMode {
    /// Per-token binary cross-entropy on clipped â, averaged over tokens.
    #[default]
    Bce,
    /// Cross-entropy between the mask renormalised to sum to one and â.
    Distribution,
}

/// Weights of the three loss terms.
///
/// `task_weight = 1, attention_weight = 1, token_weight = 0` is the
/// unweighted joint loss of the regularised model; setting
/// `attention_weight = 0` gives the baseline model and
/// `task_weight = 0, token_weight = 1` the token classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective<T> {
    pub task_weight: T,
    pub attention_weight: T,
    pub token_weight: T,
    pub eps: T,
    pub mode: AttentionLossMode,
}

impl<T: Real> Objective<T> {
    pub fn joint(attention_weight: T, eps: T) -> Self {
        Objective {
            task_weight: T::one(),
            attention_weight,
            token_weight: T::zero(),
            eps,
            mode: AttentionLossMode::Bce,
        }
    }

    pub fn token_classification(eps: T) -> Self {
        Objective {
            task_weight: T::zero(),
            attention_weight: T::zero(),
            token_weight: T::one(),
            eps,
            mode: AttentionLossMode::Bce,
        }
    }

    fn check(&self, out: &ForwardOutput<T>, label: usize, mask: &[u8]) -> Result<()> {
        if mask.len() != out.attention.len() {
            return Err(NeuralError::LengthMismatch {
                mask: mask.len(),
                tokens: out.attention.len(),
            });
        }
        if label >= out.seq_logits.len() {
            return Err(NeuralError::BadLabel {
                label,
                num_classes: out.seq_logits.len(),
            });
        }
        Ok(())
    }

    pub fn loss(&self, out: &ForwardOutput<T>, label: usize, mask: &[u8]) -> Result<T> {
        self.check(out, label, mask)?;
        let mut total = T::zero();
        if self.task_weight != T::zero() {
            total += self.task_weight * cross_entropy(&out.seq_logits, label);
        }
        if self.attention_weight != T::zero() {
            total += self.attention_weight * attention_term(out, mask, self.eps, self.mode);
        }
        if self.token_weight != T::zero() {
            total += self.token_weight * token_term(out, mask);
        }
        Ok(total)
    }
}

/// `CE(seq_logits, label) + weight * mean_t BCE(mask_t, clip(â_t, eps, 1 - eps))`.
pub fn loss_joint<T: Real>(
    out: &ForwardOutput<T>,
    label: usize,
    mask: &[u8],
    weight: T,
    eps: T,
) -> Result<T> {
    Objective::joint(weight, eps).loss(out, label, mask)
}

fn cross_entropy<T: Real>(logits: &[T], label: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    lse - logits[label]
}

fn clip<T: Real>(x: T, eps: T) -> T {
    x.max(eps).min(T::one() - eps)
}

fn mask_mass<T: Real>(out: &ForwardOutput<T>, mask: &[u8]) -> T {
    mask.iter()
        .zip(&out.padding)
        .filter(|(&m, &pad)| !pad && m == 1)
        .fold(T::zero(), |acc, _| acc + T::one())
}

fn attention_term<T: Real>(
    out: &ForwardOutput<T>,
    mask: &[u8],
    eps: T,
    mode: AttentionLossMode,
) -> T {
    let active = T::from_usize_lossy(out.active_len());
    let mass = mask_mass(out, mask);
    let mut total = T::zero();
    for ((&a_hat, &m), &pad) in out.attention.iter().zip(mask).zip(&out.padding) {
        if pad {
            continue;
        }
        let c = clip(a_hat, eps);
        match mode {
            AttentionLossMode::Bce => {
                total += if m == 1 {
                    -c.ln()
                } else {
                    -(T::one() - c).ln()
                };
            }
            AttentionLossMode::Distribution => {
                if m == 1 {
                    total += -c.ln() / mass;
                }
            }
        }
    }
    match mode {
        AttentionLossMode::Bce => total / active,
        AttentionLossMode::Distribution => total,
    }
}

fn token_term<T: Real>(out: &ForwardOutput<T>, mask: &[u8]) -> T {
    let active = T::from_usize_lossy(out.active_len());
    out.token_logits
        .iter()
        .zip(mask)
        .zip(&out.padding)
        .filter(|(_, &pad)| !pad)
        .map(|((l, &m), _)| cross_entropy(l, m as usize))
        .sum::<T>()
        / active
}

impl<T: Real> AttentionClassifier<T> {
    /// Loss on one instance plus the gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        ids: &[usize],
        label: usize,
        mask: &[u8],
        objective: &Objective<T>,
    ) -> Result<(T, ParamTensors<T>)> {
        let trace = self.trace(ids, None)?;
        let loss = objective.loss(&trace.output, label, mask)?;
        let mut grads = ParamTensors::zeros(self.vocab.len(), self.dim, self.num_classes);
        self.backward(&trace, label, mask, objective, &mut grads);
        Ok((loss, grads))
    }

    /// Accumulates the gradient of `objective` into `grads`.
    pub(crate) fn backward(
        &self,
        trace: &Trace<T>,
        label: usize,
        mask: &[u8],
        objective: &Objective<T>,
        grads: &mut ParamTensors<T>,
    ) {
        let d = self.dim;
        let p = &self.params;
        let out = &trace.output;
        let n = out.attention.len();
        let active = T::from_usize_lossy(out.active_len());
        let mut grad_embedded = vec![vec![T::zero(); d]; n];
        let mut grad_attention = vec![T::zero(); n];

        // sequence head and pooling
        if objective.task_weight != T::zero() {
            let mut g_logits = softmax(&out.seq_logits);
            g_logits[label] -= T::one();
            g_logits
                .iter_mut()
                .for_each(|g| *g *= objective.task_weight);
            let mut g_pooled = vec![T::zero(); d];
            for (c, &g) in g_logits.iter().enumerate() {
                grads.seq_bias[c] += g;
                for i in 0..d {
                    grads.seq_weight[c * d + i] += g * trace.pooled[i];
                    g_pooled[i] += g * p.seq_weight[c * d + i];
                }
            }
            for t in 0..n {
                if out.padding[t] {
                    continue;
                }
                grad_attention[t] += dot(&g_pooled, &trace.embedded[t]);
                for i in 0..d {
                    grad_embedded[t][i] += out.attention[t] * g_pooled[i];
                }
            }
        }

        // attention supervision
        if objective.attention_weight != T::zero() {
            let eps = objective.eps;
            let mass = mask_mass(out, mask);
            for t in 0..n {
                let a_hat = out.attention[t];
                if out.padding[t] || a_hat <= eps || a_hat >= T::one() - eps {
                    continue;
                }
                let g = match objective.mode {
                    AttentionLossMode::Bce => {
                        let dbce = if mask[t] == 1 {
                            -T::one() / a_hat
                        } else {
                            T::one() / (T::one() - a_hat)
                        };
                        dbce / active
                    }
                    AttentionLossMode::Distribution if mask[t] == 1 => -T::one() / (a_hat * mass),
                    AttentionLossMode::Distribution => T::zero(),
                };
                grad_attention[t] += objective.attention_weight * g;
            }
        }

        // softmax -> scores -> scorer
        let weighted: T = (0..n)
            .filter(|&t| !out.padding[t])
            .map(|t| out.attention[t] * grad_attention[t])
            .sum();
        for t in 0..n {
            if out.padding[t] {
                continue;
            }
            let g_score = out.attention[t] * (grad_attention[t] - weighted);
            if g_score == T::zero() {
                continue;
            }
            let h = &trace.hidden[t];
            let e = &trace.embedded[t];
            for i in 0..d {
                grads.query[i] += g_score * h[i];
                let g_pre = g_score * p.query[i] * (T::one() - h[i] * h[i]);
                grads.attn_bias[i] += g_pre;
                for j in 0..d {
                    grads.attn_proj[i * d + j] += g_pre * e[j];
                    grad_embedded[t][j] += g_pre * p.attn_proj[i * d + j];
                }
            }
        }

        // token head
        if objective.token_weight != T::zero() {
            for t in 0..n {
                if out.padding[t] {
                    continue;
                }
                let mut g = softmax(&out.token_logits[t]);
                g[mask[t] as usize] -= T::one();
                let e = &trace.embedded[t];
                for (c, &gc) in g.iter().enumerate() {
                    let gc = gc * objective.token_weight / active;
                    grads.tok_bias[c] += gc;
                    for i in 0..d {
                        grads.tok_weight[c * d + i] += gc * e[i];
                        grad_embedded[t][i] += gc * p.tok_weight[c * d + i];
                    }
                }
            }
        }

        for (t, &id) in trace.ids.iter().enumerate() {
            if out.padding[t] {
                continue;
            }
            let row = &mut grads.embedding[id * d..(id + 1) * d];
            for (g, &ge) in row.iter_mut().zip(&grad_embedded[t]) {
                *g += ge;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Vocab;

    fn out(attention: Vec<f64>, seq_logits: Vec<f64>) -> ForwardOutput<f64> {
        let n = attention.len();
        ForwardOutput {
            seq_logits,
            attention,
            token_logits: vec![[0.0, 0.0]; n],
            padding: vec![false; n],
        }
    }

    #[test]
    fn bce_hand_case() {
        // â = [0.5, 0.5], a = [1, 0]: -(ln 0.5 + ln 0.5) / 2 = ln 2
        let o = out(vec![0.5, 0.5], vec![0.0, 0.0]);
        let task = loss_joint(&o, 0, &[1, 0], 0.0, 1e-7).unwrap();
        let joint = loss_joint(&o, 0, &[1, 0], 1.0, 1e-7).unwrap();
        assert!((joint - task - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((task - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_ignores_mask() {
        let o = out(vec![0.2, 0.3, 0.5], vec![1.0, -1.0]);
        let a = loss_joint(&o, 1, &[1, 0, 0], 0.0, 1e-7).unwrap();
        let b = loss_joint(&o, 1, &[0, 1, 1], 0.0, 1e-7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn confident_correct_single_token_tends_to_zero() {
        let mut last = f64::INFINITY;
        for margin in [2.0, 5.0, 10.0, 20.0] {
            let o = out(vec![1.0], vec![margin, 0.0]);
            let l = loss_joint(&o, 0, &[1], 1.0, 1e-7).unwrap();
            assert!(l < last);
            last = l;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn length_mismatch_is_error() {
        let o = out(vec![0.5, 0.5], vec![0.0, 0.0]);
        assert!(matches!(
            loss_joint(&o, 0, &[1], 1.0, 1e-7),
            Err(NeuralError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn distribution_mode_matches_closed_form() {
        let o = out(vec![0.25, 0.25, 0.5], vec![0.0, 0.0]);
        let obj = Objective {
            task_weight: 0.0,
            attention_weight: 1.0,
            token_weight: 0.0,
            eps: 1e-7,
            mode: AttentionLossMode::Distribution,
        };
        // target [0.5, 0, 0.5]
        let expected = -(0.5 * 0.25f64.ln() + 0.5 * 0.5f64.ln());
        assert!((obj.loss(&o, 0, &[1, 0, 1]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn absent_token_gets_zero_gradient() {
        let vocab = Vocab::from_tokens(["a", "b", "c"]);
        let m = AttentionClassifier::<f64>::random(vocab, 3, 2, 11, 0.5).unwrap();
        let ids = m.encode(&["a", "b"]);
        let obj = Objective {
            task_weight: 1.0,
            attention_weight: 1.0,
            token_weight: 1.0,
            eps: 1e-7,
            mode: AttentionLossMode::Bce,
        };
        let (_, g) = m.loss_and_grad(&ids, 1, &[1, 0], &obj).unwrap();
        let c = m.vocab.id("c");
        assert!(g.embedding[c * 3..(c + 1) * 3].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn query_gradient_flows_through_pooling_without_attention_loss() {
        let vocab = Vocab::from_tokens(["a", "b"]);
        let m = AttentionClassifier::<f64>::random(vocab, 4, 2, 3, 0.5).unwrap();
        let ids = m.encode(&["a", "b"]);
        let (_, g) = m
            .loss_and_grad(&ids, 0, &[1, 0], &Objective::joint(0.0, 1e-7))
            .unwrap();
        assert!(g.query.iter().any(|&x| x != 0.0));
    }
}
