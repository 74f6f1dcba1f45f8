//! Downstream probes trained on frozen representations.

use rand::Rng;

use crate::autodiff::{Adam, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Per-column mean and standard deviation estimated on training rows.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Tensor) -> Self {
        let (n, f) = (x.rows().max(1) as f64, x.cols());
        let mut mean = vec![0.0; f];
        for r in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row_slice(r)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; f];
        for r in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row_slice(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var.into_iter().map(|v| v.sqrt().max(1e-12)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let f = x.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % f;
            *v = (*v - self.mean[c]) / self.std[c];
        }
        out
    }
}

const LOGREG_ITERS: usize = 300;
const LOGREG_LR: f64 = 0.05;
const WEIGHT_DECAY: f64 = 1e-4;

/// Binary logistic regression trained full-batch.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    scaler: Standardizer,
    w: Tensor,
    b: Tensor,
}

impl LogisticRegression {
    pub fn fit(x: &Tensor, y: &[bool]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Contract("features and labels differ in length".into()));
        }
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            return Err(Error::Contract(
                "logistic regression needs both classes in the training split".into(),
            ));
        }
        let scaler = Standardizer::fit(x);
        let xs = scaler.apply(x);
        let sign = Tensor::from_rows(
            y.len(),
            1,
            y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect(),
        );
        let mut w = Tensor::zeros(x.cols(), 1);
        let mut b = Tensor::zeros(1, 1);
        let mut adam = Adam::new(LOGREG_LR, &[&w, &b]);
        for _ in 0..LOGREG_ITERS {
            let tape = Tape::new();
            let (wv, bv) = (tape.param(&w), tape.param(&b));
            let z = tape.constant(xs.clone()).matmul(wv)?.add_row(bv)?;
            let nll = z
                .mul(tape.constant(sign.clone()))?
                .log_sigmoid()
                .mean()
                .scale(-1.0);
            let loss = nll.add(wv.sum_squares().scale(WEIGHT_DECAY))?;
            let g = tape.backward(loss)?;
            adam.step(&mut [&mut w, &mut b], &[g.get(wv), g.get(bv)]);
        }
        Ok(Self { scaler, w, b })
    }

    /// Decision scores (log-odds).
    pub fn decision(&self, x: &Tensor) -> Vec<f64> {
        let z = self.scaler.apply(x).matmul(&self.w);
        z.data().iter().map(|v| v + self.b.item()).collect()
    }
}

const PROBE_MAX_EPOCHS: usize = 500;
const PROBE_PATIENCE: usize = 50;
const PROBE_LR: f64 = 0.05;

/// Softmax classifier, optionally with one tanh hidden layer, early-stopped
/// on validation accuracy.
#[derive(Debug, Clone)]
pub struct SoftmaxProbe {
    scaler: Standardizer,
    layers: Vec<Tensor>,
}

impl SoftmaxProbe {
    /// `hidden = 0` gives a purely linear probe.
    pub fn fit<R: Rng + ?Sized>(
        train: (&Tensor, &[usize]),
        val: (&Tensor, &[usize]),
        classes: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (x, y) = train;
        if x.rows() != y.len() || val.0.rows() != val.1.len() {
            return Err(Error::Contract("features and labels differ in length".into()));
        }
        if x.rows() == 0 {
            return Err(Error::Contract("empty training split".into()));
        }
        let scaler = Standardizer::fit(x);
        let xs = scaler.apply(x);
        let mut onehot = Tensor::zeros(y.len(), classes);
        for (i, &c) in y.iter().enumerate() {
            if c >= classes {
                return Err(Error::Contract(format!("label {c} outside {classes} classes")));
            }
            onehot.set(i, c, 1.0);
        }
        let f = x.cols();
        let mut layers = if hidden == 0 {
            vec![Tensor::glorot(f, classes, rng), Tensor::zeros(1, classes)]
        } else {
            vec![
                Tensor::glorot(f, hidden, rng),
                Tensor::zeros(1, hidden),
                Tensor::glorot(hidden, classes, rng),
                Tensor::zeros(1, classes),
            ]
        };
        let refs: Vec<&Tensor> = layers.iter().collect();
        let mut adam = Adam::new(PROBE_LR, &refs);
        let mut best = (f64::NEG_INFINITY, layers.clone());
        let mut since_best = 0;
        let probe_val = |layers: &[Tensor]| -> Result<f64> {
            let p = Self {
                scaler: scaler.clone(),
                layers: layers.to_vec(),
            };
            let pred = p.predict(val.0)?;
            let hits = pred.iter().zip(val.1).filter(|(a, b)| a == b).count();
            Ok(if val.1.is_empty() {
                0.0
            } else {
                hits as f64 / val.1.len() as f64
            })
        };
        for _ in 0..PROBE_MAX_EPOCHS {
            let tape = Tape::new();
            let vars: Vec<Var<'_>> = layers.iter().map(|t| tape.param(t)).collect();
            let logits = forward(tape.constant(xs.clone()), &vars)?;
            let nll = logits
                .log_softmax()
                .mul(tape.constant(onehot.clone()))?
                .sum()
                .scale(-1.0 / y.len() as f64);
            let mut loss = nll;
            for w in vars.iter().step_by(2) {
                loss = loss.add(w.sum_squares().scale(WEIGHT_DECAY))?;
            }
            let g = tape.backward(loss)?;
            let grads: Vec<Option<&Tensor>> = vars.iter().map(|v| g.get(*v)).collect();
            let mut params: Vec<&mut Tensor> = layers.iter_mut().collect();
            adam.step(&mut params, &grads);

            let acc = probe_val(&layers)?;
            if acc > best.0 {
                best = (acc, layers.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= PROBE_PATIENCE {
                    break;
                }
            }
        }
        Ok(Self {
            scaler,
            layers: best.1,
        })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = self.layers.iter().map(|t| tape.constant(t.clone())).collect();
        let logits = forward(tape.constant(self.scaler.apply(x)), &vars)?.value();
        Ok((0..logits.rows())
            .map(|r| {
                logits
                    .row_slice(r)
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0
            })
            .collect())
    }
}

fn forward<'t>(x: Var<'t>, layers: &[Var<'t>]) -> Result<Var<'t>> {
    if layers.len() == 2 {
        x.matmul(layers[0])?.add_row(layers[1])
    } else {
        x.matmul(layers[0])?
            .add_row(layers[1])?
            .tanh()
            .matmul(layers[2])?
            .add_row(layers[3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_separates_a_line() {
        let x = Tensor::from_rows(6, 1, vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = [false, false, false, true, true, true];
        let m = LogisticRegression::fit(&x, &y).unwrap();
        let s = m.decision(&x);
        assert!(s[..3].iter().all(|&v| v < 0.0) && s[3..].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn logistic_rejects_single_class() {
        let x = Tensor::zeros(3, 2);
        assert!(matches!(
            LogisticRegression::fit(&x, &[true, true, true]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn probe_learns_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let centers = [[3.0, 0.0], [0.0, 3.0], [-3.0, -3.0]];
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..90 {
            let c = i % 3;
            data.push(centers[c][0] + rng.random_range(-1.0..1.0));
            data.push(centers[c][1] + rng.random_range(-1.0..1.0));
            y.push(c);
        }
        let x = Tensor::from_rows(90, 2, data);
        for hidden in [0, 8] {
            let p = SoftmaxProbe::fit((&x, &y), (&x, &y), 3, hidden, &mut rng).unwrap();
            assert_eq!(p.predict(&x).unwrap(), y);
        }
    }
}
