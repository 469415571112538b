use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Lower bound applied to log-probabilities inside the KL penalty and the likelihood reward.
pub const LOG_PROB_FLOOR: f64 = -46.051_701_859_880_914; // ln(1e-20)

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    pub logits: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Shape("empty logits".into()));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        let log_probs = log_softmax(&logits);
        Ok(Self { logits, log_probs })
    }

    /// Builds from stored log-probabilities (logits equal to them).
    pub fn from_log_probs(log_probs: Vec<f64>) -> Result<Self> {
        Self::from_logits(log_probs)
    }

    pub fn k(&self) -> usize {
        self.logits.len()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn log_prob(&self, id: usize) -> Result<f64> {
        self.log_probs
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("token {id} out of range for K = {}", self.k())))
    }

    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .map(|&l| {
                let p = l.exp();
                if p > 0.0 {
                    p * l
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    }

    /// Inverse-CDF draw from one uniform variate.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (k, l) in self.log_probs.iter().enumerate() {
            let p = l.exp();
            if p > 0.0 {
                last_nonzero = k;
            }
            acc += p;
            if u < acc {
                return k;
            }
        }
        last_nonzero
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &l) in self.log_probs.iter().enumerate() {
            if l > self.log_probs[best] {
                best = k;
            }
        }
        best
    }
}

/// Forward KL `Σ p (log p − max(log q, floor))`.
pub fn kl_categorical(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    if p.k() != q.k() {
        return Err(Error::Shape(format!("KL between K = {} and K = {}", p.k(), q.k())));
    }
    Ok(kl_from_log_probs(&p.log_probs, &q.log_probs))
}

pub fn kl_from_log_probs(p: &[f64], q: &[f64]) -> f64 {
    let kl: f64 = p
        .iter()
        .zip(q)
        .map(|(&lp, &lq)| {
            let pk = lp.exp();
            if pk > 0.0 {
                pk * (lp - lq.max(LOG_PROB_FLOOR))
            } else {
                0.0
            }
        })
        .sum();
    kl.max(0.0)
}

/// Gradient of [`kl_from_log_probs`] with respect to the logits behind `q`.
pub fn kl_grad_q_logits(p: &[f64], q: &[f64], out: &mut [f64]) {
    let mut mass = 0.0;
    for (&lp, &lq) in p.iter().zip(q) {
        if lq > LOG_PROB_FLOOR {
            mass += lp.exp();
        }
    }
    for ((o, &lp), &lq) in out.iter_mut().zip(p).zip(q) {
        let own = if lq > LOG_PROB_FLOOR { lp.exp() } else { 0.0 };
        *o = -own + lq.exp() * mass;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;

    #[test]
    fn one_hot_logits() {
        let mut l = vec![-30.0; 5];
        l[3] = 30.0;
        let d = CategoricalDist::from_logits(l).unwrap();
        let mut rng = rng_from(0);
        assert!((0..1000).all(|_| d.sample(&mut rng) == 3));
        assert!(d.entropy() < 1e-20);
    }

    #[test]
    fn uniform_entropy() {
        let d = CategoricalDist::from_logits(vec![0.7; 4]).unwrap();
        assert!((d.entropy() - 4f64.ln()).abs() < 1e-12);
        assert!(d.log_prob(4).is_err());
    }

    #[test]
    fn sample_frequencies_within_three_sigma() {
        let d = CategoricalDist::from_logits(vec![0.1, 1.0, -0.5, 2.0, 0.0]).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 5];
        let mut rng = rng_from(11);
        for _ in 0..n {
            counts[d.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(d.probs()) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn kl_examples() {
        let p = CategoricalDist::from_logits(vec![0.3, -1.0, 2.0]).unwrap();
        assert!(kl_categorical(&p, &p).unwrap().abs() < 1e-15);
        let point = CategoricalDist::from_logits(vec![0.0, -1e300]).unwrap();
        let half = CategoricalDist::from_logits(vec![0.0, 0.0]).unwrap();
        assert!((kl_categorical(&point, &half).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(kl_categorical(&p, &half).is_err());
    }

    #[test]
    fn kl_argument_order_is_forward() {
        // p puts mass on a mode that q nearly ignores; the forward direction is large.
        let p = CategoricalDist::from_logits(vec![0.0, 0.0]).unwrap();
        let q = CategoricalDist::from_logits(vec![0.0, -10.0]).unwrap();
        let fwd = kl_categorical(&p, &q).unwrap();
        let hand = 0.5 * (0.5f64.ln() - q.log_probs[0]) + 0.5 * (0.5f64.ln() - q.log_probs[1]);
        assert!((fwd - hand).abs() < 1e-12);
        assert!(fwd > kl_categorical(&q, &p).unwrap());
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let p = log_softmax(&[0.2, -0.3, 1.1, 0.0]);
        let z = [0.5, 0.1, -0.7, 0.3];
        let mut g = [0.0; 4];
        kl_grad_q_logits(&p, &log_softmax(&z), &mut g);
        for i in 0..4 {
            let mut zp = z;
            zp[i] += 1e-6;
            let mut zm = z;
            zm[i] -= 1e-6;
            let fd = (kl_from_log_probs(&p, &log_softmax(&zp)) - kl_from_log_probs(&p, &log_softmax(&zm))) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn shift_invariance(logits in prop::collection::vec(-20.0..20.0f64, 1..40), c in -1e3..1e3f64) {
            let a = log_softmax(&logits);
            let shifted: Vec<f64> = logits.iter().map(|z| z + c).collect();
            let b = log_softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            let total: f64 = a.iter().map(|l| l.exp()).sum();
            prop_assert!((total - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn kl_is_non_negative(a in prop::collection::vec(-10.0..10.0f64, 8), b in prop::collection::vec(-10.0..10.0f64, 8)) {
            let p = CategoricalDist::from_logits(a).unwrap();
            let q = CategoricalDist::from_logits(b).unwrap();
            prop_assert!(kl_categorical(&p, &q).unwrap() >= 0.0);
        }
    }
}
