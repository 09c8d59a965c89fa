use serde::{Deserialize, Serialize};

use super::{SequenceBatch, TaskKind, Targets};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::tasks::Series;

/// Adding problem: channel 0 is uniform on `[0, 1)`, channel 1 marks exactly
/// two positions; the target is the sum of the two marked values.
pub fn gen_adding_problem(rng: &mut Rng, n: usize, length: usize) -> Result<SequenceBatch> {
    if length < 2 {
        return Err(Error::Config(format!("adding problem needs length ≥ 2, got {length}")));
    }
    let mut inputs = vec![0.0; n * length * 2];
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let base = i * length * 2;
        for t in 0..length {
            inputs[base + t * 2] = rng.uniform();
        }
        let a = rng.below(length);
        let mut b = rng.below(length - 1);
        if b >= a {
            b += 1;
        }
        inputs[base + a * 2 + 1] = 1.0;
        inputs[base + b * 2 + 1] = 1.0;
        targets.push(inputs[base + a * 2] + inputs[base + b * 2]);
    }
    SequenceBatch::new(
        inputs,
        (n, length, 2),
        Targets::Values { out_dim: 1, data: targets },
        TaskKind::Regression,
    )
}

/// Recall of a class shown at the first step, with the rest of the sequence
/// filled by noise tokens. Same layout as [`gen_distractor_classification`].
pub fn gen_first_token_recall(rng: &mut Rng, n: usize, length: usize, classes: usize) -> Result<SequenceBatch> {
    gen_distractor_classification(rng, n, length, classes, 0.0)
}

/// Classification where the first step carries the label's class token and a
/// marker. The token layout per step is `[class one-hot (k) | noise one-hot (k) | marker]`.
///
/// `distractor_fraction` of the remaining steps become distractors: half of
/// them form one contiguous block of *interfering* tokens showing a single
/// wrong class, the rest are *irrelevant* tokens showing uniformly random
/// classes. Every other step is a uniformly drawn noise token.
pub fn gen_distractor_classification(
    rng: &mut Rng,
    n: usize,
    length: usize,
    classes: usize,
    distractor_fraction: f64,
) -> Result<SequenceBatch> {
    if length < 1 {
        return Err(Error::Config("recall task needs length ≥ 1".into()));
    }
    if classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
    }
    if !(0.0..1.0).contains(&distractor_fraction) {
        return Err(Error::Config(format!("distractor_fraction must be in [0, 1), got {distractor_fraction}")));
    }
    let k = classes;
    let features = 2 * k + 1;
    let rest = length - 1;
    let n_distract = (distractor_fraction * rest as f64).round() as usize;
    let n_interfere = n_distract.div_ceil(2);
    let n_irrelevant = n_distract - n_interfere;

    let mut inputs = vec![0.0; n * length * features];
    let mut labels = Vec::with_capacity(n);
    let mut slots: Vec<usize> = Vec::with_capacity(rest);
    for i in 0..n {
        let base = i * length * features;
        let at = |t: usize, f: usize| base + t * features + f;
        let label = rng.below(k);
        labels.push(label);
        inputs[at(0, label)] = 1.0;
        inputs[at(0, 2 * k)] = 1.0;

        // 0 = noise, 1 = interfering, 2 = irrelevant
        let mut kind = vec![0u8; length];
        let mut wrong = 0;
        if n_distract > 0 {
            let start = 1 + rng.below(rest - n_interfere + 1);
            kind[start..start + n_interfere].fill(1);
            wrong = (label + 1 + rng.below(k - 1)) % k;
            slots.clear();
            slots.extend((1..length).filter(|&t| kind[t] == 0));
            rng.shuffle(&mut slots);
            for &t in slots.iter().take(n_irrelevant) {
                kind[t] = 2;
            }
        }
        for t in 1..length {
            match kind[t] {
                1 => inputs[at(t, wrong)] = 1.0,
                2 => inputs[at(t, rng.below(k))] = 1.0,
                _ => inputs[at(t, k + rng.below(k))] = 1.0,
            }
        }
    }
    SequenceBatch::new(
        inputs,
        (n, length, features),
        Targets::Labels(labels),
        TaskKind::Classification { classes: k },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// In steps.
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastComponents {
    pub n_points: usize,
    #[serde(default = "one")]
    pub features: usize,
    pub sinusoids: Vec<Sinusoid>,
    #[serde(default)]
    pub trend_slope: f64,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub noise_std: f64,
}

fn one() -> usize {
    1
}

/// Sum of sinusoids, linear trend and Gaussian noise. Feature `f` shifts every
/// sinusoid's phase by `f·π/3` so multivariate series are not copies.
pub fn gen_synthetic_forecast(rng: &mut Rng, c: &ForecastComponents) -> Result<Series> {
    if c.n_points == 0 || c.features == 0 {
        return Err(Error::Config("synthetic series needs points and features".into()));
    }
    if c.noise_std < 0.0 || c.sinusoids.iter().any(|s| s.period <= 0.0) {
        return Err(Error::Config("noise_std must be ≥ 0 and periods > 0".into()));
    }
    let mut data = Matrix::zeros(c.n_points, c.features);
    for t in 0..c.n_points {
        for f in 0..c.features {
            let shift = f as f64 * std::f64::consts::PI / 3.0;
            let mut v = c.intercept + c.trend_slope * t as f64;
            for s in &c.sinusoids {
                v += s.amplitude * (2.0 * std::f64::consts::PI * t as f64 / s.period + s.phase + shift).sin();
            }
            if c.noise_std > 0.0 {
                v += c.noise_std * rng.normal();
            }
            data.set(t, f, v);
        }
    }
    let columns = if c.features == 1 {
        vec!["OT".to_string()]
    } else {
        (0..c.features).map(|f| format!("x{f}")).collect()
    };
    Series::new(columns, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Target;

    #[test]
    fn adding_problem_structure() {
        let b = gen_adding_problem(&mut Rng::new(1), 200, 30).unwrap();
        for i in 0..b.len() {
            let markers: Vec<usize> = (0..30).filter(|&t| b.step(i, t)[1] == 1.0).collect();
            assert_eq!(markers.len(), 2);
            let sum: f64 = markers.iter().map(|&t| b.step(i, t)[0]).sum();
            let Target::Values(y) = b.target(i) else { panic!() };
            assert_eq!(y[0], sum);
            assert!((0.0..=2.0).contains(&y[0]));
        }
        assert!(gen_adding_problem(&mut Rng::new(1), 2, 1).is_err());
    }

    #[test]
    fn adding_problem_mean_predictor_mse() {
        // Var(U1 + U2) = 2/12
        let b = gen_adding_problem(&mut Rng::new(2), 20_000, 2).unwrap();
        let Targets::Values { data, .. } = &b.targets else { panic!() };
        let mse: f64 = data.iter().map(|y| (y - 1.0).powi(2)).sum::<f64>() / data.len() as f64;
        assert!((mse - 2.0 / 12.0).abs() < 0.005, "{mse}");
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_distractor_classification(&mut Rng::new(4), 20, 50, 4, 0.5).unwrap();
        let b = gen_distractor_classification(&mut Rng::new(4), 20, 50, 4, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_fraction_is_first_token_recall() {
        let a = gen_distractor_classification(&mut Rng::new(8), 30, 20, 3, 0.0).unwrap();
        let b = gen_first_token_recall(&mut Rng::new(8), 30, 20, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recall_length_one_is_just_the_signal() {
        let b = gen_first_token_recall(&mut Rng::new(3), 10, 1, 4).unwrap();
        for i in 0..10 {
            let Target::Label(l) = b.target(i) else { panic!() };
            assert_eq!(b.step(i, 0)[l], 1.0);
            assert_eq!(b.step(i, 0)[8], 1.0);
        }
    }

    #[test]
    fn recall_labels_uniform() {
        let k = 4;
        let n = 10_000;
        let b = gen_first_token_recall(&mut Rng::new(5), n, 3, k).unwrap();
        let Targets::Labels(l) = &b.targets else { panic!() };
        let p = 1.0 / k as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in 0..k {
            let count = l.iter().filter(|&&x| x == c).count() as f64;
            assert!((count - n as f64 * p).abs() < 3.0 * sd, "class {c}: {count}");
        }
    }

    #[test]
    fn distractor_layout() {
        let (len, k) = (300, 4);
        let b = gen_distractor_classification(&mut Rng::new(6), 50, len, k, 0.9).unwrap();
        let n_distract = (0.9f64 * 299.0).round() as usize;
        for i in 0..b.len() {
            let Target::Label(label) = b.target(i) else { panic!() };
            // label is read off the marked first step and nowhere else
            let marked: Vec<usize> = (0..len).filter(|&t| b.step(i, t)[2 * k] == 1.0).collect();
            assert_eq!(marked, vec![0]);
            assert_eq!(b.step(i, 0)[label], 1.0);
            let class_steps = (1..len).filter(|&t| b.step(i, t)[..k].iter().any(|&v| v == 1.0)).count();
            assert_eq!(class_steps, n_distract);
            for t in 0..len {
                assert_eq!(b.step(i, t).iter().filter(|&&v| v == 1.0).count(), if t == 0 { 2 } else { 1 });
            }
        }
    }

    #[test]
    fn distractor_rejects_bad_fraction() {
        assert!(gen_distractor_classification(&mut Rng::new(1), 1, 10, 2, 1.0).is_err());
        assert!(gen_distractor_classification(&mut Rng::new(1), 1, 10, 1, 0.0).is_err());
    }

    #[test]
    fn noiseless_sinusoid_is_periodic() {
        let c = ForecastComponents {
            n_points: 200,
            features: 1,
            sinusoids: vec![Sinusoid { amplitude: 1.5, period: 20.0, phase: 0.3 }],
            trend_slope: 0.0,
            intercept: 0.0,
            noise_std: 0.0,
        };
        let s = gen_synthetic_forecast(&mut Rng::new(1), &c).unwrap();
        // persistence by period: forecast x[t] with x[t − 20]
        let mse: f64 = (20..200).map(|t| (s.data.get(t, 0) - s.data.get(t - 20, 0)).powi(2)).sum::<f64>() / 180.0;
        assert!(mse < 1e-24, "{mse}");
    }
}
