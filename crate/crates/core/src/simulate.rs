//! Seeded synthetic datasets: Poisson activation trains, parametric biphasic
//! waveforms, and SNR-calibrated additive noise.
//!
//! Everything is deterministic given the spec seeds; per-neuron streams are
//! derived with the counter scheme in [`crate::seed`], so trains are
//! independent across neurons and invariant to evaluation order.

use crate::activation::{Activation, ActivationSet};
use crate::error::{Error, Result};
use crate::operator;
use crate::seed::{derive, Stream};
use crate::shapes::ShapeBank;
use crate::signal::MultiSignal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Amplitude jitter range when jitter is enabled.
const AMP_JITTER: (f64, f64) = (0.8, 1.2);

/// Per-neuron Bernoulli intensities for a discretized Poisson train.
#[derive(Debug, Clone)]
pub struct PoissonSpec {
    /// Firing probability per sample for each neuron; each must lie in [0, 1).
    pub mu: Vec<f64>,
    /// Signal length in samples.
    pub n: usize,
    /// Shape length; activations are only placed at samples `<= n - t` so
    /// rendered shapes always fit.
    pub t: usize,
    pub seed: u64,
    /// Draw amplitudes uniformly from [0.8, 1.2]; otherwise all are 1.
    pub jitter: bool,
}

impl PoissonSpec {
    pub fn uniform_rate(k: usize, mu: f64, n: usize, t: usize, seed: u64) -> Self {
        PoissonSpec {
            mu: vec![mu; k],
            n,
            t,
            seed,
            jitter: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mu.is_empty() {
            return Err(Error::arg("at least one neuron intensity required"));
        }
        for (r, &m) in self.mu.iter().enumerate() {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::arg(format!(
                    "intensity for neuron {r} must be in [0, 1), got {m}"
                )));
            }
        }
        if self.n == 0 || self.t == 0 || self.n < self.t {
            return Err(Error::arg(format!(
                "need n >= t >= 1, got n={}, t={}",
                self.n, self.t
            )));
        }
        Ok(())
    }
}

/// Draws one activation train per neuron: every sample in `[0, n - t]` fires
/// independently with probability `mu[r]` (Bernoulli thinning, the
/// discretized Poisson process).
pub fn poisson_activations(spec: &PoissonSpec) -> Result<ActivationSet> {
    spec.validate()?;
    let k = spec.mu.len();
    let last = spec.n - spec.t;
    let amp_dist =
        Uniform::new_inclusive(AMP_JITTER.0, AMP_JITTER.1).expect("static jitter bounds are valid");
    let mut entries = Vec::new();
    for (r, &mu) in spec.mu.iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive(spec.seed, Stream::Train, r as u64));
        for j in 0..=last {
            if rng.random::<f64>() < mu {
                let amplitude = if spec.jitter {
                    amp_dist.sample(&mut rng)
                } else {
                    1.0
                };
                entries.push(Activation {
                    neuron: r,
                    sample: j,
                    amplitude,
                });
            }
        }
    }
    ActivationSet::new(k, spec.n, entries)
}

/// Parameters of one neuron's biphasic waveform: a positive depolarization
/// lobe followed by a negative hyperpolarization lobe.
#[derive(Debug, Clone)]
pub struct NeuronShape {
    pub amplitude: f64,
    /// Width of the positive lobe, as a fraction of t (roughly its sigma).
    pub depol_width: f64,
    /// Width of the negative lobe, as a fraction of t.
    pub hyper_width: f64,
}

/// Parametric stand-in for recorded action-potential shapes.
#[derive(Debug, Clone)]
pub struct ShapeParams {
    pub k: usize,
    pub d: usize,
    pub t: usize,
    pub neurons: Vec<NeuronShape>,
    /// `attenuation[r][p]`: gain of neuron r's waveform on electrode p.
    pub attenuation: Vec<Vec<f64>>,
    pub seed: u64,
}

impl ShapeParams {
    /// Plausible defaults: per-neuron widths spread over a ladder so any two
    /// templates are distinguishable, and each neuron loudest on a different
    /// electrode with a sharp exponential falloff (spatial contrast is what
    /// separates neurons whose temporal shapes are inevitably similar).
    pub fn randomized(k: usize, d: usize, t: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, Stream::Shapes, 0));
        let neurons = (0..k)
            .map(|r| {
                let ladder = 0.04 + 0.14 * (r as f64 + 1.0) / (k as f64 + 1.0);
                NeuronShape {
                    amplitude: 1.0,
                    depol_width: ladder * (1.0 + 0.15 * rng.random::<f64>()),
                    hyper_width: 1.8 * ladder * (1.0 + 0.15 * rng.random::<f64>()),
                }
            })
            .collect();
        let attenuation = (0..k)
            .map(|r| {
                let home = r % d;
                (0..d)
                    .map(|p| {
                        let dist = (p as isize - home as isize).unsigned_abs() as f64;
                        (-dist / 0.6).exp()
                    })
                    .collect()
            })
            .collect();
        ShapeParams {
            k,
            d,
            t,
            neurons,
            attenuation,
            seed,
        }
    }
}

/// Builds the shape bank from parameters: each waveform is a difference of
/// two unimodal lobes, scaled per electrode, and normalized so the loudest
/// electrode has unit l2 norm.
pub fn synth_shapes(params: &ShapeParams) -> Result<ShapeBank> {
    if params.neurons.len() != params.k || params.attenuation.len() != params.k {
        return Err(Error::dim(format!(
            "expected {} neuron parameter sets, got {} shapes / {} attenuation rows",
            params.k,
            params.neurons.len(),
            params.attenuation.len()
        )));
    }
    let (k, d, t) = (params.k, params.d, params.t);
    let mut waveforms = vec![0.0; k * d * t];
    for (r, ns) in params.neurons.iter().enumerate() {
        if params.attenuation[r].len() != d {
            return Err(Error::dim(format!(
                "attenuation row {r} has {} entries, expected d={d}",
                params.attenuation[r].len()
            )));
        }
        let base = mono_waveform(ns, t)?;
        let peak = params.attenuation[r]
            .iter()
            .map(|a| a.abs())
            .fold(0.0, f64::max);
        let norm = base.iter().map(|v| v * v).sum::<f64>().sqrt() * peak;
        if !(norm > 0.0) {
            return Err(Error::DegenerateShape(format!(
                "neuron {r} produced a zero waveform"
            )));
        }
        for p in 0..d {
            let gain = params.attenuation[r][p] / norm;
            for tau in 0..t {
                waveforms[(r * d + p) * t + tau] = gain * base[tau];
            }
        }
    }
    ShapeBank::new(k, d, t, waveforms)
}

/// One unnormalized biphasic lobe pair sampled over t points.
fn mono_waveform(ns: &NeuronShape, t: usize) -> Result<Vec<f64>> {
    if !(ns.amplitude.is_finite() && ns.depol_width > 0.0 && ns.hyper_width > 0.0) {
        return Err(Error::arg(format!(
            "invalid neuron shape parameters: {ns:?}"
        )));
    }
    let tf = t as f64;
    let c1 = 0.25 * tf;
    let c2 = 0.60 * tf;
    let s1 = ns.depol_width * tf;
    let s2 = ns.hyper_width * tf;
    // Equal-mass lobes: scale the second so the waveform integrates to ~0.
    let out: Vec<f64> = (0..t)
        .map(|tau| {
            let x = tau as f64;
            let lobe1 = (-((x - c1) / s1).powi(2) / 2.0).exp();
            let lobe2 = (-((x - c2) / s2).powi(2) / 2.0).exp();
            ns.amplitude * (lobe1 - (s1 / s2) * lobe2)
        })
        .collect();
    Ok(out)
}

/// Noise description: target SNR in dB, or noiseless when absent.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// Adds i.i.d. Gaussian noise calibrated so that
/// `10 log10(truth_energy / noise_energy_expected) = snr_db`.
pub fn add_noise(signal: &MultiSignal, truth_energy: f64, spec: &NoiseSpec) -> Result<MultiSignal> {
    let Some(snr_db) = spec.snr_db else {
        return Ok(signal.clone());
    };
    if !snr_db.is_finite() {
        return Err(Error::arg(format!("snr_db must be finite, got {snr_db}")));
    }
    if !(truth_energy > 0.0) {
        return Err(Error::arg(
            "cannot calibrate noise against a zero-energy clean signal",
        ));
    }
    let cells = (signal.d() * signal.n()) as f64;
    let sigma2 = truth_energy / (cells * 10f64.powf(snr_db / 10.0));
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("sigma positive");
    let mut rng = ChaCha8Rng::seed_from_u64(derive(spec.seed, Stream::Noise, 0));
    let mut noisy = signal.clone();
    for v in noisy.raw_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(noisy)
}

/// Full simulation recipe for one dataset.
#[derive(Debug, Clone)]
pub struct SimSpec {
    pub k: usize,
    pub d: usize,
    pub t: usize,
    pub n: usize,
    /// Firing probability per sample, shared by every neuron.
    pub mu: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub jitter: bool,
}

/// A rendered dataset: the bank, the ground truth, and the observed signal.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub shapes: ShapeBank,
    pub truth: ActivationSet,
    pub clean: MultiSignal,
    pub observed: MultiSignal,
}

/// Simulates shapes, trains, rendering and noise in one call.
pub fn simulate(spec: &SimSpec) -> Result<Dataset> {
    let shapes = synth_shapes(&ShapeParams::randomized(spec.k, spec.d, spec.t, spec.seed))?;
    let truth = poisson_activations(&PoissonSpec {
        mu: vec![spec.mu; spec.k],
        n: spec.n,
        t: spec.t,
        seed: spec.seed,
        jitter: spec.jitter,
    })?;
    let clean = operator::forward(&shapes, &truth, spec.n)?;
    let observed = if truth.is_empty() {
        // Nothing fired; SNR is undefined, observe pure silence.
        clean.clone()
    } else {
        add_noise(
            &clean,
            clean.energy(),
            &NoiseSpec {
                snr_db: spec.snr_db,
                seed: spec.seed,
            },
        )?
    };
    Ok(Dataset {
        shapes,
        truth,
        clean,
        observed,
    })
}
