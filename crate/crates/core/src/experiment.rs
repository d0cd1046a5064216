//! Finite-statistics Bell experiments: Born-rule sampling, violation
//! estimates with propagated standard errors, and certified records.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::bell::{observable, AngleVector, BellProtocol, Family};
use crate::error::{Error, Result};
use crate::linalg::{kron_all, ComplexMatrix};
use crate::states::{ghz_state, validate_density};
use crate::tradeoff::fidelity_lower_bound;
use crate::verifier::CertificateConstants;

/// Identifier stored with every record so runs can be replayed bit for bit.
pub const RNG_ALGORITHM: &str = "chacha20";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Visibility,
    SeparableMixture,
}

/// How the lab state departs from the ideal GHZ state.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Weight of the ideal state.
    pub v: f64,
    #[serde(skip)]
    pub sigma: Option<ComplexMatrix>,
}

impl NoiseModel {
    /// `v ρ + (1 - v) I/2^n`.
    pub fn visibility(v: f64) -> Result<Self> {
        check_weight(v)?;
        Ok(Self {
            kind: NoiseKind::Visibility,
            v,
            sigma: None,
        })
    }

    /// `p ρ + (1 - p) σ` for a caller-supplied separable `σ`.
    pub fn separable_mixture(p: f64, sigma: ComplexMatrix) -> Result<Self> {
        check_weight(p)?;
        validate_density(&sigma, sigma.dim())?;
        Ok(Self {
            kind: NoiseKind::SeparableMixture,
            v: p,
            sigma: Some(sigma),
        })
    }

    pub fn state(&self, ideal: &ComplexMatrix) -> Result<ComplexMatrix> {
        let d = ideal.dim();
        let other = match self.kind {
            NoiseKind::Visibility => ComplexMatrix::identity(d).scale_real(1.0 / d as f64),
            NoiseKind::SeparableMixture => {
                let sigma = self
                    .sigma
                    .clone()
                    .ok_or_else(|| Error::invalid("separable mixture needs a state"))?;
                if sigma.dim() != d {
                    return Err(Error::invalid("separable state has the wrong dimension"));
                }
                sigma
            }
        };
        Ok(&ideal.scale_real(self.v) + &other.scale_real(1.0 - self.v))
    }
}

fn check_weight(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("mixture weight {v} outside [0, 1]")));
    }
    Ok(())
}

/// Product of qubit states on the equator of the Bloch sphere at azimuths `phis`.
pub fn equatorial_product_state(phis: &[f64]) -> ComplexMatrix {
    let factors: Vec<ComplexMatrix> = phis
        .iter()
        .map(|&phi| {
            let x = crate::linalg::Pauli::X.matrix().scale_real(phi.cos());
            let y = crate::linalg::Pauli::Y.matrix().scale_real(phi.sin());
            (&(&ComplexMatrix::identity(2) + &x) + &y).scale_real(0.5)
        })
        .collect();
    kron_all(&factors)
}

/// Outcome string `o` has bit `n-1-j` set when party `j` reads `-1`.
fn outcome_parity(o: usize) -> f64 {
    if o.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn born_unchecked(state: &ComplexMatrix, settings: &[u8], angles: &[f64]) -> Result<Vec<f64>> {
    let n = settings.len();
    let id = ComplexMatrix::identity(2);
    let mut projectors = Vec::with_capacity(n);
    for (j, &r) in settings.iter().enumerate() {
        let a = observable(r, angles[j])?;
        projectors.push([(&id + &a).scale_real(0.5), (&id - &a).scale_real(0.5)]);
    }
    Ok((0..1usize << n)
        .map(|o| {
            let factors: Vec<ComplexMatrix> = (0..n)
                .map(|j| projectors[j][(o >> (n - 1 - j)) & 1].clone())
                .collect();
            let p = state.trace_product(&kron_all(&factors)).re;
            if p < 0.0 && p > -1e-12 {
                0.0
            } else {
                p
            }
        })
        .collect())
}

/// Joint outcome distribution for one setting per party.
pub fn born_probabilities(
    state: &ComplexMatrix,
    settings: &[u8],
    angles: &AngleVector,
) -> Result<Vec<f64>> {
    let n = settings.len();
    angles.check_len(n)?;
    validate_density(state, 1 << n)?;
    born_unchecked(state, settings, angles.as_slice())
}

/// Multinomial counts by successive binomial draws.
pub fn sample_with(dist: &[f64], shots: u64, rng: &mut ChaCha20Rng) -> Result<Vec<u64>> {
    if shots == 0 {
        return Err(Error::invalid("need at least one shot"));
    }
    let total: f64 = dist.iter().sum();
    if dist.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "outcome distribution must be non-negative and sum to 1",
        ));
    }
    let mut counts = vec![0u64; dist.len()];
    let mut remaining = shots;
    let mut mass = 1.0;
    for (i, &p) in dist.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == dist.len() - 1 {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining, q)
            .map_err(|e| Error::invalid(format!("binomial parameters: {e}")))?
            .sample(rng);
        counts[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    Ok(counts)
}

/// Seeded multinomial sample of `shots` draws from `dist`.
pub fn sample_outcomes(dist: &[f64], shots: u64, seed: u64) -> Result<Vec<u64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    sample_with(dist, shots, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub beta_hat: f64,
    pub std_error: f64,
    /// Empirical correlator per setting string.
    pub correlators: Vec<f64>,
}

/// Samples every setting combination `shots` times and combines the empirical
/// correlators with the functional's coefficients.
///
/// Setting `x` draws from the ChaCha20 stream `x` of `seed`, so results do not
/// depend on how the settings are scheduled across threads.
pub fn estimate_violation(
    protocol: &BellProtocol,
    state: &ComplexMatrix,
    angles: &AngleVector,
    shots: u64,
    seed: u64,
) -> Result<Estimate> {
    let n = protocol.n;
    angles.check_len(n)?;
    validate_density(state, protocol.dim())?;
    let functional = protocol.functional();
    let per_setting: Vec<(f64, f64)> = (0..1usize << n)
        .into_par_iter()
        .map(|x| {
            let settings: Vec<u8> = (0..n).map(|j| ((x >> (n - 1 - j)) & 1) as u8).collect();
            let dist = born_unchecked(state, &settings, angles.as_slice())?;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(x as u64);
            let counts = sample_with(&dist, shots, &mut rng)?;
            let sum: f64 = counts
                .iter()
                .enumerate()
                .map(|(o, &c)| outcome_parity(o) * c as f64)
                .sum();
            let mean = sum / shots as f64;
            // Sample variance of ±1 outcomes with the unbiased correction.
            let var = if shots > 1 {
                (1.0 - mean * mean) * shots as f64 / (shots - 1) as f64
            } else {
                1.0 - mean * mean
            };
            Ok((mean, var))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut beta_hat = 0.0;
    let mut variance = 0.0;
    for (x, &(mean, var)) in per_setting.iter().enumerate() {
        let c = functional.coefficient(x);
        beta_hat += c * mean;
        variance += c * c * var / shots as f64;
    }
    Ok(Estimate {
        beta_hat,
        std_error: variance.sqrt(),
        correlators: per_setting.iter().map(|p| p.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampFlag {
    BelowLocal,
    AboveQuantum,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub family: Family,
    pub n: usize,
    pub noise: NoiseModel,
    pub shots_per_setting: u64,
    pub seed: u64,
    pub rng: String,
    pub estimated_beta: f64,
    pub std_error: f64,
    /// Value fed into the bound after clamping to `[β_L, β_Q]`.
    pub certified_beta: f64,
    pub clamp: Option<ClampFlag>,
    pub s: f64,
    pub mu: f64,
    pub fidelity_bound: f64,
    pub trivial: bool,
    pub timestamp: String,
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub constants: CertificateConstants,
    pub noise: NoiseModel,
    pub shots: u64,
    pub seed: u64,
    /// Measurement angles; the ideal π/4 setting when absent.
    pub angles: Option<AngleVector>,
    /// Append-only JSON-lines log.
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct CertifyOutcome {
    pub record: ExperimentRecord,
    pub estimate: Estimate,
    /// Set when the record could not be appended to the log.
    pub persist_error: Option<String>,
}

/// Simulates the experiment, clamps the estimate into `[β_L, β_Q]`, applies
/// the certified bound and appends the record to the log when one is configured.
pub fn certify(config: &SimulationConfig) -> Result<CertifyOutcome> {
    let protocol = config.constants.protocol;
    let ideal = ghz_state(&protocol)?;
    let state = config.noise.state(&ideal.rho)?;
    let angles = config
        .angles
        .clone()
        .unwrap_or_else(|| AngleVector::ideal(protocol.n));
    let estimate = estimate_violation(&protocol, &state, &angles, config.shots, config.seed)?;

    let (certified_beta, clamp) = clamp_to_bounds(&protocol, estimate.beta_hat);
    let bound = fidelity_lower_bound(&config.constants, certified_beta)?;
    let record = ExperimentRecord {
        family: protocol.family,
        n: protocol.n,
        noise: config.noise.clone(),
        shots_per_setting: config.shots,
        seed: config.seed,
        rng: RNG_ALGORITHM.to_string(),
        estimated_beta: estimate.beta_hat,
        std_error: estimate.std_error,
        certified_beta,
        clamp,
        s: config.constants.s,
        mu: config.constants.mu,
        fidelity_bound: bound.value,
        trivial: bound.trivial,
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    let persist_error = config
        .log_path
        .as_ref()
        .and_then(|p| append_record(p, &record).err().map(|e| e.to_string()));
    Ok(CertifyOutcome {
        record,
        estimate,
        persist_error,
    })
}

pub fn clamp_to_bounds(protocol: &BellProtocol, beta: f64) -> (f64, Option<ClampFlag>) {
    if beta < protocol.beta_l() {
        (protocol.beta_l(), Some(ClampFlag::BelowLocal))
    } else if beta > protocol.beta_q() {
        (protocol.beta_q(), Some(ClampFlag::AboveQuantum))
    } else {
        (beta, None)
    }
}

pub fn append_record(path: &Path, record: &ExperimentRecord) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(record)?;
    writeln!(file, "{line}")?;
    Ok(())
}

pub const RECORD_CSV_HEADER: [&str; 5] = ["v", "shots", "beta_hat", "std_error", "fidelity_bound"];

pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_CSV_HEADER)?;
    for r in records {
        w.write_record([
            crate::cli::sig12(r.noise.v),
            r.shots_per_setting.to_string(),
            crate::cli::sig12(r.estimated_beta),
            crate::cli::sig12(r.std_error),
            crate::cli::sig12(r.fidelity_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::evaluate;
    use crate::states::svetlichny3_state;
    use std::f64::consts::SQRT_2;

    #[test]
    fn ghz_all_zero_inputs_product_expectation() {
        let rho = svetlichny3_state();
        let probs = born_probabilities(&rho, &[0, 0, 0], &AngleVector::ideal(3)).unwrap();
        let corr: f64 = probs
            .iter()
            .enumerate()
            .map(|(o, p)| outcome_parity(o) * p)
            .sum();
        let a = observable(0, std::f64::consts::FRAC_PI_4).unwrap();
        let oracle = rho.trace_product(&kron_all(&[a.clone(), a.clone(), a])).re;
        assert!((corr - oracle).abs() < 1e-12);
        assert!((corr - 1.0 / SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn mixed_state_is_uniform() {
        let mixed = ComplexMatrix::identity(8).scale_real(0.125);
        let probs = born_probabilities(
            &mixed,
            &[1, 0, 1],
            &AngleVector::new(vec![0.2, 0.9, 1.4]).unwrap(),
        )
        .unwrap();
        for p in probs {
            assert!((p - 0.125).abs() < 1e-14);
        }
    }

    #[test]
    fn marginals_are_distributions() {
        let rho = svetlichny3_state();
        let probs = born_probabilities(
            &rho,
            &[1, 1, 0],
            &AngleVector::new(vec![0.3, 0.5, 0.7]).unwrap(),
        )
        .unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for j in 0..3 {
            let plus: f64 = probs
                .iter()
                .enumerate()
                .filter(|(o, _)| (o >> (2 - j)) & 1 == 0)
                .map(|(_, p)| p)
                .sum();
            assert!((0.0..=1.0).contains(&plus));
        }
    }

    #[test]
    fn point_mass_and_determinism() {
        let counts = sample_outcomes(&[0.0, 1.0, 0.0, 0.0], 1000, 3).unwrap();
        assert_eq!(counts, vec![0, 1000, 0, 0]);
        let dist = [0.1, 0.2, 0.3, 0.4];
        let a = sample_outcomes(&dist, 5000, 42).unwrap();
        let b = sample_outcomes(&dist, 5000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().sum::<u64>(), 5000);
        assert!(sample_outcomes(&dist, 0, 1).is_err());
        assert!(sample_outcomes(&[0.5, 0.6], 10, 1).is_err());
    }

    #[test]
    fn uniform_bins_within_five_sigma() {
        let shots = 8_000_000u64;
        let counts = sample_outcomes(&[0.125; 8], shots, 11).unwrap();
        let sigma = (shots as f64 * 0.125 * 0.875).sqrt();
        for c in counts {
            assert!((c as f64 - 1e6).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn maximally_mixed_estimate_near_zero() {
        let p = BellProtocol::svetlichny(3).unwrap();
        let mixed = ComplexMatrix::identity(8).scale_real(0.125);
        let e = estimate_violation(&p, &mixed, &AngleVector::ideal(3), 20_000, 5).unwrap();
        assert!(e.beta_hat.abs() < 4.0 * e.std_error);
    }

    #[test]
    fn mixture_value_is_affine() {
        let p = BellProtocol::svetlichny(3).unwrap();
        let ideal = ghz_state(&p).unwrap().rho;
        let sigma = equatorial_product_state(&[0.3, -0.4, 1.1]);
        let angles = AngleVector::ideal(3);
        let sep = evaluate(&p, &sigma, &angles).unwrap();
        for w in [0.0, 0.3, 0.8, 1.0] {
            let noise = NoiseModel::separable_mixture(w, sigma.clone()).unwrap();
            let mixed = noise.state(&ideal).unwrap();
            let v = evaluate(&p, &mixed, &angles).unwrap();
            assert!((v - (w * p.beta_q() + (1.0 - w) * sep)).abs() < 1e-10);
        }
    }

    #[test]
    fn visibility_states_are_valid() {
        let ideal = ghz_state(&BellProtocol::mabk(4).unwrap()).unwrap().rho;
        for v in [0.0, 0.25, 0.5, 1.0] {
            let st = NoiseModel::visibility(v).unwrap().state(&ideal).unwrap();
            validate_density(&st, 16).unwrap();
        }
        assert!(NoiseModel::visibility(1.5).is_err());
    }

    #[test]
    fn clamping() {
        let p = BellProtocol::svetlichny(4).unwrap();
        assert_eq!(clamp_to_bounds(&p, 1.0), (8.0, Some(ClampFlag::BelowLocal)));
        assert_eq!(clamp_to_bounds(&p, 99.0).1, Some(ClampFlag::AboveQuantum));
        assert_eq!(clamp_to_bounds(&p, 10.0), (10.0, None));
    }

    #[test]
    fn certify_writes_log_and_reports_failures() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("runs.jsonl");
        let constants =
            CertificateConstants::catalog(&BellProtocol::svetlichny(3).unwrap()).unwrap();
        let mut cfg = SimulationConfig {
            constants,
            noise: NoiseModel::visibility(1.0).unwrap(),
            shots: 2000,
            seed: 9,
            angles: None,
            log_path: Some(log.clone()),
        };
        let out = certify(&cfg).unwrap();
        assert!(out.persist_error.is_none());
        certify(&cfg).unwrap();
        let text = std::fs::read_to_string(&log).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"rng\":\"chacha20\""));

        cfg.log_path = Some(dir.path().join("missing").join("runs.jsonl"));
        let out = certify(&cfg).unwrap();
        assert!(out.persist_error.is_some());
        assert!(out.record.fidelity_bound.is_finite());
    }

    #[test]
    fn records_csv_header() {
        let constants = CertificateConstants::catalog(&BellProtocol::mabk(3).unwrap()).unwrap();
        let cfg = SimulationConfig {
            constants,
            noise: NoiseModel::visibility(0.0).unwrap(),
            shots: 100,
            seed: 1,
            angles: None,
            log_path: None,
        };
        let out = certify(&cfg).unwrap();
        assert!(out.record.trivial);
        let mut buf = Vec::new();
        write_records_csv(&[out.record], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("v,shots,beta_hat,std_error,fidelity_bound\n"));
    }
}
