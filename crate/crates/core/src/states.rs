//! Ideal GHZ states and the angle-dependent dephasing extraction channel.

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use serde::Serialize;

use crate::bell::{AngleVector, BellProtocol, Family};
use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigenvalues, hermitian_eigh, is_persymmetric, pauli_sum, ComplexMatrix, Pauli,
    PauliString, C64, STRUCTURE_TOL,
};

pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
pub const PURITY_TOL: f64 = 1e-9;
/// Minimum gap between the two largest eigenvalues for the spectral state.
pub const DEGENERACY_GAP: f64 = 1e-6;

/// Checks dimension, Hermiticity, unit trace and positivity.
pub fn validate_density(rho: &ComplexMatrix, dim: usize) -> Result<()> {
    if rho.dim() != dim {
        return Err(Error::invalid(format!(
            "state has dimension {}, expected {dim}",
            rho.dim()
        )));
    }
    let herm = rho.hermiticity_deviation();
    if herm > STRUCTURE_TOL {
        return Err(Error::invalid(format!(
            "state is not Hermitian (deviation {herm:e})"
        )));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::invalid(format!("state trace is {tr}, expected 1")));
    }
    let min = hermitian_eigenvalues(rho)?[0];
    if min < -PSD_TOL {
        return Err(Error::invalid(format!(
            "state has negative eigenvalue {min:e}"
        )));
    }
    Ok(())
}

fn check_angle(alpha: f64) -> Result<()> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&alpha) {
        return Err(Error::invalid(format!("angle {alpha} outside [0, pi/2]")));
    }
    Ok(())
}

/// Dephasing strength `(1+√2)(sin α + cos α - 1)`, running from 0 at the
/// edges of `[0, π/2]` to 1 at `π/4`.
pub fn g_param(alpha: f64) -> Result<f64> {
    check_angle(alpha)?;
    Ok(g_unchecked(alpha))
}

pub(crate) fn g_unchecked(alpha: f64) -> f64 {
    ((1.0 + SQRT_2) * (alpha.sin() + alpha.cos() - 1.0)).clamp(0.0, 1.0)
}

/// Which Pauli the flip Kraus operator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlipAxis {
    X,
    Y,
}

impl FlipAxis {
    /// σx on `[0, π/4]` (π/4 included), σy above.
    pub fn for_angle(alpha: f64) -> Self {
        if alpha <= FRAC_PI_4 {
            FlipAxis::X
        } else {
            FlipAxis::Y
        }
    }

    pub fn pauli(self) -> Pauli {
        match self {
            FlipAxis::X => Pauli::X,
            FlipAxis::Y => Pauli::Y,
        }
    }
}

/// `(√((1+g)/2)·I, √((1-g)/2)·Γ)` for one party.
pub fn kraus_pair(alpha: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    check_angle(alpha)?;
    let g = g_unchecked(alpha);
    let k0 = ComplexMatrix::identity(2).scale_real(((1.0 + g) / 2.0).sqrt());
    let k1 = FlipAxis::for_angle(alpha)
        .pauli()
        .matrix()
        .scale_real(((1.0 - g) / 2.0).sqrt());
    Ok((k0, k1))
}

/// The product of one dephasing channel per party.
#[derive(Debug, Clone)]
pub struct DephasingChannel {
    pub angles: AngleVector,
    pub kraus: Vec<(ComplexMatrix, ComplexMatrix)>,
}

impl DephasingChannel {
    pub fn new(angles: &AngleVector) -> Result<Self> {
        let kraus = angles
            .as_slice()
            .iter()
            .map(|&a| kraus_pair(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            angles: angles.clone(),
            kraus,
        })
    }

    pub fn parties(&self) -> usize {
        self.kraus.len()
    }

    /// Per-party dephasing strengths.
    pub fn strengths(&self) -> Vec<f64> {
        self.angles
            .as_slice()
            .iter()
            .map(|&a| g_unchecked(a))
            .collect()
    }

    pub fn flip_axes(&self) -> Vec<FlipAxis> {
        self.angles
            .as_slice()
            .iter()
            .map(|&a| FlipAxis::for_angle(a))
            .collect()
    }
}

/// `K ρ K†` with the 2×2 operator `k` acting on qubit `q` (qubit 0 is the most significant).
fn conjugate_local(rho: &ComplexMatrix, q: usize, k: &ComplexMatrix) -> ComplexMatrix {
    let dim = rho.dim();
    let n = rho.qubits();
    let bit = 1usize << (n - 1 - q);
    let kc = [[k[(0, 0)], k[(0, 1)]], [k[(1, 0)], k[(1, 1)]]];
    let mut out = ComplexMatrix::zeros(dim);
    for a in 0..dim {
        let ab = usize::from(a & bit != 0);
        for b in 0..dim {
            let bb = usize::from(b & bit != 0);
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..2 {
                let kac = kc[ab][c];
                if kac == C64::new(0.0, 0.0) {
                    continue;
                }
                let ai = (a & !bit) | if c == 1 { bit } else { 0 };
                for d in 0..2 {
                    let kbd = kc[bb][d];
                    if kbd == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let bi = (b & !bit) | if d == 1 { bit } else { 0 };
                    acc += kac * rho[(ai, bi)] * kbd.conj();
                }
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// `Σ_r K_r ρ K_r†` over all `2^n` Kraus strings `K_r = ⊗ K_j^{r_j}`.
///
/// The channel is a tensor product, so the sum factorizes into one local
/// two-term map per party.
pub fn apply_channel(rho: &ComplexMatrix, channel: &DephasingChannel) -> Result<ComplexMatrix> {
    let n = channel.parties();
    if rho.dim() != 1 << n {
        return Err(Error::invalid(format!(
            "state dimension {} does not match a {n}-party channel",
            rho.dim()
        )));
    }
    let mut cur = rho.clone();
    for (q, (k0, k1)) in channel.kraus.iter().enumerate() {
        let a = conjugate_local(&cur, q, k0);
        let b = conjugate_local(&cur, q, k1);
        cur = &a + &b;
    }
    Ok(cur)
}

/// True when the channel output of a persymmetric `rho` is persymmetric.
pub fn persymmetry_preserved(rho: &ComplexMatrix, channel: &DephasingChannel) -> Result<bool> {
    let out = apply_channel(rho, channel)?;
    Ok(is_persymmetric(&out, STRUCTURE_TOL))
}

/// The GHZ state certified by a protocol.
#[derive(Debug, Clone)]
pub struct IdealState {
    pub protocol: BellProtocol,
    pub rho: ComplexMatrix,
    /// `2^n β_Q / Tr[W²]` at the ideal angles: the weight of the Bell operator
    /// inside the state's antidiagonal part.
    pub eta: f64,
}

impl IdealState {
    /// Nonzero entries of `rho` on the diagonal and antidiagonal.
    pub fn cross_entries(&self) -> (Vec<C64>, Vec<C64>) {
        let d = self.rho.dim();
        let diag = (0..d).map(|i| self.rho[(i, i)]).collect();
        let anti = (0..d).map(|i| self.rho[(i, d - 1 - i)]).collect();
        (diag, anti)
    }
}

const SV4_NEGATIVE: [&str; 6] = ["XXXX", "XYYY", "YXYY", "YYXY", "YYYX", "YYYY"];

fn xy_strings(n: usize) -> Vec<String> {
    (0..1usize << n)
        .map(|k| {
            (0..n)
                .map(|j| {
                    if (k >> (n - 1 - j)) & 1 == 1 {
                        'Y'
                    } else {
                        'X'
                    }
                })
                .collect()
        })
        .collect()
}

fn even_z_strings(n: usize) -> Vec<String> {
    (0..1usize << n)
        .filter(|k| k.count_ones() % 2 == 0)
        .map(|k| {
            (0..n)
                .map(|j| {
                    if (k >> (n - 1 - j)) & 1 == 1 {
                        'Z'
                    } else {
                        'I'
                    }
                })
                .collect()
        })
        .collect()
}

/// The three-party Svetlichny state as an explicit Pauli sum.
pub fn svetlichny3_state() -> ComplexMatrix {
    let mut terms: Vec<PauliString> = even_z_strings(3)
        .iter()
        .map(|s| PauliString::parse(s, 0.125).unwrap())
        .collect();
    for (label, c) in [("XXX", -1.0), ("XYY", 1.0), ("YXY", 1.0), ("YYX", 1.0)] {
        terms.push(PauliString::parse(label, c / 8.0).unwrap());
    }
    pauli_sum(&terms).unwrap()
}

/// The four-party Svetlichny state as an explicit Pauli sum.
pub fn svetlichny4_state() -> ComplexMatrix {
    let mut terms: Vec<PauliString> = even_z_strings(4)
        .iter()
        .map(|s| PauliString::parse(s, 1.0 / 16.0).unwrap())
        .collect();
    let c = 1.0 / (16.0 * SQRT_2);
    for s in xy_strings(4) {
        let sign = if SV4_NEGATIVE.contains(&s.as_str()) {
            -1.0
        } else {
            1.0
        };
        terms.push(PauliString::parse(&s, sign * c).unwrap());
    }
    pauli_sum(&terms).unwrap()
}

/// Projector onto the top eigenvector of the ideal-angle Bell operator.
pub fn spectral_state(protocol: &BellProtocol) -> Result<ComplexMatrix> {
    let w = protocol.operator(&AngleVector::ideal(protocol.n))?;
    let (values, vectors) = hermitian_eigh(&w)?;
    let d = values.len();
    let gap = values[d - 1] - values[d - 2];
    if gap <= DEGENERACY_GAP {
        return Err(Error::DegenerateState { gap });
    }
    let mut rho = ComplexMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            rho[(i, j)] = vectors[(i, d - 1)] * vectors[(j, d - 1)].conj();
        }
    }
    Ok(rho)
}

/// Explicit Pauli forms for three and four Svetlichny parties, the spectral
/// construction everywhere else.
pub fn ghz_state(protocol: &BellProtocol) -> Result<IdealState> {
    let rho = match (protocol.family, protocol.n) {
        (Family::Svetlichny, 3) => svetlichny3_state(),
        (Family::Svetlichny, 4) => svetlichny4_state(),
        _ => spectral_state(protocol)?,
    };
    let w = protocol
        .functional()
        .to_matrix(AngleVector::ideal(protocol.n).as_slice());
    let w_sq = w.trace_product(&w).re;
    let eta = protocol.dim() as f64 * protocol.beta_q() / w_sq;
    Ok(IdealState {
        protocol: *protocol,
        rho,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::evaluate;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn g_examples() {
        assert_eq!(g_param(0.0).unwrap(), 0.0);
        assert!((g_param(FRAC_PI_4).unwrap() - 1.0).abs() < 1e-15);
        let pi8 = std::f64::consts::PI / 8.0;
        assert!((g_param(pi8).unwrap() - 0.7401085).abs() < 1e-6);
        assert!(g_param(-0.1).is_err());
        assert!(g_param(2.0).is_err());
        for k in 0..=20 {
            let a = FRAC_PI_2 * k as f64 / 20.0;
            let g = g_param(a).unwrap();
            assert!((0.0..=1.0).contains(&g));
            assert!((g - g_param(FRAC_PI_2 - a).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn kraus_examples() {
        let (k0, k1) = kraus_pair(FRAC_PI_4).unwrap();
        assert!(k0.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        assert!(k1.max_abs() < 1e-7);

        let h = 0.5f64.sqrt();
        let (k0, k1) = kraus_pair(0.0).unwrap();
        assert!(k0.max_abs_diff(&ComplexMatrix::identity(2).scale_real(h)) < 1e-15);
        assert!(k1.max_abs_diff(&Pauli::X.matrix().scale_real(h)) < 1e-15);

        let (_, k1) = kraus_pair(FRAC_PI_2).unwrap();
        assert!(k1.max_abs_diff(&Pauli::Y.matrix().scale_real(h)) < 1e-15);
    }

    #[test]
    fn kraus_completeness() {
        for k in 0..=16 {
            let a = FRAC_PI_2 * k as f64 / 16.0;
            let (k0, k1) = kraus_pair(a).unwrap();
            let sum = &(&k0.adjoint() * &k0) + &(&k1.adjoint() * &k1);
            assert!(sum.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
            assert!(k0.is_hermitian(0.0) && k1.is_hermitian(0.0));
        }
    }

    #[test]
    fn single_qubit_full_dephasing_kills_z() {
        let ch = DephasingChannel::new(&AngleVector::new(vec![0.0]).unwrap()).unwrap();
        let out = apply_channel(&Pauli::Z.matrix(), &ch).unwrap();
        assert!(out.max_abs() < 1e-15);
    }

    #[test]
    fn ideal_angles_give_identity_channel() {
        let rho = svetlichny3_state();
        let ch = DephasingChannel::new(&AngleVector::ideal(3)).unwrap();
        assert!(apply_channel(&rho, &ch).unwrap().max_abs_diff(&rho) < 1e-15);
    }

    #[test]
    fn channel_zz_coefficient() {
        let alphas = [0.3, 0.6, 0.1];
        let ch = DephasingChannel::new(&AngleVector::new(alphas.to_vec()).unwrap()).unwrap();
        let out = apply_channel(&svetlichny3_state(), &ch).unwrap();
        let zzi = PauliString::parse("ZZI", 1.0).unwrap().to_matrix();
        let coeff = out.trace_product(&zzi).re / 8.0;
        let g = ch.strengths();
        assert!((coeff - g[0] * g[1] / 8.0).abs() < 1e-14);
    }

    #[test]
    fn factorized_channel_matches_kraus_string_sum() {
        let alphas = vec![0.2, 1.1, 0.7];
        let ch = DephasingChannel::new(&AngleVector::new(alphas).unwrap()).unwrap();
        let rho = spectral_state(&BellProtocol::mabk(3).unwrap()).unwrap();
        let mut literal = ComplexMatrix::zeros(8);
        for r in 0..8usize {
            let factors: Vec<ComplexMatrix> = (0..3)
                .map(|j| {
                    let (k0, k1) = &ch.kraus[j];
                    if (r >> (2 - j)) & 1 == 1 {
                        k1.clone()
                    } else {
                        k0.clone()
                    }
                })
                .collect();
            let k = crate::linalg::kron_all(&factors);
            literal = &literal + &(&(&k * &rho) * &k.adjoint());
        }
        assert!(apply_channel(&rho, &ch).unwrap().max_abs_diff(&literal) < 1e-14);
    }

    #[test]
    fn explicit_states_match_spectral() {
        for n in [3, 4] {
            let p = BellProtocol::svetlichny(n).unwrap();
            let explicit = ghz_state(&p).unwrap().rho;
            let spectral = spectral_state(&p).unwrap();
            assert!(explicit.max_abs_diff(&spectral) < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn states_are_pure_and_optimal() {
        for n in 3..=5 {
            for family in [Family::Svetlichny, Family::Mabk] {
                let p = BellProtocol::new(family, n).unwrap();
                let st = ghz_state(&p).unwrap();
                validate_density(&st.rho, p.dim()).unwrap();
                assert!((&st.rho * &st.rho).max_abs_diff(&st.rho) < PURITY_TOL);
                assert!(is_persymmetric(&st.rho, STRUCTURE_TOL));
                let v = evaluate(&p, &st.rho, &AngleVector::ideal(n)).unwrap();
                assert!((v - p.beta_q()).abs() < 1e-9, "{p}: {v}");
            }
        }
    }

    #[test]
    fn eta_values() {
        let sv = ghz_state(&BellProtocol::svetlichny(4).unwrap()).unwrap();
        assert!((sv.eta - 1.0 / SQRT_2).abs() < 1e-12);
        let m = ghz_state(&BellProtocol::mabk(5).unwrap()).unwrap();
        assert!((m.eta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sv4_antidiagonal_weight() {
        let rho = svetlichny4_state();
        let xxxy = PauliString::parse("XXXY", 1.0).unwrap().to_matrix();
        let coeff = rho.trace_product(&xxxy).re / 16.0;
        assert!((coeff - 1.0 / (16.0 * SQRT_2)).abs() < 1e-15);
    }

    #[test]
    fn channel_rejects_wrong_dimension() {
        let ch = DephasingChannel::new(&AngleVector::ideal(3)).unwrap();
        assert!(apply_channel(&ComplexMatrix::identity(4), &ch).is_err());
    }

    #[test]
    fn validate_rejects_non_psd() {
        let bad = ComplexMatrix::diagonal(&[C64::new(1.5, 0.0), C64::new(-0.5, 0.0)]);
        assert!(validate_density(&bad, 2).is_err());
        let ok = ComplexMatrix::identity(2).scale_real(0.5);
        assert!(validate_density(&ok, 2).is_ok());
        assert!(validate_density(&ok, 4).is_err());
    }
}
