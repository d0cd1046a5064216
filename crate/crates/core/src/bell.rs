//! Svetlichny and MABK Bell operators with their local and quantum bounds.
//!
//! Both families are written with the measurement pair
//! `A^r(α) = cos α σx + (-1)^r sin α σy`, so every correlator
//! `⊗ A_j^{x_j}(α_j)` is antidiagonal in the computational basis and its
//! coefficient in the functional depends only on the Hamming weight of the
//! input string `x`. [`BellFunctional`] stores exactly those `n + 1` weights,
//! which is all the fast paths (antidiagonal entries, deterministic values)
//! need. The dense builders [`build_svetlichny`] and [`build_mabk`] follow the
//! textbook row/compact constructions and act as independent oracles.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, kron_all, ComplexMatrix, Pauli, C64};

pub const MIN_PARTIES: usize = 3;
pub const MAX_PARTIES: usize = 6;

/// Slack allowed when validating that an angle lies in `[0, π/2]`; grid
/// arithmetic can overshoot an endpoint by an ulp or two.
const ANGLE_SLACK: f64 = 1e-12;

/// Points per axis of the coarse search that backs up the ideal-angle norm.
const QUANTUM_SEARCH_POINTS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Svetlichny,
    Mabk,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Svetlichny => write!(f, "svetlichny"),
            Family::Mabk => write!(f, "mabk"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svetlichny" | "sv" => Ok(Family::Svetlichny),
            "mabk" | "mermin" => Ok(Family::Mabk),
            other => Err(Error::invalid(format!(
                "unknown family {other:?} (expected svetlichny or mabk)"
            ))),
        }
    }
}

/// Exact numbers of the form `p + q·√2` with rational `p`, `q`.
///
/// All catalog constants live in this field, so identities such as
/// `s·β_Q + μ = 1` can be checked exactly before converting to `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Surd {
    pub rational: Ratio<i64>,
    pub sqrt2: Ratio<i64>,
}

impl Surd {
    pub fn new(rational: Ratio<i64>, sqrt2: Ratio<i64>) -> Self {
        Self { rational, sqrt2 }
    }

    pub fn int(p: i64) -> Self {
        Self::new(Ratio::from_integer(p), Ratio::from_integer(0))
    }

    /// `(p + q√2) / d` for integers.
    pub fn frac(p: i64, q: i64, d: i64) -> Self {
        Self::new(Ratio::new(p, d), Ratio::new(q, d))
    }

    pub fn sqrt2() -> Self {
        Self::frac(0, 1, 1)
    }

    /// `2^(k/2)` for `k ≥ 0`.
    pub fn pow_sqrt2(k: u32) -> Self {
        let whole = 1i64 << (k / 2);
        if k % 2 == 0 {
            Self::int(whole)
        } else {
            Self::frac(0, whole, 1)
        }
    }

    pub fn is_zero(&self) -> bool {
        *self.rational.numer() == 0 && *self.sqrt2.numer() == 0
    }

    pub fn value(&self) -> f64 {
        let r = *self.rational.numer() as f64 / *self.rational.denom() as f64;
        let q = *self.sqrt2.numer() as f64 / *self.sqrt2.denom() as f64;
        r + q * SQRT_2
    }

    fn recip(self) -> Self {
        // (p + q√2)^-1 = (p - q√2) / (p² - 2q²)
        let norm = self.rational * self.rational - Ratio::from_integer(2) * self.sqrt2 * self.sqrt2;
        assert!(*norm.numer() != 0, "division by zero surd");
        Self::new(self.rational / norm, -self.sqrt2 / norm)
    }
}

impl Add for Surd {
    type Output = Surd;
    fn add(self, rhs: Surd) -> Surd {
        Surd::new(self.rational + rhs.rational, self.sqrt2 + rhs.sqrt2)
    }
}

impl Sub for Surd {
    type Output = Surd;
    fn sub(self, rhs: Surd) -> Surd {
        Surd::new(self.rational - rhs.rational, self.sqrt2 - rhs.sqrt2)
    }
}

impl Neg for Surd {
    type Output = Surd;
    fn neg(self) -> Surd {
        Surd::new(-self.rational, -self.sqrt2)
    }
}

impl Mul for Surd {
    type Output = Surd;
    fn mul(self, rhs: Surd) -> Surd {
        let two = Ratio::from_integer(2);
        Surd::new(
            self.rational * rhs.rational + two * self.sqrt2 * rhs.sqrt2,
            self.rational * rhs.sqrt2 + self.sqrt2 * rhs.rational,
        )
    }
}

impl Div for Surd {
    type Output = Surd;
    fn div(self, rhs: Surd) -> Surd {
        self * rhs.recip()
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (*self.rational.numer() == 0, *self.sqrt2.numer() == 0) {
            (_, true) => write!(f, "{}", self.rational),
            (true, false) => write!(f, "{}·√2", self.sqrt2),
            (false, false) => write!(f, "{} + {}·√2", self.rational, self.sqrt2),
        }
    }
}

/// A Bell inequality family together with its party count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BellProtocol {
    pub family: Family,
    pub n: usize,
}

impl BellProtocol {
    pub fn new(family: Family, n: usize) -> Result<Self> {
        if !(MIN_PARTIES..=MAX_PARTIES).contains(&n) {
            return Err(Error::invalid(format!(
                "party count {n} unsupported (expected {MIN_PARTIES}..={MAX_PARTIES})"
            )));
        }
        Ok(Self { family, n })
    }

    pub fn svetlichny(n: usize) -> Result<Self> {
        Self::new(Family::Svetlichny, n)
    }

    pub fn mabk(n: usize) -> Result<Self> {
        Self::new(Family::Mabk, n)
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn local_bound_exact(&self) -> Surd {
        let n = self.n as u32;
        match self.family {
            Family::Svetlichny => Surd::pow_sqrt2(2 * (n - 1)),
            Family::Mabk => Surd::pow_sqrt2(n - 1),
        }
    }

    pub fn quantum_bound_exact(&self) -> Surd {
        let n = self.n as u32;
        match self.family {
            Family::Svetlichny => Surd::pow_sqrt2(2 * (n - 1) + 1),
            Family::Mabk => Surd::pow_sqrt2(2 * (n - 1)),
        }
    }

    /// Catalog local bound β_L.
    pub fn beta_l(&self) -> f64 {
        self.local_bound_exact().value()
    }

    /// Catalog quantum bound β_Q.
    pub fn beta_q(&self) -> f64 {
        self.quantum_bound_exact().value()
    }

    pub fn functional(&self) -> BellFunctional {
        BellFunctional::new(self.family, self.n)
    }

    /// Dense operator at the given angles, built with the family's own construction.
    pub fn operator(&self, angles: &AngleVector) -> Result<ComplexMatrix> {
        match self.family {
            Family::Svetlichny => build_svetlichny(self.n, angles),
            Family::Mabk => build_mabk(self.n, angles),
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.family, self.n)
    }
}

impl fmt::Display for BellProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Measurement angles, one per party, each in `[0, π/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleVector {
    alphas: Vec<f64>,
}

impl AngleVector {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        let mut alphas = alphas;
        for (j, a) in alphas.iter_mut().enumerate() {
            if !a.is_finite() || *a < -ANGLE_SLACK || *a > FRAC_PI_2 + ANGLE_SLACK {
                return Err(Error::invalid(format!("angle {j} = {a} outside [0, pi/2]")));
            }
            *a = a.clamp(0.0, FRAC_PI_2);
        }
        Ok(Self { alphas })
    }

    pub fn uniform(n: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; n])
    }

    /// All angles at π/4, where both families reach their quantum bound.
    pub fn ideal(n: usize) -> Self {
        Self {
            alphas: vec![FRAC_PI_4; n],
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alphas
    }

    /// Every angle mapped to `π/2 - α`.
    pub fn reflected(&self) -> Self {
        Self {
            alphas: self.alphas.iter().map(|a| FRAC_PI_2 - a).collect(),
        }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.alphas.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} angles, got {}",
                self.alphas.len()
            )));
        }
        Ok(())
    }
}

/// One row of the Svetlichny sign table: an (n-1)-bit string and its sign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientRow {
    /// 1-based row index.
    pub mu: usize,
    pub bits: Vec<u8>,
    pub nu: i8,
}

impl CoefficientRow {
    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// `(-1)^(m(m+1)/2)`: the sign pattern +, -, -, +, +, -, -, ...
pub fn nu_sign(m: usize) -> i8 {
    if (m * (m + 1) / 2) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// All (n-1)-bit strings in increasing binary order with their sign.
pub fn coefficient_table(n: usize) -> Result<Vec<CoefficientRow>> {
    if !(2..=MAX_PARTIES).contains(&n) {
        return Err(Error::invalid(format!(
            "coefficient table needs 2 <= n <= {MAX_PARTIES}"
        )));
    }
    let width = n - 1;
    Ok((0..1usize << width)
        .map(|k| {
            let bits: Vec<u8> = (0..width)
                .map(|j| ((k >> (width - 1 - j)) & 1) as u8)
                .collect();
            let m = k.count_ones() as usize;
            CoefficientRow {
                mu: k + 1,
                bits,
                nu: nu_sign(m),
            }
        })
        .collect())
}

/// `A^r(α) = cos α σx + (-1)^r sin α σy`.
pub fn observable(r: u8, alpha: f64) -> Result<ComplexMatrix> {
    if r > 1 {
        return Err(Error::invalid(format!("input bit must be 0 or 1, got {r}")));
    }
    if !(-ANGLE_SLACK..=FRAC_PI_2 + ANGLE_SLACK).contains(&alpha) {
        return Err(Error::invalid(format!("angle {alpha} outside [0, pi/2]")));
    }
    let sign = if r == 0 { 1.0 } else { -1.0 };
    let x = Pauli::X.matrix().scale_real(alpha.cos());
    let y = Pauli::Y.matrix().scale_real(sign * alpha.sin());
    Ok(&x + &y)
}

fn check_parties(n: usize, angles: &AngleVector) -> Result<()> {
    if !(MIN_PARTIES..=MAX_PARTIES).contains(&n) {
        return Err(Error::invalid(format!(
            "party count {n} unsupported (expected {MIN_PARTIES}..={MAX_PARTIES})"
        )));
    }
    angles.check_len(n)
}

/// Svetlichny operator assembled row by row from the sign table.
///
/// Row `μ` contributes `ν·(-1)^((n+1)m) (A_1^0 + (-1)^(m+n) A_1^1) ⊗ A_2^{x_2} ⊗ ... ⊗ A_n^{x_n}`,
/// which is the same as weighting every correlator of input weight `w` by
/// `ν(w)·(-1)^((n+1)w)`.
pub fn build_svetlichny(n: usize, angles: &AngleVector) -> Result<ComplexMatrix> {
    check_parties(n, angles)?;
    let alphas = angles.as_slice();
    let first = [observable(0, alphas[0])?, observable(1, alphas[0])?];
    let mut total = ComplexMatrix::zeros(1 << n);
    for row in coefficient_table(n)? {
        let m = row.weight();
        let outer = row.nu as f64 * parity_sign((n + 1) * m);
        let head = &first[0] + &first[1].scale_real(parity_sign(m + n));
        let mut factors = vec![head];
        for (j, &b) in row.bits.iter().enumerate() {
            factors.push(observable(b, alphas[j + 1])?);
        }
        total = &total + &kron_all(&factors).scale_real(outer);
    }
    Ok(total)
}

/// MABK operator from the compact form
/// `½[p ⊗(A^0 + iA^1) + p̄ ⊗(A^0 - iA^1)]` with `p = ((1-i)/√2)^((n-1) mod 2)`.
pub fn build_mabk(n: usize, angles: &AngleVector) -> Result<ComplexMatrix> {
    check_parties(n, angles)?;
    let i = C64::new(0.0, 1.0);
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for &a in angles.as_slice() {
        let a0 = observable(0, a)?;
        let a1 = observable(1, a)?;
        plus.push(&a0 + &a1.scale(i));
        minus.push(&a0 - &a1.scale(i));
    }
    let p = mabk_phase(n);
    let sum = &kron_all(&plus).scale(p) + &kron_all(&minus).scale(p.conj());
    Ok(sum.scale_real(0.5))
}

fn mabk_phase(n: usize) -> C64 {
    if (n - 1) % 2 == 1 {
        C64::new(1.0, -1.0) / SQRT_2
    } else {
        C64::new(1.0, 0.0)
    }
}

fn parity_sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A Bell functional whose correlator coefficients depend only on the input weight.
#[derive(Debug, Clone, PartialEq)]
pub struct BellFunctional {
    pub family: Family,
    pub n: usize,
    /// Coefficient of every correlator `⟨⊗ A^{x_j}⟩` with `|x| = w`, indexed by `w`.
    pub weight_coeffs: Vec<f64>,
}

impl BellFunctional {
    pub fn new(family: Family, n: usize) -> Self {
        let weight_coeffs = (0..=n)
            .map(|w| match family {
                Family::Svetlichny => nu_sign(w) as f64 * parity_sign((n + 1) * w),
                Family::Mabk => {
                    // Re(p · i^w)
                    let iw = match w % 4 {
                        0 => C64::new(1.0, 0.0),
                        1 => C64::new(0.0, 1.0),
                        2 => C64::new(-1.0, 0.0),
                        _ => C64::new(0.0, -1.0),
                    };
                    (mabk_phase(n) * iw).re
                }
            })
            .collect();
        Self {
            family,
            n,
            weight_coeffs,
        }
    }

    /// Coefficient of the correlator with input string `x` (party 1 is the most significant bit).
    pub fn coefficient(&self, x: usize) -> f64 {
        self.weight_coeffs[x.count_ones() as usize]
    }

    /// Entries `W[i, d-1-i]` for every row `i`; everything else is zero.
    ///
    /// For a fixed row the product over parties is a polynomial in the input
    /// weight, so a small dynamic program replaces the sum over all `2^n`
    /// input strings.
    pub fn antidiagonal(&self, alphas: &[f64]) -> Vec<C64> {
        let n = self.n;
        debug_assert_eq!(alphas.len(), n);
        // A^r[b, 1-b] = exp(i·s_b·(-1)^r·α), with s_0 = -1 and s_1 = +1.
        let phases: Vec<(C64, C64)> = alphas
            .iter()
            .map(|&a| (C64::from_polar(1.0, a), C64::from_polar(1.0, -a)))
            .collect();
        let mut out = vec![C64::new(0.0, 0.0); 1 << n];
        let mut poly = vec![C64::new(0.0, 0.0); n + 1];
        for (row, slot) in out.iter_mut().enumerate() {
            poly.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
            poly[0] = C64::new(1.0, 0.0);
            for (j, &(e_pos, e_neg)) in phases.iter().enumerate() {
                let bit = (row >> (n - 1 - j)) & 1;
                let (r0, r1) = if bit == 1 {
                    (e_pos, e_neg)
                } else {
                    (e_neg, e_pos)
                };
                for w in (0..=j + 1).rev() {
                    let keep = if w <= j {
                        poly[w] * r0
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    let step = if w > 0 {
                        poly[w - 1] * r1
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    poly[w] = keep + step;
                }
            }
            *slot = poly
                .iter()
                .zip(&self.weight_coeffs)
                .map(|(p, c)| p * c)
                .sum();
        }
        out
    }

    /// Largest |eigenvalue|. The operator is antidiagonal and Hermitian, so
    /// its eigenvalues are `±|W[i, d-1-i]|`.
    pub fn spectral_norm(&self, alphas: &[f64]) -> f64 {
        self.antidiagonal(alphas)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn to_matrix(&self, alphas: &[f64]) -> ComplexMatrix {
        let anti = self.antidiagonal(alphas);
        let d = anti.len();
        let mut m = ComplexMatrix::zeros(d);
        for (i, v) in anti.into_iter().enumerate() {
            m[(i, d - 1 - i)] = v;
        }
        m
    }

    /// Functional value with every correlator replaced by a product of fixed outcomes.
    pub fn deterministic_value(&self, strategy: &DeterministicStrategy) -> f64 {
        let mut poly = vec![0.0; self.n + 1];
        poly[0] = 1.0;
        for (j, out) in strategy.outcomes.iter().enumerate() {
            let (o0, o1) = (out[0] as f64, out[1] as f64);
            for w in (0..=j + 1).rev() {
                let keep = if w <= j { poly[w] * o0 } else { 0.0 };
                let step = if w > 0 { poly[w - 1] * o1 } else { 0.0 };
                poly[w] = keep + step;
            }
        }
        poly.iter()
            .zip(&self.weight_coeffs)
            .map(|(p, c)| p * c)
            .sum()
    }
}

/// Outcomes `±1` for each party and each of its two inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicStrategy {
    pub outcomes: Vec<[i8; 2]>,
}

impl DeterministicStrategy {
    /// Decodes strategy `index` in `0..4^n`: bit `2j + r` set means party `j` answers -1 to input `r`.
    pub fn from_index(n: usize, index: usize) -> Self {
        let outcomes = (0..n)
            .map(|j| {
                let pick = |r: usize| {
                    if (index >> (2 * j + r)) & 1 == 1 {
                        -1
                    } else {
                        1
                    }
                };
                [pick(0), pick(1)]
            })
            .collect();
        Self { outcomes }
    }

    /// Flips both answers of every party in `mask`.
    pub fn flipped(&self, mask: usize) -> Self {
        let outcomes = self
            .outcomes
            .iter()
            .enumerate()
            .map(|(j, o)| {
                if (mask >> j) & 1 == 1 {
                    [-o[0], -o[1]]
                } else {
                    *o
                }
            })
            .collect();
        Self { outcomes }
    }
}

/// Maximum of the functional over all `4^n` deterministic strategies.
pub fn local_bound(protocol: &BellProtocol) -> f64 {
    let f = protocol.functional();
    (0..1usize << (2 * protocol.n))
        .map(|idx| f.deterministic_value(&DeterministicStrategy::from_index(protocol.n, idx)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest value over hybrid models in which the parties split into two
/// groups and each group answers with an arbitrary joint deterministic
/// function of its own inputs. This is the model Svetlichny's bound `2^(n-1)`
/// refers to; the fully local maximum from [`local_bound`] is smaller for
/// `n ≥ 4`.
pub fn bilocal_bound(protocol: &BellProtocol) -> f64 {
    let f = protocol.functional();
    let n = protocol.n;
    let mut best = f64::NEG_INFINITY;
    // Each cut is visited once, by enumerating the smaller group's response table.
    for group in 1usize..(1 << n) - 1 {
        let size = group.count_ones() as usize;
        if 2 * size > n || (2 * size == n && group & 1 == 0) {
            continue;
        }
        let inside: Vec<usize> = (0..n).filter(|j| group >> j & 1 == 1).collect();
        let outside: Vec<usize> = (0..n).filter(|j| group >> j & 1 == 0).collect();
        let rows = 1usize << inside.len();
        let cols = 1usize << outside.len();
        for table in 0..1usize << rows {
            let mut value = 0.0;
            for xb in 0..cols {
                let wb = xb.count_ones() as usize;
                let column: f64 = (0..rows)
                    .map(|xa| {
                        let sign = if table >> xa & 1 == 1 { -1.0 } else { 1.0 };
                        sign * f.weight_coeffs[wb + xa.count_ones() as usize]
                    })
                    .sum();
                value += column.abs();
            }
            best = best.max(value);
        }
    }
    best
}

/// Spectral norm at the ideal angles, backed by a coarse search over `[0, π/2]^n`.
///
/// Returns the larger of the two, so a search hit above the ideal-angle value
/// shows up as a mismatch against the catalog rather than being hidden.
pub fn quantum_bound(protocol: &BellProtocol) -> Result<f64> {
    let ideal = protocol.operator(&AngleVector::ideal(protocol.n))?;
    let eig = hermitian_eigenvalues(&ideal)?;
    let ideal_norm = eig.iter().map(|e| e.abs()).fold(0.0, f64::max);
    Ok(ideal_norm.max(coarse_norm_search(protocol)))
}

/// Largest spectral norm over a 9-point-per-axis grid of `[0, π/2]^n`.
pub fn coarse_norm_search(protocol: &BellProtocol) -> f64 {
    let f = protocol.functional();
    let n = protocol.n;
    let p = QUANTUM_SEARCH_POINTS;
    let axis: Vec<f64> = (0..p)
        .map(|k| FRAC_PI_2 * k as f64 / (p - 1) as f64)
        .collect();
    (0..p.pow(n as u32))
        .into_par_iter()
        .map(|idx| {
            let alphas = grid_point(&axis, n, idx);
            f.spectral_norm(&alphas)
        })
        .reduce(|| 0.0, f64::max)
}

/// Grid point `idx` in row-major order, the first party varying slowest.
pub(crate) fn grid_point(axis: &[f64], n: usize, mut idx: usize) -> Vec<f64> {
    let p = axis.len();
    let mut alphas = vec![0.0; n];
    for j in (0..n).rev() {
        alphas[j] = axis[idx % p];
        idx /= p;
    }
    alphas
}

/// `Tr[ρ W(angles)]` for a validated density matrix.
pub fn evaluate(
    protocol: &BellProtocol,
    state: &ComplexMatrix,
    angles: &AngleVector,
) -> Result<f64> {
    angles.check_len(protocol.n)?;
    crate::states::validate_density(state, protocol.dim())?;
    let w = protocol.functional().to_matrix(angles.as_slice());
    let value: Complex64 = state.trace_product(&w);
    if value.im.abs() > 1e-10 {
        return Err(Error::invalid(format!(
            "Bell value has imaginary part {:e}",
            value.im
        )));
    }
    Ok(value.re)
}
