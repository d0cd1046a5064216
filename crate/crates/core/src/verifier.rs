//! Positivity certificates `T = K - sW - μI ⪰ 0` over the measurement-angle domain.
//!
//! `K` is the dephased ideal state and `W` the Bell operator at the same
//! angles. Both only touch the diagonal and the antidiagonal, so a fixed
//! permutation turns `T` into `2^(n-1)` independent 2×2 blocks pairing index
//! `m` with `d-1-m`. The grid scan works on those blocks directly
//! ([`BlockEvaluator`]); [`build_t`] and [`block_decompose`] keep the dense
//! route around as an oracle.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bell::{grid_point, AngleVector, BellFunctional, BellProtocol, Family, Surd};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, pauli_sum, Block2, ComplexMatrix, PauliString, C64};
use crate::states::{
    apply_channel, g_unchecked, ghz_state, DephasingChannel, FlipAxis, IdealState,
};

/// A scan passes when its minimum block eigenvalue is at least `-PSD_TOLERANCE`.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Largest entry allowed outside the 2×2 blocks after the permutation.
pub const BLOCK_RESIDUE_TOL: f64 = 1e-12;

/// Largest entry allowed outside diagonal and antidiagonal in the ideal state.
const CROSS_SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct CertificateConstants {
    pub protocol: BellProtocol,
    pub s: f64,
    pub mu: f64,
    /// `(1/2 - μ)/s`; NaN when `s ≤ 0`.
    pub beta_t: f64,
    #[serde(skip)]
    pub exact: Option<(Surd, Surd)>,
}

/// Exact `(s, μ)` for the protocols with published constants.
pub fn catalog_exact(protocol: &BellProtocol) -> Option<(Surd, Surd)> {
    let half_root = Surd::frac(0, -1, 2);
    match (protocol.family, protocol.n) {
        (Family::Svetlichny, 3) => Some((Surd::frac(3, 3, 16), Surd::frac(-2, -3, 4))),
        (Family::Svetlichny, 4) => Some((Surd::frac(1, 1, 16), half_root)),
        (Family::Svetlichny, 5) => Some((Surd::frac(1, 1, 32), half_root)),
        (Family::Mabk, 3) => Some((Surd::frac(2, 1, 8), half_root)),
        (Family::Mabk, 4) => Some((Surd::frac(2, 1, 16), half_root)),
        (Family::Mabk, 5) => Some((Surd::frac(2, 1, 32), half_root)),
        _ => None,
    }
}

impl CertificateConstants {
    pub fn catalog(protocol: &BellProtocol) -> Result<Self> {
        let (s, mu) = catalog_exact(protocol).ok_or_else(|| Error::NoCatalog(protocol.label()))?;
        let beta_t = (Surd::frac(1, 0, 2) - mu) / s;
        Ok(Self {
            protocol: *protocol,
            s: s.value(),
            mu: mu.value(),
            beta_t: beta_t.value(),
            exact: Some((s, mu)),
        })
    }

    pub fn custom(protocol: &BellProtocol, s: f64, mu: f64) -> Result<Self> {
        if !s.is_finite() || !mu.is_finite() {
            return Err(Error::invalid("s and mu must be finite"));
        }
        let beta_t = if s > 0.0 { (0.5 - mu) / s } else { f64::NAN };
        Ok(Self {
            protocol: *protocol,
            s,
            mu,
            beta_t,
            exact: None,
        })
    }

    /// Catalog constants when they exist, with optional overrides of either value.
    pub fn resolve(protocol: &BellProtocol, s: Option<f64>, mu: Option<f64>) -> Result<Self> {
        match (catalog_exact(protocol), s, mu) {
            (Some(_), None, None) => Self::catalog(protocol),
            (Some((cs, cm)), s, mu) => {
                Self::custom(protocol, s.unwrap_or(cs.value()), mu.unwrap_or(cm.value()))
            }
            (None, Some(s), Some(mu)) => Self::custom(protocol, s, mu),
            (None, _, _) => Err(Error::NoCatalog(protocol.label())),
        }
    }

    pub fn exact_threshold(&self) -> Option<Surd> {
        self.exact.map(|(s, mu)| (Surd::frac(1, 0, 2) - mu) / s)
    }

    /// `s·β_Q + μ - 1`, which vanishes for every certificate that is tight at the quantum bound.
    pub fn normalization_residual(&self) -> f64 {
        self.s * self.protocol.beta_q() + self.mu - 1.0
    }

    /// `s` scaled by `factor`, keeping μ.
    pub fn with_scaled_slope(&self, factor: f64) -> Self {
        Self::custom(&self.protocol, self.s * factor, self.mu).expect("finite constants")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub lower: f64,
    pub upper: f64,
    pub refinement_depth: usize,
}

impl GridSpec {
    /// 21 points per axis up to four parties, 11 for five, 7 for six; `[0, π/4]`.
    pub fn default_for(n: usize) -> Self {
        let points_per_axis = match n {
            0..=4 => 21,
            5 => 11,
            _ => 7,
        };
        Self {
            points_per_axis,
            lower: 0.0,
            upper: FRAC_PI_4,
            refinement_depth: 6,
        }
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points_per_axis = points;
        self
    }

    /// Scan `[0, π/2]` instead of the reduced domain.
    pub fn full_domain(mut self) -> Self {
        self.upper = FRAC_PI_2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_axis < 2 {
            return Err(Error::invalid("grid needs at least 2 points per axis"));
        }
        if !(0.0 <= self.lower && self.lower < self.upper && self.upper <= FRAC_PI_2) {
            return Err(Error::invalid(format!(
                "grid domain [{}, {}] not inside [0, pi/2]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Sample positions along one axis; both endpoints are exact.
    pub fn axis(&self) -> Vec<f64> {
        let p = self.points_per_axis;
        (0..p)
            .map(|k| {
                if k == p - 1 {
                    self.upper
                } else {
                    self.lower + (self.upper - self.lower) * k as f64 / (p - 1) as f64
                }
            })
            .collect()
    }

    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.points_per_axis - 1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub constants: CertificateConstants,
    pub grid: GridSpec,
    pub grid_points_per_axis: usize,
    pub points_evaluated: usize,
    pub psd_tolerance: f64,
    pub min_eigenvalue: f64,
    pub argmin_angles: Vec<f64>,
    pub refined: bool,
    pub passed: bool,
}

/// Fast evaluation of the 2×2 blocks of `T` at arbitrary angles.
///
/// Holds the ideal state's diagonal and antidiagonal. Because every Kraus
/// operator is a scaled `I`, `X` or `Y`, the channel acts on those two
/// vectors by one butterfly per party: a flip on qubit `j` mixes entry `a`
/// with `a ^ bit_j`, and a `Y` flip also negates antidiagonal entries.
#[derive(Debug, Clone)]
pub struct BlockEvaluator {
    n: usize,
    functional: BellFunctional,
    rho_diag: Vec<f64>,
    rho_anti: Vec<C64>,
    s: f64,
    mu: f64,
}

impl BlockEvaluator {
    pub fn new(state: &IdealState, s: f64, mu: f64) -> Result<Self> {
        let residue = state.rho.off_cross_residue();
        if residue > CROSS_SUPPORT_TOL {
            return Err(Error::StructureViolation {
                residue,
                tolerance: CROSS_SUPPORT_TOL,
            });
        }
        let (diag, anti) = state.cross_entries();
        Ok(Self {
            n: state.protocol.n,
            functional: state.protocol.functional(),
            rho_diag: diag.iter().map(|z| z.re).collect(),
            rho_anti: anti,
            s,
            mu,
        })
    }

    pub fn for_constants(constants: &CertificateConstants) -> Result<Self> {
        let state = ghz_state(&constants.protocol)?;
        Self::new(&state, constants.s, constants.mu)
    }

    /// Diagonal and antidiagonal of `T` at `alphas`.
    pub fn t_cross(&self, alphas: &[f64]) -> (Vec<f64>, Vec<C64>) {
        let n = self.n;
        let mut diag = self.rho_diag.clone();
        let mut anti = self.rho_anti.clone();
        for (j, &a) in alphas.iter().enumerate() {
            let g = g_unchecked(a);
            let (keep, flip) = ((1.0 + g) / 2.0, (1.0 - g) / 2.0);
            let anti_flip = match FlipAxis::for_angle(a) {
                FlipAxis::X => flip,
                FlipAxis::Y => -flip,
            };
            let bit = 1usize << (n - 1 - j);
            for lo in 0..diag.len() {
                if lo & bit != 0 {
                    continue;
                }
                let hi = lo | bit;
                let (d0, d1) = (diag[lo], diag[hi]);
                diag[lo] = keep * d0 + flip * d1;
                diag[hi] = keep * d1 + flip * d0;
                let (a0, a1) = (anti[lo], anti[hi]);
                anti[lo] = a0 * keep + a1 * anti_flip;
                anti[hi] = a1 * keep + a0 * anti_flip;
            }
        }
        let w = self.functional.antidiagonal(alphas);
        for d in diag.iter_mut() {
            *d -= self.mu;
        }
        for (t, w) in anti.iter_mut().zip(&w) {
            *t -= w * self.s;
        }
        (diag, anti)
    }

    /// Block `m` pairs index `m` with `d-1-m`.
    pub fn blocks(&self, alphas: &[f64]) -> Vec<Block2> {
        let (diag, anti) = self.t_cross(alphas);
        let d = diag.len();
        (0..d / 2)
            .map(|m| Block2 {
                a: diag[m],
                b: anti[m],
                d: diag[d - 1 - m],
            })
            .collect()
    }

    pub fn min_eigenvalue(&self, alphas: &[f64]) -> f64 {
        self.blocks(alphas)
            .iter()
            .map(Block2::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `T = Λ(ρ) - sW - μI` as a dense matrix, using the dense operator builders.
pub fn build_t(
    protocol: &BellProtocol,
    angles: &AngleVector,
    s: f64,
    mu: f64,
) -> Result<ComplexMatrix> {
    let state = ghz_state(protocol)?;
    build_t_with_state(&state, angles, s, mu)
}

pub fn build_t_with_state(
    state: &IdealState,
    angles: &AngleVector,
    s: f64,
    mu: f64,
) -> Result<ComplexMatrix> {
    let protocol = state.protocol;
    angles.check_len(protocol.n)?;
    let channel = DephasingChannel::new(angles)?;
    let k = apply_channel(&state.rho, &channel)?;
    let w = protocol.operator(angles)?;
    let shift = ComplexMatrix::identity(protocol.dim()).scale_real(mu);
    Ok(&(&k - &w.scale_real(s)) - &shift)
}

fn block_target(n: usize, k: usize) -> usize {
    let half = 1usize << (n - 1);
    if k < half {
        2 * k
    } else {
        (1usize << (n + 1)) - 1 - 2 * k
    }
}

/// Permutation `U = Σ_k |π(k)⟩⟨k|` that gathers `(m, d-1-m)` into rows `(2m, 2m+1)`.
pub fn block_unitary(n: usize) -> ComplexMatrix {
    let d = 1usize << n;
    let mut u = ComplexMatrix::zeros(d);
    for k in 0..d {
        u[(block_target(n, k), k)] = C64::new(1.0, 0.0);
    }
    u
}

/// Splits `U T U†` into its 2×2 diagonal blocks.
pub fn block_decompose(t: &ComplexMatrix, n: usize) -> Result<Vec<Block2>> {
    if t.dim() != 1 << n {
        return Err(Error::invalid(format!(
            "matrix of dimension {} is not a {n}-qubit operator",
            t.dim()
        )));
    }
    let u = block_unitary(n);
    let rotated = &(&u * t) * &u.adjoint();
    let d = t.dim();
    let mut residue: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i / 2 != j / 2 {
                residue = residue.max(rotated[(i, j)].norm());
            }
        }
    }
    if residue > BLOCK_RESIDUE_TOL {
        return Err(Error::StructureViolation {
            residue,
            tolerance: BLOCK_RESIDUE_TOL,
        });
    }
    Ok((0..d / 2)
        .map(|m| Block2 {
            a: rotated[(2 * m, 2 * m)].re,
            b: rotated[(2 * m, 2 * m + 1)],
            d: rotated[(2 * m + 1, 2 * m + 1)].re,
        })
        .collect())
}

/// Minimum block eigenvalue over a grid, with local refinement near zero.
pub fn min_eig_over_grid(
    constants: &CertificateConstants,
    grid: &GridSpec,
) -> Result<CertificationReport> {
    min_eig_over_grid_with_tolerance(constants, grid, PSD_TOLERANCE)
}

/// [`min_eig_over_grid`] with a caller-chosen PSD tolerance.
pub fn min_eig_over_grid_with_tolerance(
    constants: &CertificateConstants,
    grid: &GridSpec,
    tolerance: f64,
) -> Result<CertificationReport> {
    grid.validate()?;
    if !(tolerance >= 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    let evaluator = BlockEvaluator::for_constants(constants)?;
    Ok(scan(&evaluator, constants, grid, tolerance))
}

fn scan(
    evaluator: &BlockEvaluator,
    constants: &CertificateConstants,
    grid: &GridSpec,
    tolerance: f64,
) -> CertificationReport {
    let n = constants.protocol.n;
    let axis = grid.axis();
    let total = grid.points_per_axis.pow(n as u32);
    // Grid index order is lexicographic in the angle vector, so the smaller
    // index wins ties and the result does not depend on the thread split.
    let (min, idx) = (0..total)
        .into_par_iter()
        .map(|idx| (evaluator.min_eigenvalue(&grid_point(&axis, n, idx)), idx))
        .reduce(|| (f64::INFINITY, usize::MAX), pick_min);

    let mut best = (min, grid_point(&axis, n, idx));
    let mut evaluated = total;
    let refined = min <= 10.0 * tolerance && grid.refinement_depth > 0;
    if refined {
        let (val, at, count) = refine(evaluator, &best.1, grid);
        evaluated += count;
        if val < best.0 {
            best = (val, at);
        }
    }
    CertificationReport {
        constants: constants.clone(),
        grid: grid.clone(),
        grid_points_per_axis: grid.points_per_axis,
        points_evaluated: evaluated,
        psd_tolerance: tolerance,
        min_eigenvalue: best.0,
        argmin_angles: best.1,
        refined,
        passed: best.0 >= -tolerance,
    }
}

fn pick_min(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

/// Pattern search around `start`: try every ±h/0 offset per axis, move to the
/// best, halve `h`, repeat `refinement_depth` times.
fn refine(evaluator: &BlockEvaluator, start: &[f64], grid: &GridSpec) -> (f64, Vec<f64>, usize) {
    let n = start.len();
    let mut center = start.to_vec();
    let mut best = evaluator.min_eigenvalue(&center);
    let mut h = grid.step();
    let mut count = 0;
    let stencil = 3usize.pow(n as u32);
    for _ in 0..grid.refinement_depth {
        h /= 2.0;
        let candidates: Vec<(f64, usize, Vec<f64>)> = (0..stencil)
            .into_par_iter()
            .map(|code| {
                let mut c = code;
                let point: Vec<f64> = center
                    .iter()
                    .map(|&x| {
                        let off = (c % 3) as f64 - 1.0;
                        c /= 3;
                        (x + off * h).clamp(grid.lower, grid.upper)
                    })
                    .collect();
                (evaluator.min_eigenvalue(&point), code, point)
            })
            .collect();
        count += stencil;
        for (val, _, point) in candidates {
            if val < best {
                best = val;
                center = point;
            }
        }
    }
    (best, center, count)
}

/// Projector onto the joint eigenspace of `ZZI`, `ZIZ` with signs `(-1)^x1`, `(-1)^x2`.
pub fn projector(x1: u8, x2: u8) -> ComplexMatrix {
    let s1 = if x1 == 0 { 1.0 } else { -1.0 };
    let s2 = if x2 == 0 { 1.0 } else { -1.0 };
    let terms = vec![
        PauliString::parse("III", 0.25).unwrap(),
        PauliString::parse("ZZI", 0.25 * s1).unwrap(),
        PauliString::parse("ZIZ", 0.25 * s2).unwrap(),
        PauliString::parse("IZZ", 0.25 * s1 * s2).unwrap(),
    ];
    pauli_sum(&terms).unwrap()
}

fn three_angles(angles: &AngleVector) -> Result<[f64; 3]> {
    angles.check_len(3)?;
    let a = angles.as_slice();
    Ok([a[0], a[1], a[2]])
}

fn check_bits(x1: u8, x2: u8) -> Result<()> {
    if x1 > 1 || x2 > 1 {
        return Err(Error::invalid("projector labels must be bits"));
    }
    Ok(())
}

/// Closed-form `(Tr M)² - Tr M²` for `M = P_{x1x2} T` in the three-party
/// Svetlichny certificate with `μ = 1 - 4√2 s`.
///
/// This is twice the determinant of the 2×2 block selected by the projector,
/// so it is non-negative exactly when that block's eigenvalues share a sign.
pub fn projector_lambda(angles: &AngleVector, s: f64, x1: u8, x2: u8) -> Result<f64> {
    check_bits(x1, x2)?;
    let [a1, a2, a3] = three_angles(angles)?;
    let (g1, g2, g3) = (g_unchecked(a1), g_unchecked(a2), g_unchecked(a3));
    let (c1, c2, c3) = (a1.cos(), a2.cos(), a3.cos());
    let (s1, s2, s3) = (a1.sin(), a2.sin(), a3.sin());
    let mu = 1.0 - 4.0 * SQRT_2 * s;
    let c = 0.125 - mu;
    let t1 = -0.125 + 4.0 * s * c1 * c2 * c3;
    let t2 = g2 * g3 / 8.0 - 4.0 * s * c1 * s2 * s3;
    let t3 = g1 * g3 / 8.0 - 4.0 * s * s1 * c2 * s3;
    let t4 = g1 * g2 / 8.0 - 4.0 * s * s1 * s2 * c3;
    let sx1 = if x1 == 0 { 1.0 } else { -1.0 };
    let sx2 = if x2 == 0 { 1.0 } else { -1.0 };

    let base = 2.0 * c * c - 2.0 * (t1 * t1 + t2 * t2 + t3 * t3 + t4 * t4)
        + (g1 * g1 * g2 * g2 + g2 * g2 * g3 * g3 + g3 * g3 * g1 * g1) / 32.0;
    let term12 = 0.5 * (c + g3 * g3 / 8.0) * g1 * g2 - 4.0 * (t2 * t3 - t1 * t4);
    let term13 = 0.5 * (c + g2 * g2 / 8.0) * g1 * g3 - 4.0 * (t2 * t4 - t1 * t3);
    let term23 = 0.5 * (c + g1 * g1 / 8.0) * g2 * g3 - 4.0 * (t3 * t4 - t1 * t2);
    Ok(base + sx1 * term12 + sx2 * term13 + sx1 * sx2 * term23)
}

/// `(Tr M)² - Tr M²` computed from dense matrices.
pub fn projector_lambda_direct(angles: &AngleVector, s: f64, x1: u8, x2: u8) -> Result<f64> {
    check_bits(x1, x2)?;
    three_angles(angles)?;
    let protocol = BellProtocol::svetlichny(3)?;
    let mu = 1.0 - 4.0 * SQRT_2 * s;
    let t = build_t(&protocol, angles, s, mu)?;
    let m = &projector(x1, x2) * &t;
    let tr = m.trace().re;
    let tr_sq = m.trace_product(&m).re;
    Ok(tr * tr - tr_sq)
}

/// The eight closed-form entries of the three-party Svetlichny blocks with
/// `μ = 1 - 4√2 s`: `(f1, f2)` is block 0 as (diagonal, off-diagonal), and so on.
pub fn svetlichny3_block_functions(alphas: &[f64; 3], s: f64) -> [f64; 8] {
    let [a1, a2, a3] = *alphas;
    let (g1, g2, g3) = (g_unchecked(a1), g_unchecked(a2), g_unchecked(a3));
    let diag = 4.0 * SQRT_2 * s;
    let (c3, s3) = (a3.cos(), a3.sin());
    [
        (-7.0 + g2 * g3 + g1 * (g2 + g3)) / 8.0 + diag,
        (-1.0 - g2 * g3 - g1 * (g2 + g3)) / 8.0
            + 4.0 * s * ((a1 - a2).cos() * c3 + (a1 + a2).sin() * s3),
        (-7.0 + g1 * g2 - (g1 + g2) * g3) / 8.0 + diag,
        (-1.0 - g1 * g2 + (g1 + g2) * g3) / 8.0
            + 4.0 * s * ((a1 - a2).cos() * c3 - (a1 + a2).sin() * s3),
        (-7.0 - g2 * g3 + g1 * (g3 - g2)) / 8.0 + diag,
        (-1.0 + g1 * (g2 - g3) + g2 * g3) / 8.0
            + 4.0 * s * ((a1 + a2).cos() * c3 + (a1 - a2).sin() * s3),
        (-7.0 + g2 * g3 - g1 * (g2 + g3)) / 8.0 + diag,
        (-1.0 - g2 * g3 + g1 * (g2 + g3)) / 8.0
            + 4.0 * s * ((a1 + a2).cos() * c3 - (a1 - a2).sin() * s3),
    ]
}

struct FourPartyTerms {
    g_even: f64,
    g_odd: f64,
    t1: f64,
    t2: f64,
}

fn four_party_terms(alphas: &[f64; 4]) -> FourPartyTerms {
    let g: Vec<f64> = alphas.iter().map(|&a| g_unchecked(a)).collect();
    let mut g_even = g[0] * g[1] * g[2] * g[3];
    let mut g_odd = 0.0;
    for i in 0..4 {
        g_odd += g[i];
        for j in i + 1..4 {
            g_even += g[i] * g[j];
            for k in j + 1..4 {
                g_odd += g[i] * g[j] * g[k];
            }
        }
    }
    let [a1, a2, a3, a4] = *alphas;
    let t1 = (a1 - a4).cos() * (a2 - a3).cos() + (a2 + a3).sin() * (a1 + a4).sin();
    let t2 = -(a1 - a4).cos() * (a2 + a3).sin() - (a2 - a3).cos() * (a1 + a4).sin();
    FourPartyTerms {
        g_even,
        g_odd,
        t1,
        t2,
    }
}

/// Closed-form first block of the four-party Svetlichny certificate with
/// `μ = 1 - 8√2 s`: the diagonal entry and the lower-left off-diagonal entry.
pub fn svetlichny4_first_block(alphas: &[f64; 4], s: f64) -> (f64, C64) {
    let t = four_party_terms(alphas);
    let f1 = (-15.0 + t.g_even) / 16.0 + 8.0 * SQRT_2 * s;
    let f2 = C64::new(
        -(1.0 + t.g_even) / (16.0 * SQRT_2) + 4.0 * t.t1 * s,
        t.g_odd / (16.0 * SQRT_2) + 4.0 * t.t2 * s,
    );
    (f1, f2)
}

/// Closed-form `f1² - |f2|²` of the four-party first block, as a quadratic in `s`.
pub fn svetlichny4_determinant(alphas: &[f64; 4], s: f64) -> f64 {
    let FourPartyTerms {
        g_even: ge,
        g_odd: go,
        t1,
        t2,
    } = four_party_terms(alphas);
    let quad = 128.0 - 16.0 * (t1 * t1 + t2 * t2);
    let lin =
        -15.0 * SQRT_2 + ge * SQRT_2 + (1.0 + ge) * t1 / (2.0 * SQRT_2) - go * t2 / (2.0 * SQRT_2);
    let constant = ((ge + go) * (ge - go) / 2.0 - 31.0 * ge + 449.0 / 2.0) / 256.0;
    quad * s * s + lin * s + constant
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckReport {
    pub protocol: BellProtocol,
    pub samples: usize,
    pub seed: u64,
    /// Closed-form block entries vs numeric blocks.
    pub max_entry_deviation: f64,
    /// Four parties only: closed-form determinant vs `f1² - |f2|²` of the numeric block.
    pub max_determinant_deviation: Option<f64>,
    /// Three parties only: closed-form projector criterion vs dense trace computation.
    pub max_lambda_deviation: Option<f64>,
    /// Block eigenvalues vs full Jacobi eigenvalues.
    pub max_eigenvalue_deviation: f64,
    pub sylvester_checks: usize,
    pub passed: bool,
}

pub const ENTRY_TOL: f64 = 1e-10;
pub const DETERMINANT_TOL: f64 = 1e-9;
pub const LAMBDA_TOL: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-9;

fn ensure(formula: &str, angles: &[f64], deviation: f64, tol: f64) -> Result<()> {
    if deviation > tol || deviation.is_nan() {
        return Err(Error::CrosscheckFailure {
            formula: formula.to_string(),
            angles: angles.to_vec(),
            deviation,
        });
    }
    Ok(())
}

/// Sorted eigenvalues of every block, flattened.
pub fn block_spectrum(blocks: &[Block2]) -> Vec<f64> {
    let mut all: Vec<f64> = blocks
        .iter()
        .flat_map(|b| {
            let (lo, hi) = b.eigenvalues();
            [lo, hi]
        })
        .collect();
    all.sort_by(f64::total_cmp);
    all
}

fn sylvester_agrees(block: &Block2) -> bool {
    let sylvester = block.a >= 0.0 && block.d >= 0.0 && block.determinant() >= 0.0;
    let spectral = block.min_eigenvalue() >= 0.0;
    sylvester == spectral
}

/// Compares every closed-form block expression against the dense numerics on
/// random angles drawn from `[0, π/4]^n` with catalog constants.
pub fn closed_form_crosscheck(
    protocol: &BellProtocol,
    samples: usize,
    seed: u64,
) -> Result<CrosscheckReport> {
    if protocol.family != Family::Svetlichny || !(3..=4).contains(&protocol.n) {
        return Err(Error::invalid(format!(
            "closed forms exist for svetlichny-3 and svetlichny-4 only, not {protocol}"
        )));
    }
    let constants = CertificateConstants::catalog(protocol)?;
    let (s, mu) = (constants.s, constants.mu);
    let state = ghz_state(protocol)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = protocol.n;
    let d = protocol.dim();

    let mut report = CrosscheckReport {
        protocol: *protocol,
        samples,
        seed,
        max_entry_deviation: 0.0,
        max_determinant_deviation: (n == 4).then_some(0.0),
        max_lambda_deviation: (n == 3).then_some(0.0),
        max_eigenvalue_deviation: 0.0,
        sylvester_checks: 0,
        passed: false,
    };

    for _ in 0..samples {
        let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=FRAC_PI_4)).collect();
        let angles = AngleVector::new(alphas.clone())?;
        let t = build_t_with_state(&state, &angles, s, mu)?;
        let blocks = block_decompose(&t, n)?;

        let entry_dev = if n == 3 {
            let f = svetlichny3_block_functions(&[alphas[0], alphas[1], alphas[2]], s);
            let mut dev: f64 = 0.0;
            for (m, blk) in blocks.iter().enumerate() {
                dev = dev.max((blk.a - f[2 * m]).abs());
                dev = dev.max((blk.d - f[2 * m]).abs());
                dev = dev.max((blk.b - C64::new(f[2 * m + 1], 0.0)).norm());
                // The off-diagonal entry of the permuted block is T[m, d-1-m].
                dev = dev.max((t[(m, d - 1 - m)] - blk.b).norm());
            }
            dev
        } else {
            let a4 = [alphas[0], alphas[1], alphas[2], alphas[3]];
            let (f1, f2) = svetlichny4_first_block(&a4, s);
            let first = blocks[0];
            let lower_left = t[(d - 1, 0)];
            let dev = (first.a - f1).abs().max((lower_left - f2).norm());
            let numeric_det = first.a * first.a - lower_left.norm_sqr();
            let det_dev = (numeric_det - svetlichny4_determinant(&a4, s)).abs();
            ensure("four-party determinant", &alphas, det_dev, DETERMINANT_TOL)?;
            let slot = report.max_determinant_deviation.get_or_insert(0.0);
            *slot = slot.max(det_dev);
            dev
        };
        ensure("closed-form block entries", &alphas, entry_dev, ENTRY_TOL)?;
        report.max_entry_deviation = report.max_entry_deviation.max(entry_dev);

        if n == 3 {
            for (x1, x2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let closed = projector_lambda(&angles, s, x1, x2)?;
                let direct = projector_lambda_direct(&angles, s, x1, x2)?;
                let dev = (closed - direct).abs();
                ensure("projector criterion", &alphas, dev, LAMBDA_TOL)?;
                let slot = report.max_lambda_deviation.get_or_insert(0.0);
                *slot = slot.max(dev);
            }
        }

        for blk in &blocks {
            if !sylvester_agrees(blk) {
                return Err(Error::CrosscheckFailure {
                    formula: "Sylvester criterion".into(),
                    angles: alphas.clone(),
                    deviation: blk.min_eigenvalue(),
                });
            }
            report.sylvester_checks += 1;
        }

        let full = hermitian_eigenvalues(&t)?;
        let eig_dev = block_spectrum(&blocks)
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure("block spectrum", &alphas, eig_dev, EIGEN_TOL)?;
        report.max_eigenvalue_deviation = report.max_eigenvalue_deviation.max(eig_dev);
    }
    report.passed = true;
    Ok(report)
}
