//! Fidelity statements derived from certified constants, and the tradeoff
//! curves plotted against relative violation.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::bell::{BellProtocol, Family};
use crate::error::{Error, Result};
use crate::verifier::CertificateConstants;

const BOUND_SLACK: f64 = 1e-12;

/// Raw affine bound `sβ + μ`, flagged when it says nothing (below 1/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityBound {
    pub value: f64,
    pub trivial: bool,
}

/// `F ≥ s·β_O + μ` for an observed value inside `[β_L, β_Q]`.
pub fn fidelity_lower_bound(
    constants: &CertificateConstants,
    beta_o: f64,
) -> Result<FidelityBound> {
    let p = &constants.protocol;
    if !beta_o.is_finite() || beta_o < p.beta_l() - BOUND_SLACK || beta_o > p.beta_q() + BOUND_SLACK
    {
        return Err(Error::invalid(format!(
            "observed value {beta_o} outside [{}, {}]",
            p.beta_l(),
            p.beta_q()
        )));
    }
    let value = constants.s * beta_o + constants.mu;
    Ok(FidelityBound {
        value,
        trivial: value < 0.5 - BOUND_SLACK,
    })
}

/// Observed value at which the bound reaches 1/2.
pub fn threshold(constants: &CertificateConstants) -> Result<f64> {
    if !(constants.s > 0.0) {
        return Err(Error::invalid(format!(
            "slope must be positive, got {}",
            constants.s
        )));
    }
    Ok((0.5 - constants.mu) / constants.s)
}

/// Best value reachable by states separable across some bipartition:
/// `2^(n-2)·√2` for MABK. Svetlichny uses its local bound.
pub fn reference_value(protocol: &BellProtocol) -> f64 {
    match protocol.family {
        Family::Svetlichny => protocol.beta_l(),
        Family::Mabk => (1u64 << (protocol.n - 2)) as f64 * std::f64::consts::SQRT_2,
    }
}

/// Mixture upper bound `1/2 + (1/2)(β_O - ref)/(β_Q - ref)`.
pub fn tradeoff_upper_bound(protocol: &BellProtocol, beta_o: f64, beta_ref: f64) -> f64 {
    0.5 + 0.5 * (beta_o - beta_ref) / (protocol.beta_q() - beta_ref)
}

/// True when the certified threshold meets the reference value, i.e. the
/// lower bound cannot be improved.
pub fn tightness_check(protocol: &BellProtocol) -> Result<bool> {
    let c = CertificateConstants::catalog(protocol)?;
    Ok((threshold(&c)? - reference_value(protocol)).abs() <= BOUND_SLACK)
}

pub fn relative_violation(protocol: &BellProtocol, beta_o: f64) -> f64 {
    (beta_o - protocol.beta_l()) / (protocol.beta_q() - protocol.beta_l())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub beta_o: f64,
    pub relative_violation: f64,
    pub fidelity_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeoffCurve {
    pub protocol: BellProtocol,
    pub points: Vec<CurvePoint>,
}

pub const CSV_HEADER: [&str; 3] = ["beta_O", "relative_violation", "fidelity_bound"];

impl TradeoffCurve {
    pub fn start(&self) -> &CurvePoint {
        &self.points[0]
    }

    pub fn end(&self) -> &CurvePoint {
        self.points.last().expect("curve has at least two points")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for p in &self.points {
            w.write_record([
                crate::cli::sig12(p.beta_o),
                crate::cli::sig12(p.relative_violation),
                crate::cli::sig12(p.fidelity_bound),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON array of point records.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.points)?)
    }

    pub fn save(&self, path: &Path, json: bool) -> Result<()> {
        let file = std::fs::File::create(path)?;
        if json {
            let mut f = std::io::BufWriter::new(file);
            f.write_all(self.to_json()?.as_bytes())?;
            f.write_all(b"\n")?;
            f.flush()?;
            Ok(())
        } else {
            self.write_csv(file)
        }
    }
}

/// `resolution` points spaced evenly over `[β_T, β_Q]`.
///
/// The line starts at the certified threshold even when it sits above the
/// local bound, since nothing is certified below it.
pub fn emit_curve(protocol: &BellProtocol, resolution: usize) -> Result<TradeoffCurve> {
    if resolution < 2 {
        return Err(Error::invalid("curve resolution must be at least 2"));
    }
    let c = CertificateConstants::catalog(protocol)?;
    let start = threshold(&c)?;
    let end = protocol.beta_q();
    let points = (0..resolution)
        .map(|k| {
            let beta_o = if k == resolution - 1 {
                end
            } else {
                start + (end - start) * k as f64 / (resolution - 1) as f64
            };
            CurvePoint {
                beta_o,
                relative_violation: relative_violation(protocol, beta_o),
                fidelity_bound: c.s * beta_o + c.mu,
            }
        })
        .collect();
    Ok(TradeoffCurve {
        protocol: *protocol,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn cat(family: Family, n: usize) -> CertificateConstants {
        CertificateConstants::catalog(&BellProtocol::new(family, n).unwrap()).unwrap()
    }

    #[test]
    fn bound_examples() {
        let sv4 = cat(Family::Svetlichny, 4);
        assert!((fidelity_lower_bound(&sv4, 8.0).unwrap().value - 0.5).abs() < 1e-12);
        assert!((fidelity_lower_bound(&sv4, 8.0 * SQRT_2).unwrap().value - 1.0).abs() < 1e-12);
        let m4 = cat(Family::Mabk, 4);
        let b = fidelity_lower_bound(&m4, 4.0 * SQRT_2).unwrap();
        assert!((b.value - 0.5).abs() < 1e-12);
        assert!(!b.trivial);
        assert!(fidelity_lower_bound(&sv4, 7.0).is_err());
        assert!(fidelity_lower_bound(&sv4, 20.0).is_err());
        let low = fidelity_lower_bound(&m4, 2.0 * SQRT_2).unwrap();
        assert!(low.trivial && low.value < 0.5);
    }

    #[test]
    fn threshold_examples() {
        assert!(
            (threshold(&cat(Family::Svetlichny, 3)).unwrap() - 4.0 * (2.0 + SQRT_2) / 3.0).abs()
                < 1e-12
        );
        assert!((threshold(&cat(Family::Mabk, 5)).unwrap() - 8.0 * SQRT_2).abs() < 1e-12);
        assert!((threshold(&cat(Family::Mabk, 3)).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
        let p = BellProtocol::mabk(3).unwrap();
        assert!(threshold(&CertificateConstants::custom(&p, 0.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        let sv5 = BellProtocol::svetlichny(5).unwrap();
        assert_eq!(tradeoff_upper_bound(&sv5, 16.0, 16.0), 0.5);
        let m4 = BellProtocol::mabk(4).unwrap();
        assert!((tradeoff_upper_bound(&m4, 8.0, reference_value(&m4)) - 1.0).abs() < 1e-12);
        assert!((reference_value(&m4) - 4.0 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn tightness_examples() {
        assert!(tightness_check(&BellProtocol::svetlichny(4).unwrap()).unwrap());
        assert!(!tightness_check(&BellProtocol::svetlichny(3).unwrap()).unwrap());
        assert!(tightness_check(&BellProtocol::mabk(5).unwrap()).unwrap());
    }

    #[test]
    fn curve_endpoints() {
        let expect = [
            (Family::Svetlichny, 3, 1.0 / 3.0),
            (Family::Svetlichny, 4, 0.0),
            (Family::Mabk, 3, 0.414213),
            (Family::Mabk, 4, 0.546918),
            (Family::Mabk, 5, 0.609475),
        ];
        for (family, n, x0) in expect {
            let c = emit_curve(&BellProtocol::new(family, n).unwrap(), 11).unwrap();
            assert!(
                (c.start().relative_violation - x0).abs() < 1e-5,
                "{family} {n}"
            );
            assert!((c.start().fidelity_bound - 0.5).abs() < 1e-12);
            assert!((c.end().relative_violation - 1.0).abs() < 1e-12);
            assert!((c.end().fidelity_bound - 1.0).abs() < 1e-12);
        }
        assert!(emit_curve(&BellProtocol::mabk(3).unwrap(), 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = emit_curve(&BellProtocol::svetlichny(4).unwrap(), 3).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "beta_O,relative_violation,fidelity_bound"
        );
        assert_eq!(lines.count(), 3);
    }
}
