//! Randomized binary response on a single gradient cell.
//!
//! A report picks one `(item, factor)` cell uniformly, and encodes the
//! clipped value `x ∈ [-1, 1]` there as `+B` with probability
//! `(x(e^ε - 1) + e^ε + 1) / (2e^ε + 2)` and `-B` otherwise, where
//! `B = (e^ε + 1)/(e^ε - 1) · M·F`. The decoded report is an unbiased
//! estimate of the whole clipped gradient matrix, and one report is ε-LDP;
//! `k` independent reports compose to `kε`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mf::{ItemGradient, Matrix};

/// Bytes per report on the wire: `u32` LE cell index + one sign byte.
pub const REPORT_WIRE_BYTES: usize = 5;

/// The only thing a client uploads. Cells are linearized row-major,
/// `item * F + factor`; `sign == true` means `+B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PerturbedReport {
    pub cell_index: u32,
    pub sign: bool,
}

impl PerturbedReport {
    pub fn to_bytes(self) -> [u8; REPORT_WIRE_BYTES] {
        let mut out = [0u8; REPORT_WIRE_BYTES];
        out[..4].copy_from_slice(&self.cell_index.to_le_bytes());
        out[4] = u8::from(self.sign);
        out
    }

    pub fn from_bytes(bytes: [u8; REPORT_WIRE_BYTES]) -> Result<Self> {
        let cell_index = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        let sign = match bytes[4] {
            0 => false,
            1 => true,
            b => {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("bad sign byte {b:#04x}"),
                })
            }
        };
        Ok(Self { cell_index, sign })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechanismParams {
    pub epsilon: f64,
    pub n_items: usize,
    pub n_factors: usize,
    pub k: usize,
}

impl MechanismParams {
    pub fn new(epsilon: f64, n_items: usize, n_factors: usize, k: usize) -> Result<Self> {
        let p = Self {
            epsilon,
            n_items,
            n_factors,
            k,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Param(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.n_items == 0 || self.n_factors == 0 {
            return Err(Error::Param("mechanism needs at least one cell".into()));
        }
        if self.cells() > u32::MAX as usize {
            return Err(Error::Param(format!(
                "{} cells do not fit a u32 index",
                self.cells()
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.n_items * self.n_factors
    }
}

/// `B = (e^ε + 1)/(e^ε - 1) · M·F`, evaluated as `coth(ε/2) · M·F`.
pub fn scale_constant(params: &MechanismParams) -> Result<f64> {
    if params.epsilon.is_nan() || params.epsilon <= 0.0 {
        return Err(Error::Param(format!(
            "epsilon must be > 0, got {}",
            params.epsilon
        )));
    }
    Ok(params.cells() as f64 / (params.epsilon / 2.0).tanh())
}

/// `Pr[β = 1]` for a clipped value `x`.
pub fn bernoulli_prob(x: f64, epsilon: f64) -> Result<f64> {
    output_prob(x, epsilon, true)
}

/// Probability that the report for value `x` carries `sign`. Both branches
/// are evaluated directly rather than as `1 - p` so the extreme ratios stay
/// exact to rounding.
pub fn output_prob(x: f64, epsilon: f64, sign: bool) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Param(format!("value {x} outside [-1, 1]")));
    }
    let e = epsilon.exp();
    let x = if sign { x } else { -x };
    // (x(e-1) + e + 1) / (2e + 2) rearranged without cancellation
    Ok((e * (1.0 + x) + (1.0 - x)) / (2.0 * (e + 1.0)))
}

/// Elementwise clamp to `[-1, 1]`.
pub fn clip_to_unit(grad: &ItemGradient) -> ItemGradient {
    let mut out = grad.clone();
    for v in out.as_mut_slice() {
        *v = v.clamp(-1.0, 1.0);
    }
    out
}

/// One report from an already clipped gradient.
pub fn perturb_once<R: Rng + ?Sized>(
    clipped: &ItemGradient,
    params: &MechanismParams,
    rng: &mut R,
) -> Result<PerturbedReport> {
    if clipped.n_rows() != params.n_items || clipped.n_cols() != params.n_factors {
        return Err(Error::Shape(format!(
            "gradient {}x{} vs mechanism {}x{}",
            clipped.n_rows(),
            clipped.n_cols(),
            params.n_items,
            params.n_factors
        )));
    }
    let item = rng.random_range(0..params.n_items);
    let factor = rng.random_range(0..params.n_factors);
    let p = bernoulli_prob(clipped.get(item, factor), params.epsilon)?;
    let sign = rng.random::<f64>() < p;
    Ok(PerturbedReport {
        cell_index: (item * params.n_factors + factor) as u32,
        sign,
    })
}

/// `k` independent reports (cells drawn with replacement) from one
/// gradient. Clipping happens here.
pub fn perturb_k<R: Rng + ?Sized>(
    grad: &ItemGradient,
    params: &MechanismParams,
    rng: &mut R,
) -> Result<Vec<PerturbedReport>> {
    let clipped = clip_to_unit(grad);
    (0..params.k)
        .map(|_| perturb_once(&clipped, params, rng))
        .collect()
}

/// Dense matrix that is zero except `±B` at the report's cell.
pub fn decode_report(report: &PerturbedReport, params: &MechanismParams) -> Result<ItemGradient> {
    let cells = params.cells();
    if report.cell_index as usize >= cells {
        return Err(Error::Decode {
            index: report.cell_index,
            cells,
        });
    }
    let b = scale_constant(params)?;
    let mut m = Matrix::zeros(params.n_items, params.n_factors);
    m.as_mut_slice()[report.cell_index as usize] = if report.sign { b } else { -b };
    Ok(m)
}

/// User-level budget per epoch under sequential composition, `k·ε`.
pub fn privacy_budget(params: &MechanismParams) -> f64 {
    params.k as f64 * params.epsilon
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn params(epsilon: f64, m: usize, f: usize, k: usize) -> MechanismParams {
        MechanismParams::new(epsilon, m, f, k).unwrap()
    }

    #[test]
    fn clip_values() {
        let g = Matrix::from_vec(1, 3, vec![0.5, -7.3, 2.0]).unwrap();
        assert_eq!(clip_to_unit(&g).as_slice(), &[0.5, -1.0, 1.0]);
    }

    #[test]
    fn scale_constant_values() {
        let b = scale_constant(&params(3f64.ln(), 5, 2, 1)).unwrap();
        assert!((b - 20.0).abs() < 1e-12, "{b}");
        let b = scale_constant(&params(50.0, 5, 2, 1)).unwrap();
        assert!(b >= 10.0 && b - 10.0 < 1e-12);
        let small = scale_constant(&params(0.5, 5, 2, 1)).unwrap();
        let large = scale_constant(&params(1.0, 5, 2, 1)).unwrap();
        assert!(small > large);
        let bad = MechanismParams {
            epsilon: 0.0,
            n_items: 1,
            n_factors: 1,
            k: 1,
        };
        assert!(scale_constant(&bad).is_err());
        assert!(MechanismParams::new(-1.0, 1, 1, 1).is_err());
    }

    #[test]
    fn bernoulli_endpoints() {
        for eps in [0.1, 1.0, 2.5, 6.0] {
            let e = f64::exp(eps);
            assert_eq!(bernoulli_prob(0.0, eps).unwrap(), 0.5);
            assert!((bernoulli_prob(1.0, eps).unwrap() - e / (e + 1.0)).abs() < 1e-15);
            assert!((bernoulli_prob(-1.0, eps).unwrap() - 1.0 / (e + 1.0)).abs() < 1e-15);
        }
        assert!(bernoulli_prob(1.5, 1.0).is_err());
    }

    #[test]
    fn bernoulli_matches_literal_formula() {
        for eps in [0.5, 2.5] {
            let e = f64::exp(eps);
            for k in 0..=20 {
                let x = -1.0 + k as f64 / 10.0;
                let literal = (x * (e - 1.0) + e + 1.0) / (2.0 * e + 2.0);
                assert!((bernoulli_prob(x, eps).unwrap() - literal).abs() < 1e-14);
                let q = output_prob(x, eps, false).unwrap();
                assert!((q - (1.0 - literal)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_cell_is_forced() {
        let p = params(1.0, 1, 1, 1);
        let g = Matrix::zeros(1, 1);
        let mut rng = stream(0, &[]);
        for _ in 0..100 {
            assert_eq!(perturb_once(&g, &p, &mut rng).unwrap().cell_index, 0);
        }
    }

    #[test]
    fn sign_frequencies() {
        let mut rng = stream(1, &[]);
        let p = params(3f64.ln(), 3, 2, 1);
        let zeros = Matrix::zeros(3, 2);
        let ones = Matrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
        let n = 100_000;
        let pos0 = (0..n)
            .filter(|_| perturb_once(&zeros, &p, &mut rng).unwrap().sign)
            .count();
        let pos1 = (0..n)
            .filter(|_| perturb_once(&ones, &p, &mut rng).unwrap().sign)
            .count();
        assert!((pos0 as f64 / n as f64 - 0.5).abs() < 0.01);
        assert!((pos1 as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn perturb_k_shape_and_determinism() {
        let p = params(2.0, 4, 3, 7);
        let g = Matrix::from_vec(4, 3, (0..12).map(|i| i as f64 - 6.0).collect()).unwrap();
        let a = perturb_k(&g, &p, &mut stream(9, &[])).unwrap();
        let b = perturb_k(&g, &p, &mut stream(9, &[])).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|r| (r.cell_index as usize) < 12));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = params(2.0, 4, 3, 1);
        assert!(perturb_once(&Matrix::zeros(3, 3), &p, &mut stream(0, &[])).is_err());
    }

    #[test]
    fn decode_places_b() {
        let p = params(3f64.ln(), 5, 2, 1);
        let d = decode_report(
            &PerturbedReport {
                cell_index: 0,
                sign: true,
            },
            &p,
        )
        .unwrap();
        assert!((d.get(0, 0) - 20.0).abs() < 1e-12);
        assert_eq!(d.as_slice().iter().filter(|v| **v != 0.0).count(), 1);
        let d = decode_report(
            &PerturbedReport {
                cell_index: 9,
                sign: false,
            },
            &p,
        )
        .unwrap();
        assert!((d.get(4, 1) + 20.0).abs() < 1e-12);
        assert!(matches!(
            decode_report(
                &PerturbedReport {
                    cell_index: 10,
                    sign: false
                },
                &p
            ),
            Err(Error::Decode {
                index: 10,
                cells: 10
            })
        ));
    }

    #[test]
    fn budget_composes_linearly() {
        assert_eq!(privacy_budget(&params(2.5, 1, 1, 100)), 250.0);
        assert_eq!(privacy_budget(&params(0.7, 1, 1, 1)), 0.7);
        let a = privacy_budget(&params(0.7, 1, 1, 3));
        let b = privacy_budget(&params(0.7, 1, 1, 6));
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn wire_encoding() {
        let r = PerturbedReport {
            cell_index: 0x0102_0304,
            sign: true,
        };
        assert_eq!(r.to_bytes(), [0x04, 0x03, 0x02, 0x01, 0x01]);
        assert_eq!(PerturbedReport::from_bytes(r.to_bytes()).unwrap(), r);
        assert!(PerturbedReport::from_bytes([0, 0, 0, 0, 2]).is_err());
    }
}
