use serde::Serialize;

use super::{clock, contraction_round, run_exhaustive, shift, ProtocolTrace, Stage, StageFn};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::state::{ghz, LocalOperator, MeasurementRound, PureState};
use crate::{tol, C64};

/// Certificate `Σ_i √p_i |a_i^{(1)},…,a_i^{(N−1)}⟩ ⊗ |f_i⟩` for a reduced
/// separable state with at most `p.len()` terms.
///
/// `a[k][i]` is the vector of party `k` in term `i`. `last` holds the vectors
/// `f_i` of the final party as columns; `None` means `f_i = |i⟩`.
#[derive(Clone, Debug, Serialize)]
pub struct ReducedSeparable {
    pub p: Vec<f64>,
    pub a: Vec<Vec<Vec<C64>>>,
    #[serde(skip)]
    pub last: Option<CMat>,
}

impl ReducedSeparable {
    pub fn cardinality(&self) -> usize {
        self.p.iter().filter(|&&x| x > 0.0).count()
    }

    pub fn parties(&self) -> usize {
        self.a.len() + 1
    }

    fn last_vector(&self, i: usize) -> Vec<C64> {
        match &self.last {
            Some(f) => f.column(i).iter().copied().collect(),
            None => {
                let mut v = vec![C64::new(0.0, 0.0); self.p.len()];
                v[i] = C64::new(1.0, 0.0);
                v
            }
        }
    }

    /// The certified state.
    pub fn target(&self) -> Result<PureState> {
        let mut total: Option<PureState> = None;
        for (i, &pi) in self.p.iter().enumerate() {
            if pi <= 0.0 {
                continue;
            }
            let mut vecs: Vec<Vec<C64>> = self.a.iter().map(|ak| ak[i].clone()).collect();
            vecs.push(self.last_vector(i));
            let term = PureState::product(&vecs)?.scaled(C64::new(pi.sqrt(), 0.0));
            total = Some(match total {
                None => term,
                Some(t) => {
                    let amps = t.amps().iter().zip(term.amps()).map(|(x, y)| x + y).collect();
                    PureState::new(t.dims().to_vec(), amps)?
                }
            });
        }
        total.ok_or_else(|| Error::InvalidParameter("certificate has no terms".into()))
    }

    fn validate(&self, n: usize) -> Result<()> {
        let d = self.p.len();
        if self.a.len() + 1 != n {
            return Err(Error::InvalidParameter(format!("certificate needs {} party vector lists, got {}", n - 1, self.a.len())));
        }
        if self.p.iter().any(|&x| !(x >= -tol::PROB)) {
            return Err(Error::InvalidParameter("probabilities must be non-negative".into()));
        }
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > tol::PROB {
            return Err(Error::InvalidParameter(format!("probabilities sum to {sum}, not 1")));
        }
        for (k, ak) in self.a.iter().enumerate() {
            if ak.len() != d {
                return Err(Error::InvalidParameter(format!("party {} has {} vectors, expected {d}", k + 1, ak.len())));
            }
            let dim = ak[0].len();
            for v in ak {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch(format!("party {} vectors have mixed dimensions", k + 1)));
                }
                let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidParameter(format!("party {} vector has norm {norm}", k + 1)));
                }
            }
        }
        if let Some(f) = &self.last {
            if f.ncols() != d {
                return Err(Error::DimensionMismatch("last-party vectors do not match the cardinality".into()));
            }
            let active: Vec<usize> = (0..d).filter(|&i| self.p[i] > 0.0).collect();
            for &x in &active {
                for &y in &active {
                    let ip: C64 = f.column(x).iter().zip(f.column(y).iter()).map(|(u, v)| u.conj() * v).sum();
                    let expect = if x == y { 1.0 } else { 0.0 };
                    if (ip - C64::new(expect, 0.0)).norm() > 1e-10 {
                        return Err(Error::InvalidParameter("last-party vectors must be orthonormal".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The protocol from `src` (equal to `⊗X_i |GHZ_d⟩` with the `prefix`
/// contractions undoing `X_i`) to the certified state.
fn protocol(initial: &PureState, prefix: Vec<MeasurementRound>, cert: &ReducedSeparable, protocol_name: &str) -> Result<ProtocolTrace> {
    let d = cert.p.len();
    let n = cert.parties();
    cert.validate(n)?;
    let last = n - 1;
    let mut stages: Vec<StageFn> = Vec::new();
    for round in prefix {
        stages.push(Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(round.clone()))));
    }
    let offset = stages.len();

    let sqrt_p: Vec<f64> = cert.p.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let first = {
        let elements: Vec<CMat> = (0..d)
            .map(|k| {
                let mut m = CMat::zeros(d, d);
                for j in 0..d {
                    m[(j, (j + k) % d)] = C64::new(sqrt_p[j], 0.0);
                }
                m
            })
            .collect();
        let corrections = (0..d).map(|k| (0..last).map(|p| LocalOperator::new(p, shift(d, -(k as isize)))).collect()).collect();
        MeasurementRound::new(last, elements, format!("party {}: amplitude POVM Σ_j √p_j|j⟩⟨j⊕k|", n)).with_corrections(corrections)
    };
    stages.push(Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(first.clone()))));

    let norm = 1.0 / (d as f64).sqrt();
    for (party, ak) in cert.a.iter().enumerate() {
        let dim = ak[0].len();
        let elements: Vec<CMat> = (0..d)
            .map(|k| {
                CMat::from_fn(dim, d, |r, j| {
                    let angle = 2.0 * std::f64::consts::PI * ((j * k) % d) as f64 / d as f64;
                    ak[j][r] * C64::from_polar(norm, angle)
                })
            })
            .collect();
        let round = MeasurementRound::new(party, elements, format!("party {}: Fourier POVM onto the a-vectors", party + 1));
        if round.completeness_defect() > tol::POVM {
            return Err(Error::IncompleteMeasurement(format!("party {} POVM is incomplete", party + 1)));
        }
        stages.push(Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(round.clone()))));
    }
    let fourier_start = offset + 1;
    stages.push(Box::new(move |_: &PureState, path: &[usize]| {
        let k_total: usize = path[fourier_start..].iter().sum();
        let gate = clock(d, -((k_total % d) as isize));
        Ok(Stage::Local { ops: vec![LocalOperator::new(last, gate)], description: format!("party {n}: phase gate ω^(−jK), K = {k_total}") })
    }));
    if let Some(f) = &cert.last {
        let round = contraction_round(last, f.clone(), format!("party {n}: map |i⟩ to the last-party vectors"))?;
        stages.push(Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(round.clone()))));
    }
    let target = cert.target()?;
    let mut trace = run_exhaustive(protocol_name, initial, &stages, &target)?;
    trace.notes.push(format!("d = {d}, N = {n}, cardinality {}", cert.cardinality()));
    Ok(trace)
}

/// Converts `GHZ_d` on `N` parties into the reduced separable state
/// `Σ_i √p_i |a_i^{(1)},…,a_i^{(N−1)}, i⟩` by LOCC; every branch succeeds.
pub fn ghz_to_reduced_separable(d: usize, n: usize, p: &[f64], a: &[Vec<Vec<C64>>]) -> Result<ProtocolTrace> {
    if d < 1 || n < 2 {
        return Err(Error::InvalidParameter("need d ≥ 1 and N ≥ 2".into()));
    }
    if p.len() != d {
        return Err(Error::InvalidParameter(format!("probability vector has length {}, expected {d}", p.len())));
    }
    let cert = ReducedSeparable { p: p.to_vec(), a: a.to_vec(), last: None };
    cert.validate(n)?;
    protocol(&ghz(d, n), Vec::new(), &cert, "ghz-to-reduced-separable")
}

/// Runs the reduced-separable protocol on `src = ⊗X_i|GHZ_d⟩` where the
/// columns of each `X_i` are orthonormal. The certificate is padded to `d`
/// terms when it has fewer.
pub fn reduced_separable_from_ghz(src: &PureState, isometries: &[LocalOperator], cert: &ReducedSeparable) -> Result<ProtocolTrace> {
    let d = isometries.first().map(|x| x.matrix.ncols()).ok_or_else(|| Error::InvalidParameter("no isometries".into()))?;
    if cert.p.len() > d {
        return Err(Error::HypothesisViolated(format!("certificate cardinality {} exceeds GHZ dimension {d}", cert.p.len())));
    }
    let mut cert = cert.clone();
    let extra = d - cert.p.len();
    if extra > 0 {
        cert.p.extend(std::iter::repeat_n(0.0, extra));
        for ak in cert.a.iter_mut() {
            let filler = ak[0].clone();
            ak.extend(std::iter::repeat_n(filler, extra));
        }
        let f = match cert.last.take() {
            Some(f) => f,
            None => linalg::identity(d - extra),
        };
        let mut padded = CMat::zeros(f.nrows(), d);
        padded.columns_mut(0, f.ncols()).copy_from(&f);
        cert.last = Some(padded);
    }
    let prefix = isometries
        .iter()
        .map(|x| {
            if linalg::max_abs(&(x.matrix.adjoint() * &x.matrix - linalg::identity(d))) > tol::UNITARY {
                return Err(Error::HypothesisViolated(format!("operator on party {} is not an isometry", x.party + 1)));
            }
            contraction_round(x.party, x.matrix.adjoint(), format!("party {}: rotate to the GHZ basis", x.party + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    protocol(src, prefix, &cert, "reduced-separable-from-ghz")
}
