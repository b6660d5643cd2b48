use super::{section_alpha, MmseMap, SeError};
use crate::operators::{CouplingEnsemble, CouplingVarianceMatrix};

/// Per-block effective variances of a block-structured operator:
/// `Sigma_c^-2 = B sum_r alpha_r J_rc / (L_c delta + B sum_c' J_rc' E_c')`.
///
/// `row_rates[r]` is the number of rows of block row `r` divided by the
/// width of a column block, and `delta` the noise variance per measurement.
pub fn coupled_sigma2(
    e: &[f64],
    j: &CouplingVarianceMatrix,
    row_rates: &[f64],
    delta: f64,
    b: usize,
) -> Result<Vec<f64>, SeError> {
    if e.len() != j.l_c || row_rates.len() != j.l_r {
        return Err(SeError::InvalidParameter("block counts do not match the variance matrix".into()));
    }
    let bf = b as f64;
    let lc = j.l_c as f64;
    let theta: Vec<f64> = (0..j.l_r)
        .map(|r| lc * delta + bf * (0..j.l_c).map(|c| j.get(r, c) * e[c]).sum::<f64>())
        .collect();
    (0..j.l_c)
        .map(|c| {
            let inv: f64 = (0..j.l_r).map(|r| row_rates[r] * j.get(r, c) / theta[r]).sum::<f64>() * bf;
            if inv > 0.0 {
                Ok(1.0 / inv)
            } else {
                Err(SeError::InvalidParameter(format!("column block {c} is never measured")))
            }
        })
        .collect()
}

/// Coupled recursion over a variance matrix with a shared channel map.
pub struct CoupledSe<'a, M: MmseMap + ?Sized> {
    pub j: CouplingVarianceMatrix,
    pub row_rates: Vec<f64>,
    pub delta: f64,
    pub b: usize,
    pub map: &'a M,
}

impl<'a, M: MmseMap + ?Sized> CoupledSe<'a, M> {
    /// Recursion for the band ensemble; `delta` is the noise variance and
    /// `b` the section size (1 for scalar signals).
    pub fn from_ensemble(ens: &CouplingEnsemble, delta: f64, b: usize, map: &'a M) -> Result<Self, SeError> {
        let j = crate::operators::build_coupling_variances(ens)?;
        Ok(Self { j, row_rates: ens.row_rates(), delta, b, map })
    }

    pub fn initial(&self) -> Vec<f64> {
        vec![self.map.e0(); self.j.l_c]
    }

    pub fn step(&self, e: &[f64]) -> Result<Vec<f64>, SeError> {
        se_step_coupled(e, &self.j, &self.row_rates, self.delta, self.b, self.map)
    }
}

pub fn se_step_coupled<M: MmseMap + ?Sized>(
    e: &[f64],
    j: &CouplingVarianceMatrix,
    row_rates: &[f64],
    delta: f64,
    b: usize,
    map: &M,
) -> Result<Vec<f64>, SeError> {
    Ok(coupled_sigma2(e, j, row_rates, delta, b)?.iter().map(|&s| map.mmse(s).value).collect())
}

/// Recursion for a code whose section values are `c_g` in group `g`; `e`
/// holds the unit-normalized per-entry error of each group.
pub fn se_step_power_allocated<M: MmseMap + ?Sized>(
    e: &[f64],
    c: &[f64],
    b: usize,
    rate: f64,
    snr: f64,
    map: &M,
) -> Result<Vec<f64>, SeError> {
    let g = c.len();
    if e.len() != g || g == 0 {
        return Err(SeError::InvalidParameter("one error per group required".into()));
    }
    let power = c.iter().map(|x| x * x).sum::<f64>() / g as f64;
    if (power - 1.0).abs() > 1e-9 {
        return Err(SeError::InvalidParameter(format!("power allocation has mean power {power}, not 1")));
    }
    let bf = b as f64;
    let alpha = section_alpha(b, rate);
    let load = 1.0 / snr + bf / g as f64 * c.iter().zip(e).map(|(ci, ei)| ci * ci * ei).sum::<f64>();
    Ok(c.iter().map(|ci| map.mmse(load / (bf * alpha * ci * ci)).value).collect())
}
