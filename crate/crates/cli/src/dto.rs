//! JSON form of designs and Fisher information records.

use isac_beamkit::linalg::{c, CMat, CVec};
use isac_beamkit::pcrb::Pfim;
use isac_beamkit::{HybridDesign, RxCombiner, TxAnalog};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Complex matrix as row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrix {
    pub fn from_mat(m: &CMat) -> Self {
        let rows = |f: fn(&isac_beamkit::linalg::C64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        ComplexMatrix {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_mat(&self) -> Result<CMat, CliError> {
        let n = self.re.len();
        let m = self.re.first().map_or(0, Vec::len);
        let rect = |x: &Vec<Vec<f64>>| x.len() == n && x.iter().all(|r| r.len() == m);
        if !rect(&self.re) || !rect(&self.im) {
            return Err(CliError::Config("complex matrix parts must be rectangular and of equal shape".into()));
        }
        Ok(CMat::from_fn(n, m, |i, j| c(self.re[i][j], self.im[i][j])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TxAnalogDto {
    Phases { matrix: ComplexMatrix },
    Identity { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RxDto {
    /// Nonzero entries of W^H, block by block.
    Partial { n_rf: usize, re: Vec<f64>, im: Vec<f64> },
    Dft { n_rx: usize, indices: Vec<usize> },
    Identity { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDto {
    pub v_rf: TxAnalogDto,
    pub r_bb: Vec<ComplexMatrix>,
    pub rx: RxDto,
}

impl DesignDto {
    pub fn from_design(d: &HybridDesign) -> Self {
        let v_rf = match &d.v_rf {
            TxAnalog::Phases(v) => TxAnalogDto::Phases {
                matrix: ComplexMatrix::from_mat(v),
            },
            TxAnalog::Identity(n) => TxAnalogDto::Identity { n: *n },
        };
        let rx = match &d.rx {
            RxCombiner::Partial { d, n_rf } => RxDto::Partial {
                n_rf: *n_rf,
                re: d.iter().map(|z| z.re).collect(),
                im: d.iter().map(|z| z.im).collect(),
            },
            RxCombiner::Dft { indices, n_rx } => RxDto::Dft {
                n_rx: *n_rx,
                indices: indices.clone(),
            },
            RxCombiner::Identity(n) => RxDto::Identity { n: *n },
        };
        DesignDto {
            v_rf,
            r_bb: d.r_bb.iter().map(ComplexMatrix::from_mat).collect(),
            rx,
        }
    }

    pub fn to_design(&self) -> Result<HybridDesign, CliError> {
        let v_rf = match &self.v_rf {
            TxAnalogDto::Phases { matrix } => TxAnalog::Phases(matrix.to_mat()?),
            TxAnalogDto::Identity { n } => TxAnalog::Identity(*n),
        };
        let rx = match &self.rx {
            RxDto::Partial { n_rf, re, im } => {
                if re.len() != im.len() {
                    return Err(CliError::Config("rx: re and im lengths differ".into()));
                }
                RxCombiner::Partial {
                    d: CVec::from_iterator(re.len(), re.iter().zip(im).map(|(&a, &b)| c(a, b))),
                    n_rf: *n_rf,
                }
            }
            RxDto::Dft { n_rx, indices } => RxCombiner::Dft {
                indices: indices.clone(),
                n_rx: *n_rx,
            },
            RxDto::Identity { n } => RxCombiner::Identity(*n),
        };
        let r_bb = self.r_bb.iter().map(ComplexMatrix::to_mat).collect::<Result<_, _>>()?;
        Ok(HybridDesign { v_rf, r_bb, rx })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfimDto {
    pub j_theta_theta: f64,
    pub j_theta_alpha: [f64; 2],
    pub j_alpha_alpha: [[f64; 2]; 2],
    pub f_p_theta: f64,
    pub f_p_alpha: [[f64; 2]; 2],
}

impl PfimDto {
    pub fn from_pfim(p: &Pfim) -> Self {
        let m2 = |m: &nalgebra::Matrix2<f64>| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]];
        PfimDto {
            j_theta_theta: p.j_theta_theta,
            j_theta_alpha: p.j_theta_alpha,
            j_alpha_alpha: m2(&p.j_alpha_alpha),
            f_p_theta: p.f_p_theta,
            f_p_alpha: m2(&p.f_p_alpha),
        }
    }
}
