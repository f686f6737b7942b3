//! Hybrid beamforming design variables.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{is_psd, trace_re, CMat, CVec, C64};
use crate::model::{ArrayConfig, RxArchitecture};

/// Transmit analog precoder.
#[derive(Debug, Clone, PartialEq)]
pub enum TxAnalog {
    /// Unit-modulus phase matrix N_T × N_RF,T.
    Phases(CMat),
    /// Fully-digital transmitter (V = I of the given size).
    Identity(usize),
}

impl TxAnalog {
    pub fn matrix(&self) -> CMat {
        match self {
            TxAnalog::Phases(v) => v.clone(),
            TxAnalog::Identity(n) => CMat::identity(*n, *n),
        }
    }

    pub fn n_rf(&self) -> usize {
        match self {
            TxAnalog::Phases(v) => v.ncols(),
            TxAnalog::Identity(n) => *n,
        }
    }

    pub fn n_antennas(&self) -> usize {
        match self {
            TxAnalog::Phases(v) => v.nrows(),
            TxAnalog::Identity(n) => *n,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, TxAnalog::Identity(_))
    }
}

/// Receive analog combiner.
#[derive(Debug, Clone, PartialEq)]
pub enum RxCombiner {
    /// Partially-connected: `d` holds the nonzero entries of W^H block by block.
    Partial { d: CVec, n_rf: usize },
    /// Fully-connected DFT selection with 0-based column indices.
    Dft { indices: Vec<usize>, n_rx: usize },
    /// Fully-digital receiver.
    Identity(usize),
}

impl RxCombiner {
    pub fn all_ones(arrays: &ArrayConfig) -> Self {
        match arrays.rx_architecture {
            RxArchitecture::PartiallyConnected => RxCombiner::Partial {
                d: CVec::from_element(arrays.n_rx, C64::from(1.0)),
                n_rf: arrays.n_rf_rx,
            },
            RxArchitecture::FullyConnected => RxCombiner::Dft {
                indices: (0..arrays.n_rf_rx).collect(),
                n_rx: arrays.n_rx,
            },
            RxArchitecture::FullyDigital => RxCombiner::Identity(arrays.n_rx),
        }
    }

    pub fn n_rx(&self) -> usize {
        match self {
            RxCombiner::Partial { d, .. } => d.len(),
            RxCombiner::Dft { n_rx, .. } => *n_rx,
            RxCombiner::Identity(n) => *n,
        }
    }

    pub fn n_rf(&self) -> usize {
        match self {
            RxCombiner::Partial { n_rf, .. } => *n_rf,
            RxCombiner::Dft { indices, .. } => indices.len(),
            RxCombiner::Identity(n) => *n,
        }
    }

    /// Explicit N_R × N_RF,R matrix W.
    pub fn matrix(&self) -> CMat {
        match self {
            RxCombiner::Partial { d, n_rf } => {
                let m = d.len() / n_rf;
                let mut w = CMat::zeros(d.len(), *n_rf);
                for i in 0..*n_rf {
                    for k in 0..m {
                        w[(i * m + k, i)] = d[i * m + k].conj();
                    }
                }
                w
            }
            RxCombiner::Dft { indices, n_rx } => {
                let mut w = CMat::zeros(*n_rx, indices.len());
                for (col, &q) in indices.iter().enumerate() {
                    w.set_column(col, &dft_column(*n_rx, q));
                }
                w
            }
            RxCombiner::Identity(n) => CMat::identity(*n, *n),
        }
    }

    /// Scalar c with W^H W = c I (white effective noise scale).
    pub fn noise_scale(&self) -> f64 {
        match self {
            RxCombiner::Partial { d, n_rf } => (d.len() / n_rf) as f64,
            RxCombiner::Dft { n_rx, .. } => *n_rx as f64,
            RxCombiner::Identity(_) => 1.0,
        }
    }

    pub fn validate(&self, arrays: &ArrayConfig) -> Result<()> {
        let ok = match (self, arrays.rx_architecture) {
            (RxCombiner::Partial { d, n_rf }, RxArchitecture::PartiallyConnected) => {
                if d.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
                    return Err(Error::Invalid("receive phases must be unit-modulus".into()));
                }
                d.len() == arrays.n_rx && *n_rf == arrays.n_rf_rx
            }
            (RxCombiner::Dft { indices, n_rx }, RxArchitecture::FullyConnected) => {
                let mut s = indices.clone();
                s.sort_unstable();
                s.dedup();
                if s.len() != indices.len() || s.iter().any(|&q| q >= *n_rx) {
                    return Err(Error::Invalid("DFT indices must be distinct and < n_rx".into()));
                }
                *n_rx == arrays.n_rx && indices.len() == arrays.n_rf_rx
            }
            (RxCombiner::Identity(n), RxArchitecture::FullyDigital) => *n == arrays.n_rx,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("receive combiner does not match the array configuration".into()))
        }
    }
}

/// Column q of the unnormalized N-point DFT matrix: entries e^{-j2π q j / N}.
pub fn dft_column(n: usize, q: usize) -> CVec {
    CVec::from_fn(n, |j, _| {
        C64::from_polar(1.0, -2.0 * PI * ((q * j) % n) as f64 / n as f64)
    })
}

/// Full hybrid design: common analog matrices and per-subcarrier digital covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridDesign {
    pub v_rf: TxAnalog,
    pub r_bb: Vec<CMat>,
    pub rx: RxCombiner,
}

impl HybridDesign {
    /// All-ones analog matrices with the power split evenly over subcarriers and RF chains.
    pub fn all_ones(arrays: &ArrayConfig, subcarriers: usize, power: f64) -> Self {
        let v = CMat::from_element(arrays.n_tx, arrays.n_rf_tx, C64::from(1.0));
        let n = arrays.n_rf_tx;
        let scale = power / (subcarriers as f64 * (arrays.n_tx * n) as f64);
        HybridDesign {
            v_rf: TxAnalog::Phases(v),
            r_bb: vec![CMat::identity(n, n) * C64::from(scale); subcarriers],
            rx: RxCombiner::all_ones(arrays),
        }
    }

    /// Per-subcarrier transmit covariances V R_k V^H.
    pub fn tx_covariances(&self) -> Vec<CMat> {
        let v = self.v_rf.matrix();
        self.r_bb.iter().map(|r| &v * r * v.adjoint()).collect()
    }

    /// Σ_k V R_k V^H.
    pub fn tx_covariance_sum(&self) -> CMat {
        let n = self.v_rf.n_antennas();
        self.tx_covariances().into_iter().fold(CMat::zeros(n, n), |acc, x| acc + x)
    }

    pub fn power(&self) -> f64 {
        self.tx_covariances().iter().map(trace_re).sum()
    }

    pub fn validate(&self, arrays: &ArrayConfig, power: f64) -> Result<()> {
        match &self.v_rf {
            TxAnalog::Phases(v) => {
                if v.nrows() != arrays.n_tx || v.ncols() != arrays.n_rf_tx {
                    return Err(Error::Dimension("transmit analog matrix size".into()));
                }
                if v.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
                    return Err(Error::Invalid("transmit phases must be unit-modulus".into()));
                }
            }
            TxAnalog::Identity(n) => {
                if *n != arrays.n_tx {
                    return Err(Error::Dimension("identity precoder size".into()));
                }
            }
        }
        let n = self.v_rf.n_rf();
        for r in &self.r_bb {
            if r.shape() != (n, n) {
                return Err(Error::Dimension("digital covariance size".into()));
            }
            if !is_psd(r, 1e-10) {
                return Err(Error::NotPositiveDefinite("digital covariance is not PSD".into()));
            }
        }
        self.rx.validate(arrays)?;
        if self.power() > power + 1e-8 {
            return Err(Error::Invalid(format!(
                "design uses {} W of a {} W budget",
                self.power(),
                power
            )));
        }
        Ok(())
    }
}
