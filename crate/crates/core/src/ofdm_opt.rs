//! Wideband (MIMO-OFDM) ISAC design: common analog matrices, one digital
//! covariance per subcarrier, total power budget and average-rate target.

use crate::cvxkit::DigitalSolution;
use crate::design::{HybridDesign, TxAnalog};
use crate::error::{Error, Result};
use crate::isac_opt::{ao_p1_with, fpp_sca_core, isac_ao_model, optimal_rbb_multi, FppScaOptions, FppScaOutcome};
use crate::linalg::CMat;
use crate::model::Scenario;
use crate::pcrb::SensingModel;
use crate::sensing_opt::{ao_p0_with, AoOptions, AoReport};

/// Designs carry one digital covariance per subcarrier.
pub type OfdmDesign = HybridDesign;

/// PCRB with the observation term summed over subcarriers.
pub fn pcrb_ofdm_objective(scenario: &Scenario, design: &OfdmDesign) -> Result<f64> {
    if design.r_bb.len() != scenario.subcarriers {
        return Err(Error::Dimension(format!(
            "{} digital covariances for {} subcarriers",
            design.r_bb.len(),
            scenario.subcarriers
        )));
    }
    SensingModel::new(scenario)?.pcrb(design)
}

pub fn optimal_rbb_ofdm(
    a_tilde: &CMat,
    v_rf: &TxAnalog,
    h: &[CMat],
    power: f64,
    rate_target: f64,
    noise: f64,
) -> Result<DigitalSolution> {
    optimal_rbb_multi(a_tilde, v_rf, h, power, rate_target, noise)
}

pub fn fpp_sca_vrf_ofdm(
    scenario: &Scenario,
    a_tilde: &CMat,
    r_bb: &[CMat],
    v_init: &CMat,
    opts: &FppScaOptions,
) -> Result<FppScaOutcome> {
    if r_bb.len() != scenario.subcarriers {
        return Err(Error::Dimension("one digital covariance per subcarrier expected".into()));
    }
    if v_init.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
        return Err(Error::Invalid("initial analog matrix must be unit-modulus".into()));
    }
    fpp_sca_core(
        a_tilde,
        r_bb,
        scenario.channels(),
        scenario.noise_comm,
        scenario.power,
        scenario.rate_target,
        v_init,
        opts,
    )
}

pub fn ao_p2(scenario: &Scenario) -> Result<AoReport> {
    ao_p2_with(scenario, &AoOptions::default())
}

pub fn ao_p2_with(scenario: &Scenario, opts: &AoOptions) -> Result<AoReport> {
    if scenario.subcarriers == 1 {
        return ao_p1_with(scenario, opts);
    }
    if scenario.rate_target == 0.0 {
        return ao_p0_with(scenario, opts);
    }
    let model = SensingModel::new(scenario)?;
    isac_ao_model(scenario, &model, opts)
}
