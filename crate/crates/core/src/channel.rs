//! Optical ISL link budget, thermal noise, achievable rate, per-frame
//! transmission energy and pointing-error outage.
//!
//! Distances are taken in kilometres and converted to metres for the
//! free-space loss; every other quantity is SI.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{0} is outside the function's domain")]
    Domain(String),
    #[error("link rate is zero; edge is infeasible")]
    InfeasibleEdge,
    #[error("invalid link parameter `{field}`: {message}")]
    InvalidParam { field: &'static str, message: String },
}

/// Statistical law of the pointing error `θ0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointingModel {
    /// Half-normal `|N(0, σ_p²)|`: the law for which the erf closed-form outage
    /// is exact.
    #[default]
    HalfNormal,
    /// Rayleigh with scale `σ_p`; outage becomes `Γ0^(1/(2 G0 σ_p²))`.
    Rayleigh,
}

/// Transceiver and noise constants of an optical ISL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams<T> {
    /// Optical efficiency of the transceiver chain.
    pub eta_s: T,
    /// Full transmit divergence angle, rad.
    pub theta_t: T,
    /// Receiver telescope diameter, m.
    pub d_r_m: T,
    /// Nominal pointing error used in the energy budget, rad.
    pub theta_0: T,
    /// 3-dB beamwidth, rad.
    pub theta_3db: T,
    /// Laser carrier frequency, Hz.
    pub f_c_hz: T,
    /// Bandwidth as a fraction of the carrier.
    pub bandwidth_fraction: T,
    /// Solar brightness temperature, K.
    pub t_sun_k: T,
    /// System noise temperature, K.
    pub t_sys_k: T,
    /// Cosmic background temperature, K.
    pub t_cmb_k: T,
    /// Boltzmann constant, J/K.
    pub k_b: T,
    /// Scale of the pointing error distribution, rad.
    pub sigma_p: T,
    pub snr_th_db: T,
    /// Model payload per round, bits.
    pub payload_bits: T,
    pub frames_per_slot: u32,
    /// Transmit power draw bounds, W.
    pub p_t_min_w: T,
    pub p_t_max_w: T,
    pub pointing_model: PointingModel,
}

impl<T: Real> Default for LinkParams<T> {
    fn default() -> Self {
        Self {
            eta_s: T::lit(0.8),
            theta_t: T::lit(0.1),
            d_r_m: T::lit(0.006),
            theta_0: T::lit(0.01),
            theta_3db: T::lit(0.1),
            f_c_hz: T::lit(193e12),
            bandwidth_fraction: T::lit(0.02),
            t_sun_k: T::lit(6000.0),
            t_sys_k: T::lit(1000.0),
            t_cmb_k: T::lit(2.725),
            k_b: T::lit(1.38e-23),
            sigma_p: T::lit(0.05),
            snr_th_db: T::lit(-110.0),
            payload_bits: T::lit(DEFAULT_PAYLOAD_BITS),
            frames_per_slot: 25,
            p_t_min_w: T::lit(0.0316),
            p_t_max_w: T::lit(5.0),
            pointing_model: PointingModel::HalfNormal,
        }
    }
}

/// Default model payload per round in bits.
pub const DEFAULT_PAYLOAD_BITS: f64 = 4000.0;

impl<T: Real> LinkParams<T> {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive: [(&'static str, T); 14] = [
            ("eta_s", self.eta_s),
            ("theta_t", self.theta_t),
            ("d_r_m", self.d_r_m),
            ("theta_3db", self.theta_3db),
            ("f_c_hz", self.f_c_hz),
            ("bandwidth_fraction", self.bandwidth_fraction),
            ("t_sun_k", self.t_sun_k),
            ("t_sys_k", self.t_sys_k),
            ("t_cmb_k", self.t_cmb_k),
            ("k_b", self.k_b),
            ("sigma_p", self.sigma_p),
            ("payload_bits", self.payload_bits),
            ("p_t_min_w", self.p_t_min_w),
            ("p_t_max_w", self.p_t_max_w),
        ];
        for (field, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ChannelError::InvalidParam {
                    field,
                    message: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        if !self.snr_th_db.is_finite() {
            return Err(ChannelError::InvalidParam {
                field: "snr_th_db",
                message: "must be finite".into(),
            });
        }
        if self.eta_s > T::one() {
            return Err(ChannelError::InvalidParam {
                field: "eta_s",
                message: format!("must lie in (0, 1], got {}", self.eta_s),
            });
        }
        if !(self.theta_0 >= T::zero()) {
            return Err(ChannelError::InvalidParam {
                field: "theta_0",
                message: format!("must be >= 0, got {}", self.theta_0),
            });
        }
        if self.frames_per_slot == 0 {
            return Err(ChannelError::InvalidParam {
                field: "frames_per_slot",
                message: "must be at least 1".into(),
            });
        }
        if self.p_t_min_w > self.p_t_max_w {
            return Err(ChannelError::InvalidParam {
                field: "p_t_min_w",
                message: format!("exceeds p_t_max_w ({})", self.p_t_max_w),
            });
        }
        Ok(())
    }

    /// `λ = c / f_c`, m.
    pub fn wavelength_m(&self) -> T {
        T::lit(SPEED_OF_LIGHT_M_S) / self.f_c_hz
    }

    pub fn bandwidth_hz(&self) -> T {
        self.bandwidth_fraction * self.f_c_hz
    }

    /// `G0 = 4 ln 2 / θ_3dB²`.
    pub fn g0(&self) -> T {
        T::lit(4.0 * std::f64::consts::LN_2) / (self.theta_3db * self.theta_3db)
    }

    /// `G_T = 16 / Θ_T²`.
    pub fn tx_gain(&self) -> T {
        T::lit(16.0) / (self.theta_t * self.theta_t)
    }

    /// `G_R = (π D_R / λ)²`.
    pub fn rx_gain(&self) -> T {
        let g = T::lit(PI) * self.d_r_m / self.wavelength_m();
        g * g
    }

    /// `exp(-G0 θ²)` for a pointing error `θ`.
    pub fn pointing_loss(&self, theta: T) -> T {
        (-self.g0() * theta * theta).exp()
    }

    /// `(λ / 4π d)²`.
    pub fn path_loss(&self, d_km: T) -> T {
        let g = self.wavelength_m() / (T::lit(4.0 * PI) * d_km * T::lit(1000.0));
        g * g
    }

    /// Exponent `1 / (2 G0 σ_p²)` of the pointing-loss law.
    pub fn pointing_exponent(&self) -> T {
        T::one() / (T::lit(2.0) * self.g0() * self.sigma_p * self.sigma_p)
    }

    pub fn snr_threshold_linear(&self) -> T {
        T::lit(10.0).powf(self.snr_th_db / T::lit(10.0))
    }
}

/// `P_R = P_T η_S G_T G_R L_PL L_PS` at the nominal pointing error.
pub fn received_power<T: Real>(p_t: T, d_km: T, params: &LinkParams<T>) -> Result<T, ChannelError> {
    if !(d_km > T::zero()) {
        return Err(ChannelError::Domain(format!("distance {d_km} km")));
    }
    Ok(p_t
        * params.eta_s
        * params.tx_gain()
        * params.rx_gain()
        * params.pointing_loss(params.theta_0)
        * params.path_loss(d_km))
}

/// `σ² = k_b B (T_s + T_0 + T_CMB)`.
pub fn noise_power<T: Real>(params: &LinkParams<T>) -> T {
    params.k_b * params.bandwidth_hz() * (params.t_sun_k + params.t_sys_k + params.t_cmb_k)
}

/// Shannon rate `B log2(1 + P_R/σ²)`, bit/s.
pub fn achievable_rate<T: Real>(p_r: T, sigma2: T, params: &LinkParams<T>) -> T {
    // ln_1p keeps precision at the -90 dB SNRs typical of these links
    params.bandwidth_hz() * (p_r / sigma2).ln_1p() / T::lit(std::f64::consts::LN_2)
}

/// Per-frame energy `s P_T / (U γ)`, J.
pub fn frame_energy<T: Real>(p_t: T, rate: T, params: &LinkParams<T>) -> Result<T, ChannelError> {
    if !(rate > T::zero()) {
        return Err(ChannelError::InfeasibleEdge);
    }
    let u = T::from_u32(params.frames_per_slot).unwrap();
    Ok(params.payload_bits * p_t / (u * rate))
}

/// Density of the pointing loss `L_PL` on (0, 1), consistent with
/// [`outage_from_threshold`] for the configured pointing model.
///
/// Half-normal: `ϑ^(a-1) / (σ_p √(2π G0) √(-ln ϑ))` with `a = 1/(2 G0 σ_p²)`.
/// Rayleigh: `a ϑ^(a-1)`.
pub fn pointing_loss_pdf<T: Real>(theta: T, params: &LinkParams<T>) -> Result<T, ChannelError> {
    if !(theta > T::zero() && theta < T::one()) {
        return Err(ChannelError::Domain(format!("pointing loss {theta}")));
    }
    let a = params.pointing_exponent();
    let power = theta.powf(a - T::one());
    Ok(match params.pointing_model {
        PointingModel::HalfNormal => {
            let scale = params.sigma_p * (T::lit(2.0 * PI) * params.g0()).sqrt();
            power / (scale * (-theta.ln()).sqrt())
        }
        PointingModel::Rayleigh => a * power,
    })
}

/// `Γ0 = σ² SNR_th / (P_T η_S G_T G_R L_PS)`: the pointing loss below which the
/// link is in outage.
pub fn outage_threshold<T: Real>(p_t: T, d_km: T, params: &LinkParams<T>) -> Result<T, ChannelError> {
    if !(d_km > T::zero()) {
        return Err(ChannelError::Domain(format!("distance {d_km} km")));
    }
    let gain = p_t * params.eta_s * params.tx_gain() * params.rx_gain() * params.path_loss(d_km);
    Ok(noise_power(params) * params.snr_threshold_linear() / gain)
}

/// `P{L_PL < Γ0}` with the three-case clamp.
pub fn outage_from_threshold<T: Real>(gamma0: T, params: &LinkParams<T>) -> T {
    if gamma0 >= T::one() {
        return T::one();
    }
    if !(gamma0 > T::zero()) {
        return T::zero();
    }
    let v = match params.pointing_model {
        PointingModel::HalfNormal => {
            let g = (-gamma0.ln() / (T::lit(2.0) * params.g0() * params.sigma_p * params.sigma_p)).sqrt();
            T::one() - g.erf()
        }
        PointingModel::Rayleigh => gamma0.powf(params.pointing_exponent()),
    };
    v.max(T::zero()).min(T::one())
}

pub fn outage_probability<T: Real>(p_t: T, d_km: T, params: &LinkParams<T>) -> Result<T, ChannelError> {
    Ok(outage_from_threshold(outage_threshold(p_t, d_km, params)?, params))
}

/// Draws a pointing error from the configured law given a uniform in [0, 1).
pub fn sample_pointing_error<T: Real>(uniform: f64, params: &LinkParams<T>) -> T {
    let sigma = params.sigma_p;
    // 1 - u lies in (0, 1]
    let tail = 1.0 - uniform;
    match params.pointing_model {
        PointingModel::Rayleigh => sigma * T::lit((-2.0 * tail.ln()).sqrt()),
        PointingModel::HalfNormal => sigma * T::lit(std::f64::consts::SQRT_2 * erfc_inv(tail)),
    }
}

/// Number of attempts until a pointing draw clears `gamma0`, or `None` when
/// `max_attempts` all fail. Each attempt fails with the outage probability of
/// `gamma0`, so the count is geometric.
pub fn attempts_until_success<T: Real, R: rand::Rng + ?Sized>(
    gamma0: T,
    params: &LinkParams<T>,
    max_attempts: u32,
    rng: &mut R,
) -> Option<u32> {
    (1..=max_attempts).find(|_| params.pointing_loss(sample_pointing_error(rng.gen::<f64>(), params)) >= gamma0)
}

/// Inverse complementary error function on (0, 2), via Newton on `libm::erfc`.
fn erfc_inv(y: f64) -> f64 {
    if y >= 1.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return f64::INFINITY;
    }
    // asymptotic start for small y, zero otherwise
    let mut x = if y < 0.1 { (-(y * (PI.sqrt())).ln()).sqrt() } else { 0.5 };
    for _ in 0..60 {
        let err = libm::erfc(x) - y;
        let slope = -2.0 / PI.sqrt() * (-x * x).exp();
        if slope == 0.0 {
            break;
        }
        let step = err / slope;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Gamma fit `(α, β)` of the shadowed-Rician GSL gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaApprox<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> GammaApprox<T> {
    pub fn mean(&self) -> T {
        self.alpha * self.beta
    }
}

/// Moment-matched Gamma approximation of the shadowed-Rician gain.
pub fn gsl_gamma_approx<T: Real>(m: T, b0: T, omega: T) -> Result<GammaApprox<T>, ChannelError> {
    if !(m > T::zero() && b0 > T::zero() && omega >= T::zero()) {
        return Err(ChannelError::Domain(format!("(m, b0, Ω) = ({m}, {b0}, {omega})")));
    }
    let four = T::lit(4.0);
    let two_b0_omega = T::lit(2.0) * b0 + omega;
    let denom = four * m * b0 * b0 + four * m * b0 * omega + omega * omega;
    Ok(GammaApprox {
        alpha: m * two_b0_omega * two_b0_omega / denom,
        beta: denom / (m * two_b0_omega),
    })
}

/// Derived quantities of one directed ISL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkMetrics<T> {
    pub distance_km: T,
    pub rx_power_w: T,
    pub snr_linear: T,
    pub rate_bps: T,
    pub energy_j: T,
    pub outage_prob: T,
}

pub fn link_metrics<T: Real>(p_t: T, d_km: T, params: &LinkParams<T>) -> Result<LinkMetrics<T>, ChannelError> {
    let rx_power_w = received_power(p_t, d_km, params)?;
    let sigma2 = noise_power(params);
    let rate_bps = achievable_rate(rx_power_w, sigma2, params);
    Ok(LinkMetrics {
        distance_km: d_km,
        rx_power_w,
        snr_linear: rx_power_w / sigma2,
        rate_bps,
        energy_j: frame_energy(p_t, rate_bps, params)?,
        outage_prob: outage_probability(p_t, d_km, params)?,
    })
}

/// Writes `d_km,p_t_w,rx_power_w,snr_db,rate_bps,energy_j,outage_prob` rows.
pub fn write_link_sweep_csv<T: Real, W: Write>(out: W, rows: &[(T, LinkMetrics<T>)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "d_km",
        "p_t_w",
        "rx_power_w",
        "snr_db",
        "rate_bps",
        "energy_j",
        "outage_prob",
    ])?;
    for (p_t, m) in rows {
        let snr_db = T::lit(10.0) * m.snr_linear.log10();
        w.write_record(&[
            m.distance_km.to_string(),
            p_t.to_string(),
            format!("{:e}", m.rx_power_w.as_f64()),
            snr_db.to_string(),
            m.rate_bps.to_string(),
            format!("{:e}", m.energy_j.as_f64()),
            m.outage_prob.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
