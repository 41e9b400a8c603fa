//! Closed-form performance analysis: average SINR, rates, secrecy capacity,
//! eavesdropper SINR statistics, secrecy outage and secrecy maps.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{los_channel, Position3, Scenario};
use crate::linalg::{frob, norm_sq, CMat, CVec};
use crate::numerics::{dncf_scaled_pdf, gauss_hermite_normal, gauss_laguerre_chi2, integrate_semi_infinite, SeriesControl};
use crate::precoding::PrecoderState;
use crate::{Error, Result};

/// Relative threshold on `||u_q||` below which the eavesdropper is treated as
/// lying in the users' span.
pub const DEGENERATE_LEAKAGE: f64 = 1e-12;

/// Default relative tolerance of the outage integral.
pub const OUTAGE_TOL: f64 = 1e-8;
/// Above this total non-centrality the outage is evaluated from the
/// Gaussian representation of the eavesdropper SINR instead of the series.
pub const LARGE_NONCENTRALITY: f64 = 2000.0;

/// `E[W(k) g_m g_m^H W(k)^H] = ξ² P_null + w_m w_m^H`.
pub fn avg_outer_product(state: &PrecoderState, m: usize) -> CMat {
    let w = state.w_static.column(m);
    state.p_null.scale(state.xi * state.xi) + &w * w.adjoint()
}

/// Expected powers making up an average SINR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinrTerms {
    /// Expected power of stream `m` (static part plus its AN).
    pub signal: f64,
    /// Expected power of the other streams (static parts plus their AN).
    pub interference: f64,
    pub noise: f64,
}

impl SinrTerms {
    pub fn sinr(&self) -> f64 {
        self.signal / (self.interference + self.noise)
    }
}

/// Static leakage `v_p = h^H F W_static e_p` for every stream.
pub fn static_leakage(h: &CVec, state: &PrecoderState) -> Vec<Complex64> {
    state.fw_static.column_iter().map(|c| h.dotc(&c)).collect()
}

/// `u` with `u^H = h^H F P_null`.
pub fn null_leakage(h: &CVec, state: &PrecoderState) -> CVec {
    state.f_p_null.ad_mul(h)
}

/// Line-of-sight average SINR terms at a position with channel `h`.
pub fn avg_sinr_los_terms(h: &CVec, state: &PrecoderState, m: usize, noise_power: f64) -> SinrTerms {
    let an = state.xi * state.xi * norm_sq(&null_leakage(h, state));
    let v = static_leakage(h, state);
    let others: f64 = v.iter().enumerate().filter(|(p, _)| *p != m).map(|(_, z)| z.norm_sqr()).sum();
    let n_other = (state.n_users() - 1) as f64;
    SinrTerms { signal: an + v[m].norm_sqr(), interference: n_other * an + others, noise: noise_power }
}

/// Line-of-sight average SINR (ratio of expected powers).
pub fn avg_sinr_los(h: &CVec, state: &PrecoderState, m: usize, noise_power: f64) -> f64 {
    avg_sinr_los_terms(h, state, m, noise_power).sinr()
}

/// Multi-path average SINR terms for `h ~ CN(h_bar, R)`.
pub fn avg_sinr_multipath_terms(r: &CMat, h_bar: &CVec, state: &PrecoderState, m: usize, noise_power: f64) -> SinrTerms {
    let f = state.f();
    let k = f.adjoint() * r * f;
    let xi2 = state.xi * state.xi;
    let an_scatter = xi2 * (&k * &state.p_null).trace().re;
    let stream = |p: usize| {
        let w = state.w_static.column(p);
        (w.adjoint() * &k * w)[(0, 0)].re
    };
    let los = avg_sinr_los_terms(h_bar, state, m, noise_power);
    let n_other = (state.n_users() - 1) as f64;
    let others: f64 = (0..state.n_users()).filter(|&p| p != m).map(stream).sum();
    SinrTerms {
        signal: los.signal + an_scatter + stream(m),
        interference: los.interference + n_other * an_scatter + others,
        noise: noise_power,
    }
}

pub fn avg_sinr_multipath(r: &CMat, h_bar: &CVec, state: &PrecoderState, m: usize, noise_power: f64) -> f64 {
    avg_sinr_multipath_terms(r, h_bar, state, m, noise_power).sinr()
}

/// Jensen upper bound on the average achievable rate.
pub fn rate_upper(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// `max(log2(1+SINR_u) - log2(1+SINR_e), 0)`.
pub fn secrecy_capacity_approx(user_sinr: f64, eve_sinr: f64) -> f64 {
    (rate_upper(user_sinr) - rate_upper(eve_sinr)).max(0.0)
}

/// Smallest `ξ` whose line-of-sight secrecy-capacity approximation reaches
/// `delta` against an eavesdropper with channel `h_eve`.
///
/// The monotonicity condition `(M-1)|v_m|² > Σ_{p≠m}|v_p|² + σ²` is checked
/// rather than assumed.
pub fn xi_for_target_secrecy(delta: f64, h_eve: &CVec, state: &PrecoderState, m: usize, noise_power: f64) -> Result<f64> {
    let v = static_leakage(h_eve, state);
    let own = v[m].norm_sqr();
    let interference: f64 =
        v.iter().enumerate().filter(|(p, _)| *p != m).map(|(_, z)| z.norm_sqr()).sum::<f64>() + noise_power;
    let n_other = (state.n_users() - 1) as f64;
    if !(n_other * own > interference) {
        return Err(Error::ConditionViolated(format!(
            "(M-1)|v_m|^2 = {:.3e} <= interference plus noise {:.3e}",
            n_other * own,
            interference
        )));
    }
    let user_sinr = state.gains[m].powi(2) / noise_power;
    let k = 2f64.powf(-delta) * (1.0 + user_sinr) - 1.0;
    if k < 0.0 {
        return Err(Error::Infeasible { p_t: delta, static_power: rate_upper(user_sinr) });
    }
    let an = norm_sq(&null_leakage(h_eve, state));
    let num = own - interference * k;
    if num <= 0.0 {
        return Ok(0.0);
    }
    let den = an * (n_other * k - 1.0);
    if !(den > 0.0) {
        return Err(Error::Infeasible { p_t: delta, static_power: rate_upper(user_sinr) });
    }
    Ok((num / den).sqrt())
}

/// Parameters of the eavesdropper SINR distribution for stream `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EveSinrParams {
    pub u: CVec,
    pub v: Vec<Complex64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub stream: usize,
}

/// Non-centralities of the noiseless eavesdropper's SINR.
pub fn eve_sinr_params(h_eve: &CVec, state: &PrecoderState, m: usize) -> Result<EveSinrParams> {
    if !(state.xi > 0.0) {
        return Err(Error::Domain(format!("eavesdropper statistics need xi > 0, got {}", state.xi)));
    }
    let u = null_leakage(h_eve, state);
    let u2 = norm_sq(&u);
    let scale = h_eve.norm() * frob(state.f());
    if u2.sqrt() <= DEGENERATE_LEAKAGE * scale {
        return Err(Error::DegenerateNullSpace { leakage: u2.sqrt() / scale });
    }
    let v = static_leakage(h_eve, state);
    let denom = state.xi * state.xi * u2;
    let lambda1 = 2.0 * v[m].norm_sqr() / denom;
    let lambda2 = 2.0 * v.iter().enumerate().filter(|(p, _)| *p != m).map(|(_, z)| z.norm_sqr()).sum::<f64>() / denom;
    Ok(EveSinrParams { u, v, lambda1, lambda2, stream: m })
}

/// Density of the instantaneous user SINR `β² / |n|²`.
pub fn user_sinr_pdf(y: f64, beta: f64, sigma: f64) -> Result<f64> {
    if !(y > 0.0 && beta > 0.0 && sigma > 0.0) {
        return Err(Error::Domain(format!("user SINR density needs y, beta, sigma > 0 (got {y}, {beta}, {sigma})")));
    }
    let c = beta * beta / (sigma * sigma);
    Ok(c / (y * y) * (-c / y).exp())
}

/// Secrecy outage probability against a noiseless eavesdropper.
pub fn secrecy_outage(rate: f64, beta: f64, sigma: f64, params: &EveSinrParams, m: usize, ctrl: &SeriesControl) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(Error::Domain(format!("target rate must be >= 0, got {rate}")));
    }
    let c = beta * beta / (sigma * sigma);
    let scale = 2f64.powf(rate);
    if params.lambda1 + params.lambda2 > LARGE_NONCENTRALITY {
        return Ok(outage_gaussian(c, scale, params, m));
    }
    let m1 = (m - 1) as f64;
    let series = integrate_semi_infinite(
        |s| {
            let y = scale * (s / m1 + 1.0) - 1.0;
            if y <= 0.0 {
                return Ok(0.0);
            }
            let cdf = (-c / y).exp();
            if cdf == 0.0 {
                return Ok(0.0);
            }
            Ok(cdf * dncf_scaled_pdf(s, params.lambda1, params.lambda2, m, ctrl)?)
        },
        OUTAGE_TOL,
    );
    match series {
        Ok(p) => Ok(p.clamp(0.0, 1.0)),
        Err(Error::SeriesNotConverged { .. }) => Ok(outage_gaussian(c, scale, params, m)),
        Err(e) => Err(e),
    }
}

/// Outage from `SINR = ((√λ1 + a)² + V) / ((√λ2 + c)² + W)` with `a, c`
/// standard normal, `V ~ χ²_1` and `W ~ χ²_{2M-3}`, by product Gauss rules.
pub fn outage_gaussian(snr: f64, scale: f64, params: &EveSinrParams, m: usize) -> f64 {
    let (xn, wn) = gauss_hermite_normal(32);
    let (xv, wv) = gauss_laguerre_chi2(16, 1.0);
    let (xw, ww) = gauss_laguerre_chi2(16, (2 * m - 3) as f64);
    let (n1, n2) = (params.lambda1.sqrt(), params.lambda2.sqrt());
    let den: Vec<(f64, f64)> = xn
        .iter()
        .zip(&wn)
        .flat_map(|(c, pc)| xw.iter().zip(&ww).map(move |(w, pw)| ((n2 + c).powi(2) + w, pc * pw)))
        .collect();
    let mut total = 0.0;
    for (a, pa) in xn.iter().zip(&wn) {
        for (v, pv) in xv.iter().zip(&wv) {
            let num = (n1 + a).powi(2) + v;
            let mut inner = 0.0;
            for (d, pd) in &den {
                let y = scale * (1.0 + num / d) - 1.0;
                if y > 0.0 {
                    inner += pd * (-snr / y).exp();
                }
            }
            total += pa * pv * inner;
        }
    }
    total.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    /// Eavesdropper channel inside the users' span; outage set to one.
    Degenerate,
    /// Evaluation failed; outage reported as NaN and excluded from the zone.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapCell {
    pub position: Position3,
    pub outage: f64,
    pub status: CellStatus,
    pub in_zone: bool,
}

/// Secrecy outage of stream `m` for a hypothetical eavesdropper at every grid
/// point; the zone mask marks `outage <= epsilon`.
pub fn secrecy_map(
    scenario: &Scenario,
    state: &PrecoderState,
    m: usize,
    grid: &[Position3],
    rate: f64,
    epsilon: f64,
    ctrl: &SeriesControl,
) -> Vec<MapCell> {
    let beta = state.gains[m];
    let sigma = scenario.noise_sd();
    let m_users = state.n_users();
    grid.par_iter()
        .map(|pos| {
            let eval = || -> Result<f64> {
                let h = los_channel(&scenario.geometry, pos)?;
                let params = eve_sinr_params(&h, state, m)?;
                secrecy_outage(rate, beta, sigma, &params, m_users, ctrl)
            };
            let (outage, status) = match eval() {
                Ok(p) => (p, CellStatus::Ok),
                Err(Error::DegenerateNullSpace { .. }) => (1.0, CellStatus::Degenerate),
                Err(e) => (f64::NAN, CellStatus::Failed(e.to_string())),
            };
            MapCell { position: *pos, outage, status, in_zone: outage <= epsilon }
        })
        .collect()
}
