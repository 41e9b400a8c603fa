//! Hybrid precoder: SVD analog stage, zero-forcing baseband stage and
//! per-slot artificial noise injected into the null space of the effective
//! channel.

use std::f64::consts::PI;

use log::debug;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{ChannelSet, Scenario};
use crate::linalg::{frob, frob_sq, hpd_inverse, identity, unit_phase, CMat, CVec};
use crate::rng;
use crate::{Error, Result};

/// Stream label for per-slot artificial-noise draws.
pub const AN_STREAM: u64 = 0xA1;

/// Relative singular-value gap below which the SVD ordering is reported as
/// near-degenerate.
const DEGENERATE_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalogMode {
    /// Unit-modulus phase-shifter network with `n_rf` RF chains.
    #[default]
    Hybrid,
    /// One RF chain per element (`F = I_N`).
    FullyDigital,
}

/// How the artificial-noise scale `ξ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiRule {
    /// Slot-independent bound that keeps every slot within the budget.
    #[default]
    Bound,
    /// Per-slot root of the power equation (uses the budget exactly).
    Exact,
    /// Fixed value.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogPrecoder {
    pub f: CMat,
}

impl AnalogPrecoder {
    pub fn identity(n: usize) -> Self {
        Self { f: identity(n) }
    }

    pub fn n_rf(&self) -> usize {
        self.f.ncols()
    }

    /// True for the fully-digital (identity) stage.
    pub fn is_identity(&self) -> bool {
        let n = self.f.nrows();
        self.f.is_square()
            && self.f.iter().enumerate().all(|(i, z)| *z == Complex64::new(if i % (n + 1) == 0 { 1.0 } else { 0.0 }, 0.0))
    }

    /// Largest deviation of an entry modulus from one.
    pub fn max_modulus_error(&self) -> f64 {
        self.f.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Orthonormal basis of the dominant left singular space of `h_u` (the right
/// singular vectors of `h_u^H`), ordered by descending singular value with
/// ties broken by index, completed deterministically to `k` columns.
fn dominant_basis(h_u: &CMat, k: usize) -> CMat {
    let n = h_u.nrows();
    let svd = h_u.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    for w in order.windows(2) {
        let (a, b) = (sv[w[0]], sv[w[1]]);
        if a > 0.0 && (a - b) / a < DEGENERATE_GAP {
            debug!("near-degenerate singular values {a:e} / {b:e}; ordering by column index");
        }
    }
    let rank_cols = order.len().min(k);
    let mut basis: Vec<CVec> = order[..rank_cols].iter().map(|&j| u.column(j).into_owned()).collect();

    // Null-space completion: Gram-Schmidt over the standard basis e_0, e_1, ...
    let mut j = 0;
    while basis.len() < k && j < n {
        let mut v = CVec::zeros(n);
        v[j] = Complex64::new(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&v);
                v.axpy(-c, b, Complex64::new(1.0, 0.0));
            }
        }
        let nv = v.norm();
        if nv > 1e-6 {
            basis.push(v.unscale(nv));
        }
        j += 1;
    }
    crate::geometry::stack_columns(&basis)
}

/// Unit-modulus analog precoder from the `n_rf` dominant singular vectors.
pub fn design_analog(h_u: &CMat, n_rf: usize) -> Result<AnalogPrecoder> {
    let n = h_u.nrows();
    if n_rf == 0 || n_rf > n {
        return Err(Error::RankDeficient(format!("n_rf = {n_rf} not in 1..={n}")));
    }
    for (j, col) in h_u.column_iter().enumerate() {
        if col.iter().all(|z| z.norm() == 0.0) {
            return Err(Error::RankDeficient(format!("channel column {j} is zero")));
        }
    }
    let d = dominant_basis(h_u, n_rf);
    Ok(AnalogPrecoder { f: d.map(unit_phase) })
}

/// `H_M = F^H H_U`.
pub fn effective_channel(f: &CMat, h_u: &CMat) -> CMat {
    f.adjoint() * h_u
}

/// `(H^H H)^{-1} H^H`.
pub fn pseudo_inverse(h_m: &CMat) -> Result<CMat> {
    let gram = h_m.adjoint() * h_m;
    Ok(hpd_inverse(&gram)? * h_m.adjoint())
}

/// `I - H H^†`.
pub fn null_projector(h_m: &CMat) -> Result<CMat> {
    let pinv = pseudo_inverse(h_m)?;
    Ok(identity(h_m.nrows()) - h_m * pinv)
}

pub fn gain_matrix(gains: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(gains.len(), gains.iter().map(|&b| Complex64::new(b, 0.0))))
}

/// `(H^†)^H B`.
pub fn static_zf(h_m: &CMat, gains: &[f64]) -> Result<CMat> {
    let pinv = pseudo_inverse(h_m)?;
    Ok(pinv.adjoint() * gain_matrix(gains))
}

/// Constant-modulus artificial noise with i.i.d. uniform phases.
pub fn draw_an<R: Rng + ?Sized>(n_rf: usize, m: usize, rng: &mut R) -> CMat {
    // column-major fill: entry (r, c) is drawn in order c * n_rf + r
    CMat::from_iterator(n_rf, m, (0..n_rf * m).map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI)))
}

/// Per-slot root of `||F W_s + ξ F P W_AN||_F^2 = P_t`.
pub fn xi_exact(f: &CMat, h_m: &CMat, gains: &[f64], w_an: &CMat, p_t: f64) -> Result<f64> {
    let fw_static = f * static_zf(h_m, gains)?;
    let fp_an = f * (null_projector(h_m)? * w_an);
    xi_root(&fw_static, &fp_an, p_t)
}

fn xi_root(fw_static: &CMat, fp_an: &CMat, p_t: f64) -> Result<f64> {
    let a = frob_sq(fp_an);
    let b = 2.0 * fw_static.zip_fold(fp_an, 0.0, |acc, s, x| acc + (s.conj() * x).re);
    let static_power = frob_sq(fw_static);
    let c = static_power - p_t;
    if c >= 0.0 {
        return Err(Error::Infeasible { p_t, static_power });
    }
    if a == 0.0 {
        // AN is invisible at the array output; any ξ satisfies the budget.
        return Ok(f64::INFINITY);
    }
    let disc = (b * b - 4.0 * a * c).sqrt();
    // same root, written to avoid cancellation when b > 0
    Ok(if b >= 0.0 { -2.0 * c / (b + disc) } else { (-b + disc) / (2.0 * a) })
}

/// Slot-independent `ξ` guaranteeing the budget for every AN draw.
pub fn xi_bound(f: &CMat, h_m: &CMat, gains: &[f64], p_t: f64) -> Result<f64> {
    let fw_static = f * static_zf(h_m, gains)?;
    xi_bound_from_static(frob(&fw_static), p_t, h_m.ncols(), f.nrows(), f.ncols())
}

fn xi_bound_from_static(static_norm: f64, p_t: f64, m: usize, n: usize, n_rf: usize) -> Result<f64> {
    let num = p_t.sqrt() - static_norm;
    if !(num > 0.0) {
        return Err(Error::Infeasible { p_t, static_power: static_norm * static_norm });
    }
    let m = m as f64;
    Ok(num / ((1.0 + m.sqrt()) * n_rf as f64 * (m * n as f64).sqrt()))
}

/// Immutable precoder design shared by every slot.
#[derive(Debug, Clone)]
pub struct PrecoderState {
    pub analog: AnalogPrecoder,
    pub h_m: CMat,
    pub pinv: CMat,
    pub w_static: CMat,
    pub p_null: CMat,
    pub gains: Vec<f64>,
    /// `ξ` of the slot-independent rules; for [`XiRule::Exact`] the bound
    /// value is stored here and each slot solves its own root.
    pub xi: f64,
    pub rule: XiRule,
    pub p_t: f64,
    /// `F W_static`, cached.
    pub fw_static: CMat,
    /// `F P_null`, cached.
    pub f_p_null: CMat,
}

impl PrecoderState {
    /// Designs the static part for user channels `h_u` and resolves `ξ`.
    pub fn design(h_u: &CMat, analog: AnalogPrecoder, gains: &[f64], p_t: f64, rule: XiRule) -> Result<Self> {
        let digital = analog.is_identity();
        let h_m = if digital { h_u.clone() } else { effective_channel(&analog.f, h_u) };
        let gram = h_m.adjoint() * &h_m;
        let gram_inv = hpd_inverse(&gram)?;
        let pinv = &gram_inv * h_m.adjoint();
        let p_null = identity(h_m.nrows()) - &h_m * &pinv;
        let w_static = pinv.adjoint() * gain_matrix(gains);
        let (fw_static, f_p_null) =
            if digital { (w_static.clone(), p_null.clone()) } else { (&analog.f * &w_static, &analog.f * &p_null) };
        let (m, n, n_rf) = (h_u.ncols(), analog.f.nrows(), analog.f.ncols());
        let xi = match rule {
            XiRule::Fixed(x) => x,
            XiRule::Bound | XiRule::Exact => xi_bound_from_static(frob(&fw_static), p_t, m, n, n_rf)?,
        };
        Ok(Self { analog, h_m, pinv, w_static, p_null, gains: gains.to_vec(), xi, rule, p_t, fw_static, f_p_null })
    }

    /// Full design (analog stage included) from a scenario and its channels.
    pub fn for_scenario(scenario: &Scenario, channels: &ChannelSet, rule: XiRule) -> Result<Self> {
        let analog = match scenario.analog {
            AnalogMode::Hybrid => design_analog(&channels.h_u, scenario.n_rf)?,
            AnalogMode::FullyDigital => AnalogPrecoder::identity(scenario.geometry.n_elements()),
        };
        Self::design(&channels.h_u, analog, &scenario.symbol_gains, scenario.transmit_power, rule)
    }

    pub fn f(&self) -> &CMat {
        &self.analog.f
    }

    pub fn n_rf(&self) -> usize {
        self.h_m.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h_m.ncols()
    }

    pub fn static_power(&self) -> f64 {
        frob_sq(&self.fw_static)
    }

    /// Slot-averaged transmit power: `||F W_s||² + M ξ² ||F P||²` for a
    /// slot-invariant `ξ`, `P_t` under the exact rule.
    pub fn mean_power(&self) -> f64 {
        match self.rule {
            XiRule::Exact => self.p_t,
            _ => self.static_power() + self.n_users() as f64 * self.xi * self.xi * frob_sq(&self.f_p_null),
        }
    }

    /// Copy with new symbol gains, budget and rule; the channel-dependent
    /// parts are reused since `W_static` scales column-wise with the gains.
    pub fn with_gains(&self, gains: &[f64], p_t: f64, rule: XiRule) -> Result<Self> {
        if gains.len() != self.n_users() {
            return Err(Error::Domain(format!("expected {} gains, got {}", self.n_users(), gains.len())));
        }
        let mut w_static = self.w_static.clone();
        let mut fw_static = self.fw_static.clone();
        for (m, g) in gains.iter().enumerate() {
            let r = g / self.gains[m];
            w_static.column_mut(m).scale_mut(r);
            fw_static.column_mut(m).scale_mut(r);
        }
        let (n, n_rf) = (self.analog.f.nrows(), self.n_rf());
        let xi = match rule {
            XiRule::Fixed(x) => x,
            XiRule::Bound | XiRule::Exact => xi_bound_from_static(frob(&fw_static), p_t, self.n_users(), n, n_rf)?,
        };
        Ok(Self { w_static, fw_static, gains: gains.to_vec(), xi, rule, p_t, ..self.clone() })
    }

    /// `(1+sqrt M) N_RF sqrt(MN)`, the denominator of the slot-independent rule.
    pub fn bound_denominator(&self) -> f64 {
        let m = self.n_users() as f64;
        (1.0 + m.sqrt()) * self.n_rf() as f64 * (m * self.analog.f.nrows() as f64).sqrt()
    }

    /// Copy with a different `ξ`.
    pub fn with_xi(&self, xi: f64) -> Self {
        Self { xi, rule: XiRule::Fixed(xi), ..self.clone() }
    }

    /// Exact per-slot `ξ` for a given AN draw.
    pub fn xi_exact_for(&self, w_an: &CMat) -> Result<f64> {
        xi_root(&self.fw_static, &(&self.f_p_null * w_an), self.p_t)
    }

    /// `W(k) = W_static + ξ P_null W_AN`.
    pub fn slot_precoder(&self, w_an: &CMat, slot: usize) -> Result<SlotPrecoder> {
        let xi = match self.rule {
            XiRule::Exact => self.xi_exact_for(w_an)?,
            _ => self.xi,
        };
        Ok(self.slot_with_xi(w_an, xi, slot))
    }

    pub fn slot_with_xi(&self, w_an: &CMat, xi: f64, slot: usize) -> SlotPrecoder {
        let w = &self.w_static + (&self.p_null * w_an).scale(xi);
        SlotPrecoder { w, slot, xi }
    }

    /// AN draw for `slot` under the root `seed`.
    pub fn draw_slot_an(&self, seed: u64, slot: usize) -> CMat {
        let mut r = rng::stream(seed, &[AN_STREAM, slot as u64]);
        draw_an(self.n_rf(), self.n_users(), &mut r)
    }

    /// `||H_M^H W - B_M||_F / ||B_M||_F`.
    pub fn zf_residual(&self, w: &CMat) -> f64 {
        let b = gain_matrix(&self.gains);
        frob(&(self.h_m.adjoint() * w - &b)) / frob(&b)
    }
}

/// Baseband precoder of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPrecoder {
    pub w: CMat,
    pub slot: usize,
    pub xi: f64,
}

impl SlotPrecoder {
    /// `||F W(k)||_F²`.
    pub fn transmit_power(&self, f: &CMat) -> f64 {
        frob_sq(&(f * &self.w))
    }
}

/// Analog design once, `ξ` once, fresh artificial noise every slot.
pub fn run_slots(scenario: &Scenario, slots: usize, seed: u64, rule: XiRule) -> Result<Vec<SlotPrecoder>> {
    let channels = ChannelSet::los(scenario)?;
    let state = PrecoderState::for_scenario(scenario, &channels, rule)?;
    (0..slots).map(|k| state.slot_precoder(&state.draw_slot_an(seed, k), k)).collect()
}

/// `β = σ sqrt(SINR)` for a target user SINR in dB.
pub fn gain_for_sinr_db(noise_power: f64, sinr_db: f64) -> f64 {
    (noise_power * 10f64.powf(sinr_db / 10.0)).sqrt()
}
