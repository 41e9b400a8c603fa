//! Link-level simulation: symbols, received samples, detection and the
//! BER / secrecy-rate / outage estimators.
//!
//! Every random quantity comes from a stream derived from the root seed and a
//! fixed label (slot, trial, position index), so results do not depend on the
//! number of worker threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{element_positions, los_channel, path_amplitude, ArrayGeometry, Position3};
use crate::linalg::{CMat, CVec};
use crate::precoding::{PrecoderState, SlotPrecoder, XiRule};
use crate::rng::stream;
use crate::{Error, Result};

const SYMBOL_STREAM: u64 = 0x5B;
const NOISE_STREAM: u64 = 0x40;
const EVE_NOISE_STREAM: u64 = 0x41;

/// Slots handled by one deterministic reduction block.
const BLOCK: usize = 4096;

/// BER cells with fewer errors than this are flagged low-confidence.
pub const LOW_CONFIDENCE_ERRORS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulationKind {
    Psk,
    Qam,
}

/// Gray-labelled constellation with unit average energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModulationScheme {
    pub kind: ModulationKind,
    pub order: usize,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl ModulationScheme {
    pub const fn psk(order: usize) -> Self {
        Self { kind: ModulationKind::Psk, order }
    }

    pub const fn qam(order: usize) -> Self {
        Self { kind: ModulationKind::Qam, order }
    }

    pub const fn qpsk() -> Self {
        Self::psk(4)
    }

    /// Violated invariants; empty when valid. QAM orders must be even powers
    /// of two (square constellations).
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.order < 2 || !self.order.is_power_of_two() {
            v.push(format!("modulation order {} must be a power of two >= 2", self.order));
        } else if self.kind == ModulationKind::Qam && self.bits() % 2 != 0 {
            v.push(format!("QAM order {} must be a square constellation (4, 16, 64, ...)", self.order));
        }
        v
    }

    pub fn bits(&self) -> u32 {
        self.order.trailing_zeros()
    }

    /// Constellation indexed by symbol label.
    pub fn constellation(&self) -> Vec<Complex64> {
        let mut pts = vec![Complex64::new(0.0, 0.0); self.order];
        match self.kind {
            ModulationKind::Psk => {
                let offset = if self.order == 4 { PI / 4.0 } else { 0.0 };
                for i in 0..self.order {
                    pts[gray(i)] = Complex64::from_polar(1.0, offset + 2.0 * PI * i as f64 / self.order as f64);
                }
            }
            ModulationKind::Qam => {
                let half = self.bits() / 2;
                let side = 1usize << half;
                let norm = (2.0 * (self.order as f64 - 1.0) / 3.0).sqrt();
                for ix in 0..side {
                    for iy in 0..side {
                        let label = (gray(ix) << half) | gray(iy);
                        let re = 2.0 * ix as f64 - (side as f64 - 1.0);
                        let im = 2.0 * iy as f64 - (side as f64 - 1.0);
                        pts[label] = Complex64::new(re, im) / norm;
                    }
                }
            }
        }
        pts
    }

    /// Label of the constellation point nearest to `z`.
    pub fn decide(&self, constellation: &[Complex64], z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in constellation.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Labels and the matching constellation points.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbols {
    pub labels: Vec<usize>,
    pub points: Vec<Complex64>,
}

/// I.i.d. uniform symbols.
pub fn gen_symbols<R: Rng + ?Sized>(modulation: &ModulationScheme, count: usize, rng: &mut R) -> Symbols {
    let c = modulation.constellation();
    let labels: Vec<usize> = (0..count).map(|_| rng.random_range(0..modulation.order)).collect();
    let points = labels.iter().map(|&l| c[l]).collect();
    Symbols { labels, points }
}

/// Circularly-symmetric complex Gaussian sample with variance `power`.
pub fn complex_noise<R: Rng + ?Sized>(power: f64, rng: &mut R) -> Complex64 {
    if power == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let s = (0.5 * power).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// `y(k) = h^H F W(k) x(k) + n(k)` for explicit slot precoders.
/// `symbols[p][k]` is user `p`'s symbol in slot `k`.
pub fn received_signal<R: Rng + ?Sized>(
    h: &CVec,
    f: &CMat,
    symbols: &[Vec<Complex64>],
    slots: &[SlotPrecoder],
    noise_power: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let g = f.ad_mul(h);
    slots
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let row = g.adjoint() * &s.w;
            let sig: Complex64 = (0..row.ncols()).map(|p| row[(0, p)] * symbols[p][k]).sum();
            sig + complex_noise(noise_power, rng)
        })
        .collect()
}

/// Nearest-point detection on `y / gain`, returning Gray-decoded labels.
pub fn demodulate(y: &[Complex64], modulation: &ModulationScheme, gain: Complex64) -> Result<Vec<usize>> {
    if !(gain.norm() > 0.0) {
        return Err(Error::Domain("demodulation gain reference must be nonzero".into()));
    }
    let c = modulation.constellation();
    Ok(y.iter().map(|&z| modulation.decide(&c, z / gain)).collect())
}

/// Per-slot artificial noise and its scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDraw {
    pub w_an: CMat,
    pub xi: f64,
}

/// AN draw for global slot index `slot`.
pub fn slot_draw(state: &PrecoderState, seed: u64, slot: usize) -> Result<SlotDraw> {
    let w_an = state.draw_slot_an(seed, slot);
    let xi = match state.rule {
        XiRule::Exact => state.xi_exact_for(&w_an)?,
        _ => state.xi,
    };
    Ok(SlotDraw { w_an, xi })
}

/// A receive position reduced to what the slot gains depend on:
/// `h^H F W(k) e_p = v_p + ξ (u^H W_AN)_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observer {
    pub v: Vec<Complex64>,
    pub u: CVec,
}

impl Observer {
    pub fn new(h: &CVec, state: &PrecoderState) -> Self {
        Self { v: crate::analysis::static_leakage(h, state), u: crate::analysis::null_leakage(h, state) }
    }

    /// Effective gain of every stream in one slot.
    pub fn gains(&self, d: &SlotDraw) -> Vec<Complex64> {
        let proj = d.w_an.tr_mul(&self.u.map(|z| z.conj()));
        self.v.iter().enumerate().map(|(p, v)| v + proj[p] * d.xi).collect()
    }
}

fn sinr_of(c: &[Complex64], m: usize, noise: f64) -> f64 {
    let interference: f64 = c.iter().enumerate().filter(|(p, _)| *p != m).map(|(_, z)| z.norm_sqr()).sum();
    c[m].norm_sqr() / (interference + noise)
}

/// Result for one (position, stream) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkCell {
    pub position: usize,
    pub stream: usize,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    /// Normal-approximation 95% half-width.
    pub half_width: f64,
    pub low_confidence: bool,
    /// Fraction of correctly detected symbols.
    pub symbol_accuracy: f64,
    /// Largest share of decisions landing on a single constellation point.
    pub max_decision_share: f64,
    /// Slot-averaged signal power over slot-averaged interference plus noise.
    pub empirical_sinr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkResult {
    pub cells: Vec<LinkCell>,
    pub slots: usize,
    pub trials: usize,
    pub seed: u64,
}

impl LinkResult {
    pub fn cell(&self, position: usize, stream: usize) -> Option<&LinkCell> {
        self.cells.iter().find(|c| c.position == position && c.stream == stream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub slots: usize,
    pub trials: usize,
    pub seed: u64,
    /// Receiver noise power at every observed position.
    pub noise_power: f64,
}

#[derive(Default, Clone)]
struct Tally {
    errors: u64,
    bits: u64,
    correct: u64,
    symbols: u64,
    decisions: Vec<u64>,
    signal: f64,
    interference: f64,
}

/// Monte-Carlo BER of `streams` at each of `channels`. The detector divides
/// by the static complex gain `v_m` seen at that position.
pub fn estimate_ber_at(
    state: &PrecoderState,
    modulations: &[ModulationScheme],
    channels: &[CVec],
    streams: &[usize],
    cfg: &LinkConfig,
) -> Result<LinkResult> {
    if cfg.slots == 0 || cfg.trials == 0 {
        return Err(Error::Domain("slots and trials must be >= 1".into()));
    }
    let m_users = state.n_users();
    if modulations.len() != m_users {
        return Err(Error::Domain(format!("expected {m_users} modulation schemes, got {}", modulations.len())));
    }
    if let Some(&s) = streams.iter().find(|&&s| s >= m_users) {
        return Err(Error::Domain(format!("stream {s} out of range")));
    }
    let observers: Vec<Observer> = channels.iter().map(|h| Observer::new(h, state)).collect();
    let consts: Vec<Vec<Complex64>> = modulations.iter().map(|m| m.constellation()).collect();
    let pairs: Vec<(usize, usize)> =
        (0..channels.len()).flat_map(|i| streams.iter().map(move |&s| (i, s))).collect();
    let mut tallies: Vec<Tally> =
        pairs.iter().map(|&(_, s)| Tally { decisions: vec![0; modulations[s].order], ..Tally::default() }).collect();

    for t in 0..cfg.trials {
        let base = t * cfg.slots;
        let draws: Vec<SlotDraw> =
            (0..cfg.slots).into_par_iter().map(|k| slot_draw(state, cfg.seed, base + k)).collect::<Result<_>>()?;
        let syms: Vec<Symbols> = modulations
            .iter()
            .enumerate()
            .map(|(p, m)| gen_symbols(m, cfg.slots, &mut stream(cfg.seed, &[SYMBOL_STREAM, t as u64, p as u64])))
            .collect();
        let partial: Vec<Tally> = pairs
            .par_iter()
            .map(|&(i, s)| {
                let obs = &observers[i];
                let modu = &modulations[s];
                let c = &consts[s];
                let gain = if obs.v[s].norm() > 0.0 { obs.v[s] } else { Complex64::new(1.0, 0.0) };
                let mut rng = stream(cfg.seed, &[NOISE_STREAM, t as u64, i as u64, s as u64]);
                let mut tally = Tally { decisions: vec![0; modu.order], ..Tally::default() };
                for (k, d) in draws.iter().enumerate() {
                    let g = obs.gains(d);
                    let y: Complex64 =
                        (0..m_users).map(|p| g[p] * syms[p].points[k]).sum::<Complex64>() + complex_noise(cfg.noise_power, &mut rng);
                    let sent = syms[s].labels[k];
                    let got = modu.decide(c, y / gain);
                    tally.errors += (sent ^ got).count_ones() as u64;
                    tally.bits += modu.bits() as u64;
                    tally.symbols += 1;
                    tally.correct += (sent == got) as u64;
                    tally.decisions[got] += 1;
                    tally.signal += g[s].norm_sqr();
                    tally.interference += g.iter().enumerate().filter(|(p, _)| *p != s).map(|(_, z)| z.norm_sqr()).sum::<f64>();
                }
                tally
            })
            .collect();
        for (acc, p) in tallies.iter_mut().zip(partial) {
            acc.errors += p.errors;
            acc.bits += p.bits;
            acc.correct += p.correct;
            acc.symbols += p.symbols;
            acc.signal += p.signal;
            acc.interference += p.interference;
            for (a, b) in acc.decisions.iter_mut().zip(&p.decisions) {
                *a += b;
            }
        }
    }

    let cells = pairs
        .iter()
        .zip(&tallies)
        .map(|(&(i, s), t)| {
            let ber = t.errors as f64 / t.bits as f64;
            let n = t.symbols as f64;
            LinkCell {
                position: i,
                stream: s,
                bits: t.bits,
                errors: t.errors,
                ber,
                half_width: 1.96 * (ber * (1.0 - ber) / t.bits as f64).sqrt(),
                low_confidence: t.errors < LOW_CONFIDENCE_ERRORS,
                symbol_accuracy: t.correct as f64 / n,
                max_decision_share: *t.decisions.iter().max().unwrap_or(&0) as f64 / n,
                empirical_sinr: (t.signal / n) / (t.interference / n + cfg.noise_power),
            }
        })
        .collect();
    Ok(LinkResult { cells, slots: cfg.slots, trials: cfg.trials, seed: cfg.seed })
}

/// [`estimate_ber_at`] on line-of-sight channels at `positions`, using the
/// scenario's noise power and modulations.
pub fn estimate_ber(
    scenario: &crate::geometry::Scenario,
    state: &PrecoderState,
    positions: &[Position3],
    streams: &[usize],
    slots: usize,
    trials: usize,
    seed: u64,
) -> Result<LinkResult> {
    let channels = positions.iter().map(|p| los_channel(&scenario.geometry, p)).collect::<Result<Vec<_>>>()?;
    let cfg = LinkConfig { slots, trials, seed, noise_power: scenario.noise_power };
    estimate_ber_at(state, &scenario.modulations, &channels, streams, &cfg)
}

/// Instantaneous-SINR statistics of one user/eavesdropper pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SecrecyLink {
    pub user: Observer,
    pub eve: Observer,
    pub stream: usize,
    pub user_noise: f64,
    /// Zero models the worst-case noiseless eavesdropper.
    pub eve_noise: f64,
}

impl SecrecyLink {
    pub fn new(state: &PrecoderState, h_user: &CVec, h_eve: &CVec, stream: usize, user_noise: f64, eve_noise: f64) -> Self {
        Self { user: Observer::new(h_user, state), eve: Observer::new(h_eve, state), stream, user_noise, eve_noise }
    }

    /// Calls `visit(sinr_user, sinr_eve)` for slots `lo..hi` and folds.
    fn fold_block<A, F: FnMut(&mut A, f64, f64)>(
        &self,
        state: &PrecoderState,
        seed: u64,
        block: usize,
        lo: usize,
        hi: usize,
        mut acc: A,
        mut visit: F,
    ) -> Result<A> {
        let mut un = stream(seed, &[NOISE_STREAM, block as u64]);
        let mut en = stream(seed, &[EVE_NOISE_STREAM, block as u64]);
        for k in lo..hi {
            let d = slot_draw(state, seed, k)?;
            let nu = complex_noise(self.user_noise, &mut un).norm_sqr();
            let ne = complex_noise(self.eve_noise, &mut en).norm_sqr();
            let gu = sinr_of(&self.user.gains(&d), self.stream, nu);
            let ge = sinr_of(&self.eve.gains(&d), self.stream, ne);
            visit(&mut acc, gu, ge);
        }
        Ok(acc)
    }

    fn blocks(slots: usize) -> Vec<(usize, usize, usize)> {
        (0..slots.div_ceil(BLOCK)).map(|b| (b, b * BLOCK, ((b + 1) * BLOCK).min(slots))).collect()
    }

    /// `max(E[log2(1+SINR_u) - log2(1+SINR_e)], 0)` over `slots` slots.
    pub fn secrecy_rate(&self, state: &PrecoderState, slots: usize, seed: u64) -> Result<f64> {
        if slots == 0 {
            return Err(Error::Domain("slots must be >= 1".into()));
        }
        let sums: Vec<f64> = Self::blocks(slots)
            .into_par_iter()
            .map(|(b, lo, hi)| {
                self.fold_block(state, seed, b, lo, hi, 0.0, |acc, gu, ge| *acc += (1.0 + gu).log2() - (1.0 + ge).log2())
            })
            .collect::<Result<_>>()?;
        Ok((sums.iter().sum::<f64>() / slots as f64).max(0.0))
    }

    /// Fraction of slots whose instantaneous secrecy capacity is below each rate.
    pub fn outage(&self, state: &PrecoderState, rates: &[f64], slots: usize, seed: u64) -> Result<Vec<f64>> {
        if slots == 0 {
            return Err(Error::Domain("slots must be >= 1".into()));
        }
        let counts: Vec<Vec<u64>> = Self::blocks(slots)
            .into_par_iter()
            .map(|(b, lo, hi)| {
                self.fold_block(state, seed, b, lo, hi, vec![0u64; rates.len()], |acc, gu, ge| {
                    let cs = ((1.0 + gu).log2() - (1.0 + ge).log2()).max(0.0);
                    for (a, r) in acc.iter_mut().zip(rates) {
                        *a += (cs < *r) as u64;
                    }
                })
            })
            .collect::<Result<_>>()?;
        let mut total = vec![0u64; rates.len()];
        for c in counts {
            for (t, x) in total.iter_mut().zip(c) {
                *t += x;
            }
        }
        Ok(total.into_iter().map(|c| c as f64 / slots as f64).collect())
    }
}

/// Ergodic secrecy rate of user `m` against an eavesdropper at `eve`, both
/// with the scenario's noise power.
pub fn empirical_secrecy_rate(
    scenario: &crate::geometry::Scenario,
    state: &PrecoderState,
    m: usize,
    eve: &Position3,
    slots: usize,
    seed: u64,
) -> Result<f64> {
    let g = &scenario.geometry;
    let link = SecrecyLink::new(
        state,
        &los_channel(g, &scenario.users[m])?,
        &los_channel(g, eve)?,
        m,
        scenario.noise_power,
        scenario.noise_power,
    );
    link.secrecy_rate(state, slots, seed)
}

/// Secrecy outage of user `m` against a noiseless eavesdropper at `eve`.
pub fn empirical_outage(
    scenario: &crate::geometry::Scenario,
    state: &PrecoderState,
    m: usize,
    eve: &Position3,
    rates: &[f64],
    slots: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let g = &scenario.geometry;
    let link = SecrecyLink::new(state, &los_channel(g, &scenario.users[m])?, &los_channel(g, eve)?, m, scenario.noise_power, 0.0);
    link.outage(state, rates, slots, seed)
}

/// Offsets drawn uniformly in the closed unit ball.
pub fn unit_ball_offsets<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<Position3> {
    (0..count)
        .map(|_| loop {
            let p = Position3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            );
            if p.norm() <= 1.0 {
                break p;
            }
        })
        .collect()
}

/// Each position displaced uniformly within a ball of radius `delta`.
pub fn perturb_positions<R: Rng + ?Sized>(users: &[Position3], delta: f64, rng: &mut R) -> Result<Vec<Position3>> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("perturbation radius must be >= 0, got {delta}")));
    }
    Ok(users.iter().zip(unit_ball_offsets(users.len(), rng)).map(|(u, o)| u.add(&o.scale(delta))).collect())
}

/// Plane-wave channel from the direction of `r` with the array-centre path
/// loss on every element.
pub fn far_field_channel_variant(geom: &ArrayGeometry, r: &Position3) -> Result<CVec> {
    let dist = r.norm();
    if dist == 0.0 {
        return Err(Error::Domain("far-field direction undefined at the array centre".into()));
    }
    let k = geom.wavenumber();
    let dir = r.scale(1.0 / dist);
    let amp = path_amplitude(geom, dist);
    let elems = element_positions(geom);
    Ok(CVec::from_iterator(
        elems.len(),
        elems.iter().map(|s| Complex64::from_polar(amp, k * (dist - (dir.x * s.x + dir.y * s.y + dir.z * s.z)))),
    ))
}
