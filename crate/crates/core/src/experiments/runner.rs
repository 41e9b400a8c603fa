//! Experiment dispatch. Each kind turns a resolved [`ExperimentConfig`] into
//! one or more [`CsvArtifact`]s; nothing is written here.

use log::info;
use num_complex::Complex64;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, GainSpec, TransmitSpec, Units, XiSpec};
use super::csv::{config_hash, CsvArtifact};
use crate::analysis::{
    avg_outer_product, avg_sinr_los, avg_sinr_multipath, eve_sinr_params, secrecy_map, secrecy_outage, CellStatus,
};
use crate::geometry::{
    los_channel, multipath_covariance, sample_multipath_channel, scatterer_link_gain, stack_columns, ChannelSet,
    Position3, Scatterer, Scenario,
};
use crate::linalg::{frob, CMat, CVec};
use crate::montecarlo::{
    complex_noise, estimate_ber_at, far_field_channel_variant, gen_symbols, slot_draw, unit_ball_offsets, LinkConfig,
    ModulationKind, ModulationScheme, Observer, SecrecyLink, SlotDraw,
};
use crate::numerics::{dncf_scaled_pdf, integrate_semi_infinite, q_function, SeriesControl};
use crate::precoding::{design_analog, gain_for_sinr_db, AnalogMode, AnalogPrecoder, PrecoderState, XiRule};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

const MULTIPATH_STREAM: u64 = 0x3A;
const CSI_STREAM: u64 = 0xC5;
const CONSTELLATION_STREAM: u64 = 0xC0;
const PHASE_LINK: u64 = 0x11;
const PHASE_RATE: u64 = 0x12;
const PHASE_VALIDATE: u64 = 0x13;

/// Artifacts of one run and whether every built-in check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<CsvArtifact>,
    pub passed: bool,
}

/// Power settings applied to one scenario realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPoint {
    pub transmit: TransmitSpec,
    pub gains: GainSpec,
    pub xi: XiSpec,
}

impl PowerPoint {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self { transmit: cfg.power.transmit, gains: cfg.power.gains.clone(), xi: cfg.power.xi }
    }
}

/// Analog stage for the scenario's mode.
pub fn analog_for(scenario: &Scenario, h_u: &CMat) -> Result<AnalogPrecoder> {
    match scenario.analog {
        AnalogMode::Hybrid => design_analog(h_u, scenario.n_rf),
        AnalogMode::FullyDigital => Ok(AnalogPrecoder::identity(scenario.geometry.n_elements())),
    }
}

/// Designs the precoder for user channels `h_u` and resolves gains, budget
/// and `ξ`. The returned scenario carries the resolved values.
pub fn design_point(base: &Scenario, h_u: &CMat, point: &PowerPoint) -> Result<(Scenario, PrecoderState)> {
    let m = h_u.ncols();
    let unit = PrecoderState::design(h_u, analog_for(base, h_u)?, &vec![1.0; m], f64::INFINITY, XiRule::Fixed(0.0))?;
    let col_power: Vec<f64> = unit.fw_static.column_iter().map(|c| c.norm_squared()).collect();
    let static_for = |g: &[f64]| g.iter().zip(&col_power).map(|(b, p)| b * b * p).sum::<f64>();
    let absolute = match point.transmit {
        TransmitSpec::Dbm(d) => Some(super::config::dbm_to_watts(d)),
        TransmitSpec::Watts(w) => Some(w),
        TransmitSpec::StaticMultiple(_) => None,
    };
    let gains = match &point.gains {
        GainSpec::SinrDb(s) => vec![gain_for_sinr_db(base.noise_power, *s); m],
        GainSpec::Explicit(g) => g.clone(),
        GainSpec::StaticFraction(f) => {
            let p_t = absolute.ok_or_else(|| Error::Domain("static_fraction needs an absolute transmit power".into()))?;
            vec![(f * p_t / col_power.iter().sum::<f64>()).sqrt(); m]
        }
    };
    let p_t = match point.transmit {
        TransmitSpec::StaticMultiple(k) => k * static_for(&gains),
        _ => absolute.unwrap(),
    };
    let rule = match point.xi {
        XiSpec::Bound => XiRule::Bound,
        XiSpec::Exact => XiRule::Exact,
        XiSpec::Fixed(x) => XiRule::Fixed(x),
        XiSpec::Budget(f) => XiRule::Fixed(f * p_t.sqrt() / unit.bound_denominator()),
    };
    let state = unit.with_gains(&gains, p_t, rule)?;
    let scenario = Scenario { transmit_power: p_t, symbol_gains: gains, ..base.clone() };
    Ok((scenario, state))
}

fn los_users(scenario: &Scenario) -> Result<CMat> {
    Ok(ChannelSet::los(scenario)?.h_u)
}

fn coord_names(cfg: &ExperimentConfig) -> [&'static str; 3] {
    match cfg.units {
        Units::Fraunhofer => ["x_dF", "y_dF", "z_dF"],
        Units::Meters => ["x_m", "y_m", "z_m"],
    }
}

fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Stream decoded by eavesdropper `q`.
pub fn eve_target(q: usize, m: usize) -> usize {
    q % m
}

fn sweep_values(cfg: &ExperimentConfig, allowed: &[&str], default_var: &str, default: &[f64]) -> (String, Vec<f64>) {
    match &cfg.sweep {
        Some(s) if allowed.contains(&s.variable.as_str()) => (s.variable.clone(), s.values.clone()),
        _ => (default_var.to_string(), default.to_vec()),
    }
}

fn draws(state: &PrecoderState, seed: u64, offset: usize, count: usize) -> Result<Vec<SlotDraw>> {
    (0..count).into_par_iter().map(|k| slot_draw(state, seed, offset + k)).collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    info!("running {} (seed {})", cfg.kind.name(), cfg.seed);
    let mut out = match cfg.kind {
        ExperimentKind::Beampattern => beampattern(cfg)?,
        ExperimentKind::Constellation => constellation(cfg)?,
        ExperimentKind::BerGrid => ber_grid(cfg)?,
        ExperimentKind::BerSweep => ber_sweep(cfg)?,
        ExperimentKind::SameDirection => same_direction(cfg)?,
        ExperimentKind::SumrateMultipath => sumrate_multipath(cfg)?,
        ExperimentKind::SecrecyRateSweep => secrecy_rate_sweep(cfg)?,
        ExperimentKind::OutageCurve => outage_curve(cfg)?,
        ExperimentKind::SecrecyMap => secrecy_map_experiment(cfg)?,
        ExperimentKind::Validate => validate(cfg)?,
    };
    let hash = config_hash(cfg);
    for a in &mut out.artifacts {
        a.meta.experiment = cfg.kind.name().to_string();
        a.meta.seed = cfg.seed;
        a.meta.config_hash = hash.clone();
    }
    Ok(out)
}

fn single(a: CsvArtifact) -> RunOutput {
    RunOutput { artifacts: vec![a], passed: true }
}

// ---------------------------------------------------------------------------

/// Static-part gain `|h^H F W_static e_m|²` and slot-averaged gain including
/// the artificial noise, both normalised to the value at user `m`.
fn beampattern(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let (sc, st) = design_point(&base, &los_users(&base)?, &PowerPoint::from_config(cfg))?;
    let d = draws(&st, derive_seed(cfg.seed, &[PHASE_LINK]), 0, cfg.slots)?;
    let gains_at = |h: &CVec| -> (Vec<f64>, Vec<f64>) {
        let obs = Observer::new(h, &st);
        let stat: Vec<f64> = obs.v.iter().map(|z| z.norm_sqr()).collect();
        let mut avg = vec![0.0; obs.v.len()];
        for dr in &d {
            for (a, g) in avg.iter_mut().zip(obs.gains(dr)) {
                *a += g.norm_sqr();
            }
        }
        avg.iter_mut().for_each(|a| *a /= d.len() as f64);
        (stat, avg)
    };
    let refs: Vec<(f64, f64)> = (0..sc.n_users())
        .map(|m| {
            let (s, a) = gains_at(&los_channel(&sc.geometry, &sc.users[m])?);
            Ok((s[m], a[m]))
        })
        .collect::<Result<_>>()?;
    let [xn, yn, zn] = coord_names(cfg);
    let grid = cfg.grid.as_ref().expect("validated");
    let pts = grid.points();
    let rows: Vec<Vec<Vec<f64>>> = pts
        .par_iter()
        .map(|p| {
            let h = los_channel(&sc.geometry, &cfg.to_position(*p))?;
            let (s, a) = gains_at(&h);
            Ok(cfg
                .streams
                .iter()
                .map(|&m| vec![p[0], p[1], p[2], m as f64, to_db(s[m] / refs[m].0), to_db(a[m] / refs[m].1)])
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut grid_art = CsvArtifact::new("beampattern", &[xn, yn, zn, "stream", "gain_db", "avg_gain_db"]);
    rows.into_iter().flatten().for_each(|r| grid_art.push(r));
    grid_art.note("gain_db: static part |h^H F W_static e_m|^2 relative to user m");
    grid_art.note("avg_gain_db: slot average of |h^H F W(k) e_m|^2 (artificial noise included) relative to user m");

    let mut pts_art = CsvArtifact::new("beampattern_points", &["position", "stream", "gain_db", "avg_gain_db"]);
    pts_art.note("position: users first (0..M-1), then eavesdroppers");
    for (i, p) in sc.users.iter().chain(&sc.eavesdroppers).enumerate() {
        let (s, a) = gains_at(&los_channel(&sc.geometry, p)?);
        for &m in &cfg.streams {
            pts_art.push(vec![i as f64, m as f64, to_db(s[m] / refs[m].0), to_db(a[m] / refs[m].1)]);
        }
    }
    Ok(RunOutput { artifacts: vec![grid_art, pts_art], passed: true })
}

/// Received samples `y(k) / β_m` at users (own stream) and eavesdroppers
/// (stream `q mod M`).
fn constellation(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let (sc, st) = design_point(&base, &los_users(&base)?, &PowerPoint::from_config(cfg))?;
    let m_users = sc.n_users();
    let link_seed = derive_seed(cfg.seed, &[PHASE_LINK]);
    let d = draws(&st, link_seed, 0, cfg.slots)?;
    let syms: Vec<_> = sc
        .modulations
        .iter()
        .enumerate()
        .map(|(p, m)| gen_symbols(m, cfg.slots, &mut stream(cfg.seed, &[CONSTELLATION_STREAM, p as u64])))
        .collect();
    let mut art = CsvArtifact::new("constellation", &["position", "stream", "slot", "re", "im", "label"]);
    art.note("position: users first (0..M-1), then eavesdroppers; samples are y(k) / beta_stream");
    let targets: Vec<(usize, &Position3)> = sc
        .users
        .iter()
        .enumerate()
        .map(|(m, p)| (m, p))
        .chain(sc.eavesdroppers.iter().enumerate().map(|(q, p)| (eve_target(q, m_users), p)))
        .collect();
    for (i, (s, pos)) in targets.iter().enumerate() {
        let obs = Observer::new(&los_channel(&sc.geometry, pos)?, &st);
        let mut nrng = stream(cfg.seed, &[CONSTELLATION_STREAM, 0x100 + i as u64]);
        let beta = sc.symbol_gains[*s];
        for (k, dr) in d.iter().enumerate() {
            let g = obs.gains(dr);
            let y: Complex64 =
                (0..m_users).map(|p| g[p] * syms[p].points[k]).sum::<Complex64>() + complex_noise(sc.noise_power, &mut nrng);
            let z = y / beta;
            art.push(vec![i as f64, *s as f64, k as f64, z.re, z.im, syms[*s].labels[k] as f64]);
        }
    }
    Ok(single(art))
}

fn ber_grid(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let (sc, st) = design_point(&base, &los_users(&base)?, &PowerPoint::from_config(cfg))?;
    let grid = cfg.grid.as_ref().expect("validated");
    let pts = grid.points();
    let channels = pts
        .par_iter()
        .map(|p| los_channel(&sc.geometry, &cfg.to_position(*p)))
        .collect::<Result<Vec<_>>>()?;
    let link = LinkConfig {
        slots: cfg.slots,
        trials: cfg.trials,
        seed: derive_seed(cfg.seed, &[PHASE_LINK]),
        noise_power: sc.noise_power,
    };
    let r = estimate_ber_at(&st, &sc.modulations, &channels, &cfg.streams, &link)?;
    let [xn, yn, zn] = coord_names(cfg);
    let mut art =
        CsvArtifact::new("ber_grid", &[xn, yn, zn, "stream", "ber", "half_width", "low_confidence", "empirical_sinr_db"]);
    for c in &r.cells {
        let p = pts[c.position];
        art.push(vec![
            p[0],
            p[1],
            p[2],
            c.stream as f64,
            c.ber,
            c.half_width,
            c.low_confidence as u8 as f64,
            to_db(c.empirical_sinr),
        ]);
    }
    art.note("half_width: 95% normal-approximation interval; low_confidence = 1 when fewer than 100 bit errors");
    Ok(single(art))
}

/// Closed-form BER of the scheme at an average SINR (exact for QPSK).
pub fn theory_ber(m: &ModulationScheme, sinr: f64) -> f64 {
    match (m.kind, m.order) {
        (ModulationKind::Psk, 4) | (ModulationKind::Qam, 4) => q_function(sinr.sqrt()),
        (ModulationKind::Psk, 2) => q_function((2.0 * sinr).sqrt()),
        _ => f64::NAN,
    }
}

fn ber_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let h_u = los_users(&base)?;
    let (_, values) = sweep_values(cfg, &["user_sinr_db"], "user_sinr_db", &[0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0]);
    let mut art = CsvArtifact::new(
        "ber_sweep",
        &["user_sinr_db", "position", "stream", "ber", "half_width", "low_confidence", "theory_ber", "avg_sinr_db"],
    );
    art.note("position: users first (0..M-1), then eavesdroppers; each decodes its own / its target stream");
    art.note("theory_ber: Q(sqrt(average SINR)) for QPSK, nan for other schemes");
    for s in values {
        let point = PowerPoint { gains: GainSpec::SinrDb(s), ..PowerPoint::from_config(cfg) };
        let (sc, st) = design_point(&base, &h_u, &point)?;
        let m_users = sc.n_users();
        let positions: Vec<Position3> = sc.users.iter().chain(&sc.eavesdroppers).copied().collect();
        let targets: Vec<usize> =
            (0..m_users).chain((0..sc.eavesdroppers.len()).map(|q| eve_target(q, m_users))).collect();
        let channels = positions.iter().map(|p| los_channel(&sc.geometry, p)).collect::<Result<Vec<_>>>()?;
        let link = LinkConfig {
            slots: cfg.slots,
            trials: cfg.trials,
            seed: derive_seed(cfg.seed, &[PHASE_LINK]),
            noise_power: sc.noise_power,
        };
        let streams: Vec<usize> = (0..m_users).collect();
        let r = estimate_ber_at(&st, &sc.modulations, &channels, &streams, &link)?;
        for (i, &t) in targets.iter().enumerate() {
            let c = r.cell(i, t).expect("cell computed");
            let avg = avg_sinr_los(&channels[i], &st, t, sc.noise_power);
            art.push(vec![
                s,
                i as f64,
                t as f64,
                c.ber,
                c.half_width,
                c.low_confidence as u8 as f64,
                theory_ber(&sc.modulations[t], avg),
                to_db(avg),
            ]);
        }
    }
    Ok(single(art))
}

/// Eavesdropper moved along the ray through user `m`, under the spherical
/// model and under a plane-wave model used for both design and evaluation.
fn same_direction(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let m = *cfg.streams.first().ok_or_else(|| Error::Domain("same-direction needs a stream".into()))?;
    let (_, scales) = sweep_values(cfg, &["ray_scale"], "ray_scale", &[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.1, 1.25, 1.5, 1.75, 2.0]);
    let g = &base.geometry;
    let user = base.users[m];
    let point = PowerPoint::from_config(cfg);
    let near_h = los_users(&base)?;
    let far_h = stack_columns(&base.users.iter().map(|u| far_field_channel_variant(g, u)).collect::<Result<Vec<_>>>()?);
    let mut art = CsvArtifact::new("same_direction", &["ray_scale", "distance", "model", "position", "ber", "half_width", "avg_sinr_db"]);
    art.note("model: 0 = spherical-wave channel, 1 = plane-wave channel (design and evaluation)");
    art.note("position: 0 = user on the ray, 1 = eavesdropper at ray_scale times the user position");
    art.note("distance: eavesdropper distance from the array centre in position units");
    art.note("avg_sinr_db: closed-form slot-average SINR of the stream at that position");
    for (model, h_u) in [(0usize, &near_h), (1, &far_h)] {
        let (sc, st) = design_point(&base, h_u, &point)?;
        let chan = |p: &Position3| if model == 0 { los_channel(g, p) } else { far_field_channel_variant(g, p) };
        let mut channels = vec![chan(&user)?];
        for &t in &scales {
            channels.push(chan(&user.scale(t))?);
        }
        let link = LinkConfig {
            slots: cfg.slots,
            trials: cfg.trials,
            seed: derive_seed(cfg.seed, &[PHASE_LINK]),
            noise_power: sc.noise_power,
        };
        let r = estimate_ber_at(&st, &sc.modulations, &channels, &[m], &link)?;
        let u = r.cell(0, m).expect("user cell");
        let sinr_db = |h: &CVec| to_db(avg_sinr_los(h, &st, m, sc.noise_power));
        let user_sinr = sinr_db(&channels[0]);
        for (i, &t) in scales.iter().enumerate() {
            let e = r.cell(i + 1, m).expect("eve cell");
            let dist = user.scale(t).norm() / cfg.unit_m;
            art.push(vec![t, dist, model as f64, 0.0, u.ber, u.half_width, user_sinr]);
            art.push(vec![t, dist, model as f64, 1.0, e.ber, e.half_width, sinr_db(&channels[i + 1])]);
        }
    }
    Ok(single(art))
}

/// Scatterers with per-receiver variances; `None` variance gives unit average
/// link power `σ² |h_l|² = 1` for that receiver.
fn receiver_scatterers(cfg: &ExperimentConfig, r: &Position3, count: usize) -> Result<Vec<Scatterer>> {
    cfg.scatterers[..count]
        .iter()
        .map(|(p, v)| {
            let probe = Scatterer { position: *p, variance: 1.0 };
            let variance = match v {
                Some(v) => *v,
                None => 1.0 / scatterer_link_gain(&cfg.geometry, &probe, r)?.norm_sqr(),
            };
            Ok(Scatterer { position: *p, variance })
        })
        .collect()
}

fn sumrate_multipath(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let (_, powers) = sweep_values(cfg, &["transmit_dbm"], "transmit_dbm", &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    let max_l = cfg.scatterers.len();
    let paths = cfg.multipath.as_ref().map_or_else(|| (0..=max_l).collect(), |m| m.paths.clone());
    if let Some(&l) = paths.iter().find(|&&l| l > max_l) {
        return Err(Error::Validation(vec![format!("multipath.paths entry {l} exceeds the {max_l} scatterers")]));
    }
    let g = &base.geometry;
    let m_users = base.n_users();
    let mut art = CsvArtifact::new(
        "sumrate_multipath",
        &["transmit_dbm", "paths", "user_sum_rate", "eve_sum_rate", "eve_sum_rate_closed_form"],
    );
    art.note("rates in bits/s/Hz averaged over channel draws; eve rates use the slot-averaged SINR");
    art.note("eve_sum_rate_closed_form: eavesdropper SINR averaged over its scattered component as well");
    for &p_dbm in &powers {
        let point = PowerPoint { transmit: TransmitSpec::Dbm(p_dbm), ..PowerPoint::from_config(cfg) };
        for &l in &paths {
            let per_draw: Vec<[f64; 3]> = (0..cfg.trials)
                .into_par_iter()
                .map(|d| {
                    let receivers: Vec<&Position3> = base.users.iter().chain(&base.eavesdroppers).collect();
                    let mut chans = Vec::with_capacity(receivers.len());
                    for (i, r) in receivers.iter().enumerate() {
                        let mut rng = stream(cfg.seed, &[MULTIPATH_STREAM, d as u64, i as u64]);
                        chans.push(sample_multipath_channel(g, r, &receiver_scatterers(cfg, r, l)?, &mut rng)?);
                    }
                    let h_u = stack_columns(&chans[..m_users]);
                    let (sc, st) = design_point(&base, &h_u, &point)?;
                    let user: f64 =
                        (0..m_users).map(|m| (1.0 + avg_sinr_los(&chans[m], &st, m, sc.noise_power)).log2()).sum();
                    let mut eve = 0.0;
                    let mut eve_cf = 0.0;
                    for (q, e) in base.eavesdroppers.iter().enumerate() {
                        let t = eve_target(q, m_users);
                        eve += (1.0 + avg_sinr_los(&chans[m_users + q], &st, t, sc.noise_power)).log2();
                        let r = multipath_covariance(g, e, &receiver_scatterers(cfg, e, l)?)?;
                        eve_cf += (1.0 + avg_sinr_multipath(&r, &los_channel(g, e)?, &st, t, sc.noise_power)).log2();
                    }
                    Ok([user, eve, eve_cf])
                })
                .collect::<Result<_>>()?;
            let n = per_draw.len() as f64;
            let mean = |i: usize| per_draw.iter().map(|r| r[i]).sum::<f64>() / n;
            art.push(vec![p_dbm, l as f64, mean(0), mean(1), mean(2)]);
        }
    }
    Ok(single(art))
}

fn user_eve_channels(sc: &Scenario, m: usize) -> Result<(CVec, CVec)> {
    let q = (0..sc.eavesdroppers.len())
        .find(|&q| eve_target(q, sc.n_users()) == m)
        .ok_or_else(|| Error::Domain(format!("no eavesdropper targets stream {m}")))?;
    Ok((los_channel(&sc.geometry, &sc.users[m])?, los_channel(&sc.geometry, &sc.eavesdroppers[q])?))
}

fn secrecy_rate_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (var, values) =
        sweep_values(cfg, &["transmit_dbm", "delta_m"], "transmit_dbm", &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    if var == "delta_m" {
        return imperfect_csi(cfg, &values);
    }
    let base = cfg.base_scenario();
    let h_u = los_users(&base)?;
    let rate_seed = derive_seed(cfg.seed, &[PHASE_RATE]);
    let mut art = CsvArtifact::new("secrecy_rate_sweep", &["transmit_dbm", "stream", "proposed", "zf_power_matched", "mean_power_w"]);
    art.note("ergodic secrecy rates in bits/s/Hz; zf_power_matched uses xi = 0 with gains raised to the same mean power");
    for &p in &values {
        let point = PowerPoint { transmit: TransmitSpec::Dbm(p), ..PowerPoint::from_config(cfg) };
        let (sc, st) = design_point(&base, &h_u, &point)?;
        let scale = (st.mean_power() / st.static_power()).sqrt();
        let zf_gains: Vec<f64> = st.gains.iter().map(|b| b * scale).collect();
        let zf = st.with_gains(&zf_gains, st.p_t, XiRule::Fixed(0.0))?;
        for &m in &cfg.streams {
            let (hu, he) = user_eve_channels(&sc, m)?;
            let prop = SecrecyLink::new(&st, &hu, &he, m, sc.noise_power, sc.noise_power).secrecy_rate(&st, cfg.slots, rate_seed)?;
            let base_rate = SecrecyLink::new(&zf, &hu, &he, m, sc.noise_power, sc.noise_power).secrecy_rate(&zf, cfg.slots, rate_seed)?;
            art.push(vec![p, m as f64, prop, base_rate, st.mean_power()]);
        }
    }
    Ok(single(art))
}

/// Design on user positions displaced uniformly within `Δ`, evaluation at the
/// true positions. The same unit-ball offsets are reused for every `Δ`.
fn imperfect_csi(cfg: &ExperimentConfig, deltas: &[f64]) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let point = PowerPoint::from_config(cfg);
    let g = &base.geometry;
    let m_users = base.n_users();
    let mut art = CsvArtifact::new("imperfect_csi", &["delta_m", "stream", "secrecy_rate", "rate_se", "ber", "half_width"]);
    art.note("delta_m: radius of the uniform-in-ball location error in meters");
    art.note("ber: QPSK-detected stream at the true user position, gain reference = static gain actually seen");
    let offsets: Vec<Vec<Position3>> =
        (0..cfg.trials).map(|t| unit_ball_offsets(m_users, &mut stream(cfg.seed, &[CSI_STREAM, t as u64]))).collect();
    for &delta in deltas {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("perturbation radius must be >= 0, got {delta}")));
        }
        let per_trial: Vec<Vec<(f64, u64, u64)>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let est: Vec<Position3> =
                    base.users.iter().zip(&offsets[t]).map(|(u, o)| u.add(&o.scale(delta))).collect();
                let h_est = stack_columns(&est.iter().map(|u| los_channel(g, u)).collect::<Result<Vec<_>>>()?);
                let (sc, st) = design_point(&base, &h_est, &point)?;
                let seed = derive_seed(cfg.seed, &[PHASE_RATE, t as u64]);
                cfg.streams
                    .iter()
                    .map(|&m| {
                        let (hu, he) = user_eve_channels(&sc, m)?;
                        let rate = SecrecyLink::new(&st, &hu, &he, m, sc.noise_power, sc.noise_power)
                            .secrecy_rate(&st, cfg.slots, seed)?;
                        let link = LinkConfig { slots: cfg.slots, trials: 1, seed, noise_power: sc.noise_power };
                        let r = estimate_ber_at(&st, &sc.modulations, &[hu], &[m], &link)?;
                        Ok((rate, r.cells[0].errors, r.cells[0].bits))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (j, &m) in cfg.streams.iter().enumerate() {
            let n = cfg.trials as f64;
            let rate = per_trial.iter().map(|r| r[j].0).sum::<f64>() / n;
            let var = per_trial.iter().map(|r| (r[j].0 - rate).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let errors: u64 = per_trial.iter().map(|r| r[j].1).sum();
            let bits: u64 = per_trial.iter().map(|r| r[j].2).sum();
            let ber = errors as f64 / bits as f64;
            art.push(vec![delta, m as f64, rate, (var / n).sqrt(), ber, 1.96 * (ber * (1.0 - ber) / bits as f64).sqrt()]);
        }
    }
    Ok(single(art))
}

fn outage_curve(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let h_u = los_users(&base)?;
    let (_, sinrs) = sweep_values(cfg, &["user_sinr_db"], "user_sinr_db", &[10.0, 15.0, 20.0]);
    let ctrl = SeriesControl::with_cap(cfg.outage.series_cap);
    let rate_seed = derive_seed(cfg.seed, &[PHASE_RATE]);
    let mut art =
        CsvArtifact::new("outage_curve", &["user_sinr_db", "stream", "rate", "analytic", "empirical", "lambda1", "lambda2"]);
    art.note("noiseless eavesdropper; empirical is nan when outage.empirical_slots = 0");
    for &s in &sinrs {
        let point = PowerPoint { gains: GainSpec::SinrDb(s), ..PowerPoint::from_config(cfg) };
        let (sc, st) = design_point(&base, &h_u, &point)?;
        for &m in &cfg.streams {
            let (hu, he) = user_eve_channels(&sc, m)?;
            let params = eve_sinr_params(&he, &st, m)?;
            let empirical = if cfg.outage.empirical_slots > 0 {
                SecrecyLink::new(&st, &hu, &he, m, sc.noise_power, 0.0).outage(
                    &st,
                    &cfg.outage.rates,
                    cfg.outage.empirical_slots,
                    rate_seed,
                )?
            } else {
                vec![f64::NAN; cfg.outage.rates.len()]
            };
            let analytic = cfg
                .outage
                .rates
                .par_iter()
                .map(|&r| secrecy_outage(r, sc.symbol_gains[m], sc.noise_sd(), &params, sc.n_users(), &ctrl))
                .collect::<Result<Vec<_>>>()?;
            for (i, &r) in cfg.outage.rates.iter().enumerate() {
                art.push(vec![s, m as f64, r, analytic[i], empirical[i], params.lambda1, params.lambda2]);
            }
        }
    }
    Ok(single(art))
}

fn secrecy_map_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let (sc, st) = design_point(&base, &los_users(&base)?, &PowerPoint::from_config(cfg))?;
    let grid = cfg.grid.as_ref().expect("validated");
    let pts = grid.points();
    let positions: Vec<Position3> = pts.iter().map(|p| cfg.to_position(*p)).collect();
    let ctrl = SeriesControl::with_cap(cfg.outage.series_cap);
    let rate = *cfg.outage.rates.first().ok_or_else(|| Error::Domain("outage.rates is empty".into()))?;
    let [xn, yn, zn] = coord_names(cfg);
    let mut art = CsvArtifact::new("secrecy_map", &[xn, yn, zn, "stream", "outage", "in_zone", "status"]);
    art.note("status: 0 = ok, 1 = eavesdropper inside the users' span (outage 1), 2 = evaluation failed (outage nan)");
    let mut summary =
        CsvArtifact::new("secrecy_map_summary", &["stream", "rate", "epsilon", "cells", "zone_cells", "high_outage_cells", "failed_cells"]);
    summary.note("high_outage_cells counts cells with outage > 0.5");
    for &m in &cfg.streams {
        let cells = secrecy_map(&sc, &st, m, &positions, rate, cfg.outage.epsilon, &ctrl);
        let mut failed = 0usize;
        for (p, c) in pts.iter().zip(&cells) {
            let status = match &c.status {
                CellStatus::Ok => 0.0,
                CellStatus::Degenerate => 1.0,
                CellStatus::Failed(msg) => {
                    failed += 1;
                    log::warn!("secrecy map cell {p:?}: {msg}");
                    2.0
                }
            };
            art.push(vec![p[0], p[1], p[2], m as f64, c.outage, c.in_zone as u8 as f64, status]);
        }
        let zone = cells.iter().filter(|c| c.in_zone).count();
        let high = cells.iter().filter(|c| c.outage > 0.5).count();
        summary.push(vec![m as f64, rate, cfg.outage.epsilon, cells.len() as f64, zone as f64, high as f64, failed as f64]);
    }
    Ok(RunOutput { artifacts: vec![art, summary], passed: true })
}

/// Built-in oracle suite on the configured scenario.
fn validate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = cfg.base_scenario();
    let (sc, st) = design_point(&base, &los_users(&base)?, &PowerPoint::from_config(cfg))?;
    let seed = derive_seed(cfg.seed, &[PHASE_VALIDATE]);
    let slots = cfg.slots;
    let m_users = sc.n_users();
    let mut art = CsvArtifact::new("validate", &["check", "value", "threshold", "pass"]);
    for n in [
        "0: artificial-noise second moment, relative Frobenius error of the closed form vs slot average",
        "1: zero-forcing exactness, max ||H_M^H W(k) - B_M|| / ||B_M||",
        "2: power feasibility, max ||F W(k)||^2 / P_t",
        "3: doubly non-central F density, max |integral - 1| over a parameter grid",
        "4: outage cross-check, max |analytic - empirical| over rates and streams",
        "checks 0 and 4 use a slot-invariant xi; under the exact rule that is the slot mean of the exact xi",
    ] {
        art.note(n);
    }

    // ZF exactness and power feasibility under the configured rule
    let (zf, pw, xi_sum) = (0..slots.div_ceil(1024))
        .into_par_iter()
        .map(|b| {
            let (mut zf, mut pw, mut xs) = (0.0f64, 0.0f64, 0.0f64);
            for k in b * 1024..((b + 1) * 1024).min(slots) {
                let d = slot_draw(&st, seed, k)?;
                let w = st.slot_with_xi(&d.w_an, d.xi, k);
                zf = zf.max(st.zf_residual(&w.w));
                pw = pw.max(w.transmit_power(st.f()) / st.p_t);
                xs += d.xi;
            }
            Ok((zf, pw, xs))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0f64, 0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1), a.2 + b.2));
    let power_limit = if st.rule == XiRule::Exact { 1.0 + 1e-6 } else { 1.0 };
    let fixed = if st.rule == XiRule::Exact { st.with_xi(xi_sum / slots as f64) } else { st.clone() };

    // second moment of the AN part
    let an_sum = (0..slots.div_ceil(1024))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![CMat::zeros(fixed.n_rf(), fixed.n_rf()); m_users];
            for k in b * 1024..((b + 1) * 1024).min(slots) {
                let d = slot_draw(&fixed, seed, k)?;
                let w = fixed.slot_with_xi(&d.w_an, d.xi, k).w - &fixed.w_static;
                for (m, a) in acc.iter_mut().enumerate() {
                    let c = w.column(m);
                    *a += &c * c.adjoint();
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .reduce(|mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
        .unwrap_or_default();
    let mut second = 0.0f64;
    for (m, s) in an_sum.iter().enumerate() {
        let w = fixed.w_static.column(m);
        let closed = avg_outer_product(&fixed, m) - &w * w.adjoint();
        second = second.max(frob(&(s.scale(1.0 / slots as f64) - &closed)) / frob(&closed));
    }

    let ctrl = SeriesControl::default();
    let mut dncf_err = 0.0f64;
    for &(l1, l2, m) in &[(0.0, 0.0, 2usize), (1.0, 2.0, 3), (10.0, 3.0, 2), (40.0, 80.0, 4)] {
        let total = integrate_semi_infinite(|s| dncf_scaled_pdf(s, l1, l2, m, &ctrl), 1e-10)?;
        dncf_err = dncf_err.max((total - 1.0).abs());
    }

    let rates = [1.0, 3.0];
    let mut outage_err = 0.0f64;
    for m in 0..m_users {
        let Ok((hu, he)) = user_eve_channels(&sc, m) else { continue };
        let params = match eve_sinr_params(&he, &fixed, m) {
            Ok(p) => p,
            Err(Error::DegenerateNullSpace { .. }) => continue,
            Err(e) => return Err(e),
        };
        let emp = SecrecyLink::new(&fixed, &hu, &he, m, sc.noise_power, 0.0).outage(&fixed, &rates, slots, seed)?;
        for (r, e) in rates.iter().zip(emp) {
            let a = secrecy_outage(*r, sc.symbol_gains[m], sc.noise_sd(), &params, m_users, &ctrl)?;
            outage_err = outage_err.max((a - e).abs());
        }
    }

    let checks = [(second, 0.02), (zf, 1e-9), (pw, power_limit), (dncf_err, 1e-4), (outage_err, 0.01)];
    let mut passed = true;
    for (i, (v, t)) in checks.iter().enumerate() {
        let ok = v <= t;
        passed &= ok;
        art.push(vec![i as f64, *v, *t, ok as u8 as f64]);
    }
    Ok(RunOutput { artifacts: vec![art], passed })
}
