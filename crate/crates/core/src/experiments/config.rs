//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `[experiment]`, `[array]`,
//! `[positions]`, `[[scatterers]]`, `[power]`, `[modulation]`, `[grid]`,
//! `[sweep]`, `[outage]` and `[multipath]`. See `configs/*.toml` for
//! annotated examples. Positions default to Fraunhofer-distance units.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{fraunhofer_distance, ArrayGeometry, Position3, Scatterer, Scenario};
use crate::montecarlo::ModulationScheme;
use crate::precoding::AnalogMode;
use crate::{Error, Result};

/// Annotated full-scale (40×40) beampattern setup.
pub const FULL_PRESET: &str = include_str!("../../../../configs/full_scale.toml");
/// Multi-path sum-rate setup with the seven reference scatterers.
pub const MULTIPATH_PRESET: &str = include_str!("../../../../configs/multipath_scatterers.toml");

/// Built-in desk-scale config for each experiment kind.
pub fn preset(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Beampattern => include_str!("../../../../configs/beampattern.toml"),
        ExperimentKind::Constellation => include_str!("../../../../configs/constellation.toml"),
        ExperimentKind::BerGrid => include_str!("../../../../configs/ber_grid.toml"),
        ExperimentKind::BerSweep => include_str!("../../../../configs/ber_sweep.toml"),
        ExperimentKind::SameDirection => include_str!("../../../../configs/same_direction.toml"),
        ExperimentKind::SumrateMultipath => MULTIPATH_PRESET,
        ExperimentKind::SecrecyRateSweep => include_str!("../../../../configs/secrecy_rate_sweep.toml"),
        ExperimentKind::OutageCurve => include_str!("../../../../configs/outage_curve.toml"),
        ExperimentKind::SecrecyMap => include_str!("../../../../configs/secrecy_map.toml"),
        ExperimentKind::Validate => include_str!("../../../../configs/validate.toml"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Beampattern,
    Constellation,
    BerGrid,
    BerSweep,
    SameDirection,
    SumrateMultipath,
    SecrecyRateSweep,
    OutageCurve,
    SecrecyMap,
    Validate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        Self::Beampattern,
        Self::Constellation,
        Self::BerGrid,
        Self::BerSweep,
        Self::SameDirection,
        Self::SumrateMultipath,
        Self::SecrecyRateSweep,
        Self::OutageCurve,
        Self::SecrecyMap,
        Self::Validate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Beampattern => "beampattern",
            Self::Constellation => "constellation",
            Self::BerGrid => "ber-grid",
            Self::BerSweep => "ber-sweep",
            Self::SameDirection => "same-direction",
            Self::SumrateMultipath => "sumrate-multipath",
            Self::SecrecyRateSweep => "secrecy-rate-sweep",
            Self::OutageCurve => "outage-curve",
            Self::SecrecyMap => "secrecy-map",
            Self::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    #[default]
    Fraunhofer,
    Meters,
}

/// How `P_t` is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmitSpec {
    Dbm(f64),
    Watts(f64),
    /// Multiple of the static-part power `||F W_static||²`.
    StaticMultiple(f64),
}

/// How the symbol gains `β_m` are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainSpec {
    /// `β = σ sqrt(SINR)` for every user.
    SinrDb(f64),
    Explicit(Vec<f64>),
    /// Equal gains scaled so that `||F W_static||² = fraction · P_t`.
    StaticFraction(f64),
}

/// How `ξ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiSpec {
    Bound,
    Exact,
    Fixed(f64),
    /// `ξ = fraction · sqrt(P_t) / ((1+sqrt M) N_RF sqrt(MN))`, independent of the gains.
    Budget(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    pub noise_dbm: f64,
    pub transmit: TransmitSpec,
    pub gains: GainSpec,
    pub xi: XiSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    X,
    Y,
    Z,
}

/// Rectangular grid on an axis-aligned plane, in position units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub plane: Plane,
    pub offset: f64,
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
    pub nu: usize,
    pub nv: usize,
}

impl GridSpec {
    /// Grid points in position units, `u` fastest.
    pub fn points(&self) -> Vec<[f64; 3]> {
        let lin = |r: [f64; 2], n: usize, i: usize| {
            if n == 1 {
                0.5 * (r[0] + r[1])
            } else {
                r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.nu * self.nv);
        for j in 0..self.nv {
            for i in 0..self.nu {
                let (u, v) = (lin(self.u_range, self.nu, i), lin(self.v_range, self.nv, j));
                out.push(match self.plane {
                    Plane::Z => [u, v, self.offset],
                    Plane::X => [self.offset, u, v],
                    Plane::Y => [u, self.offset, v],
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageSpec {
    pub rates: Vec<f64>,
    pub epsilon: f64,
    /// Empirical slots per point in the outage curve; 0 skips the simulation.
    pub empirical_slots: usize,
    pub series_cap: usize,
}

impl Default for OutageSpec {
    fn default() -> Self {
        Self { rates: vec![5.0], epsilon: 0.1, empirical_slots: 0, series_cap: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathSpec {
    /// Path counts to evaluate (the first `L` scatterers are used).
    pub paths: Vec<usize>,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub slots: usize,
    pub trials: usize,
    pub streams: Vec<usize>,
    pub geometry: ArrayGeometry,
    pub n_rf: usize,
    pub analog: AnalogMode,
    pub units: Units,
    /// Length of one position unit in meters.
    pub unit_m: f64,
    pub users: Vec<Position3>,
    pub eavesdroppers: Vec<Position3>,
    /// `None` variance means unit average link power per receiver.
    pub scatterers: Vec<(Position3, Option<f64>)>,
    pub modulations: Vec<ModulationScheme>,
    pub power: PowerSpec,
    pub grid: Option<GridSpec>,
    pub sweep: Option<SweepSpec>,
    pub outage: OutageSpec,
    pub multipath: Option<MultipathSpec>,
}

impl ExperimentConfig {
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.power.noise_dbm)
    }

    pub fn to_position(&self, p: [f64; 3]) -> Position3 {
        Position3::new(p[0] * self.unit_m, p[1] * self.unit_m, p[2] * self.unit_m)
    }

    /// Scenario with placeholder power values; runners resolve power per point.
    pub fn base_scenario(&self) -> Scenario {
        let m = self.users.len();
        Scenario {
            geometry: self.geometry,
            users: self.users.clone(),
            eavesdroppers: self.eavesdroppers.clone(),
            scatterers: self
                .scatterers
                .iter()
                .map(|(p, v)| Scatterer { position: *p, variance: v.unwrap_or(1.0) })
                .collect(),
            n_rf: self.n_rf,
            analog: self.analog,
            noise_power: self.noise_power(),
            transmit_power: 1.0,
            symbol_gains: vec![1.0; m],
            modulations: self.modulations.clone(),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = self.base_scenario().validate();
        if self.slots == 0 {
            v.push("experiment.slots must be >= 1".into());
        }
        if self.trials == 0 {
            v.push("experiment.trials must be >= 1".into());
        }
        for &s in &self.streams {
            if s >= self.users.len() {
                v.push(format!("stream {s} out of range for {} users", self.users.len()));
            }
        }
        for m in &self.modulations {
            v.extend(m.validate());
        }
        if let GainSpec::Explicit(g) = &self.power.gains {
            if g.len() != self.users.len() {
                v.push(format!("power.symbol_gains has {} entries for {} users", g.len(), self.users.len()));
            }
        }
        if let Some(g) = &self.grid {
            if g.nu == 0 || g.nv == 0 {
                v.push("grid resolution must be >= 1 in both directions".into());
            }
        }
        if !(self.outage.epsilon > 0.0 && self.outage.epsilon < 1.0) {
            v.push("outage.epsilon must lie in (0, 1)".into());
        }
        let needs_grid = matches!(self.kind, ExperimentKind::Beampattern | ExperimentKind::BerGrid | ExperimentKind::SecrecyMap);
        if needs_grid && self.grid.is_none() {
            v.push(format!("{} needs a [grid] section", self.kind.name()));
        }
        let needs_eves = matches!(
            self.kind,
            ExperimentKind::SameDirection | ExperimentKind::SecrecyRateSweep | ExperimentKind::OutageCurve
        );
        if needs_eves && self.eavesdroppers.is_empty() {
            v.push(format!("{} needs at least one eavesdropper", self.kind.name()));
        }
        if self.kind == ExperimentKind::SumrateMultipath && self.scatterers.is_empty() {
            v.push("sumrate-multipath needs [[scatterers]]".into());
        }
        v
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

// ---- raw file schema ----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    experiment: Option<RawExperiment>,
    array: Option<RawArray>,
    positions: Option<RawPositions>,
    #[serde(default)]
    scatterers: Vec<RawScatterer>,
    power: Option<RawPower>,
    modulation: Option<RawModulation>,
    grid: Option<GridSpec>,
    sweep: Option<SweepSpec>,
    outage: Option<RawOutage>,
    multipath: Option<MultipathSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: Option<ExperimentKind>,
    seed: Option<u64>,
    slots: Option<usize>,
    trials: Option<usize>,
    streams: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    rows: usize,
    cols: usize,
    carrier_hz: f64,
    spacing_m: Option<f64>,
    n_rf: usize,
    #[serde(default)]
    analog: AnalogMode,
    fraunhofer_reference: Option<[usize; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPositions {
    #[serde(default)]
    units: Units,
    users: Vec<[f64; 3]>,
    #[serde(default)]
    eavesdroppers: Vec<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScatterer {
    position: [f64; 3],
    variance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawXi {
    Name(String),
    Value(f64),
    Budget { budget: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    noise_dbm: f64,
    transmit_dbm: Option<f64>,
    transmit_w: Option<f64>,
    transmit_static_multiple: Option<f64>,
    user_sinr_db: Option<f64>,
    symbol_gains: Option<Vec<f64>>,
    static_fraction: Option<f64>,
    xi: Option<RawXi>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModulation {
    schemes: Vec<ModulationScheme>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutage {
    rates: Option<Vec<f64>>,
    epsilon: Option<f64>,
    empirical_slots: Option<usize>,
    series_cap: Option<usize>,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub kind: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub slots: Option<usize>,
    pub trials: Option<usize>,
    pub grid: Option<(usize, usize)>,
    pub full_scale: bool,
}

fn pick_one<T: Copy>(opts: &[(&str, Option<T>)], section: &str, errs: &mut Vec<String>) -> Option<T> {
    let given: Vec<_> = opts.iter().filter(|(_, v)| v.is_some()).collect();
    match given.len() {
        1 => given[0].1,
        0 => {
            let names: Vec<_> = opts.iter().map(|(n, _)| format!("{section}.{n}")).collect();
            errs.push(format!("one of {} is required", names.join(", ")));
            None
        }
        _ => {
            let names: Vec<_> = given.iter().map(|(n, _)| format!("{section}.{n}")).collect();
            errs.push(format!("only one of {} may be given", names.join(", ")));
            None
        }
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str, ov: &Overrides) -> Result<ExperimentConfig> {
    let raw: RawFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut errs = Vec::new();
    let exp = raw.experiment.unwrap_or_default();
    let kind = ov.kind.or(exp.kind);
    let seed = ov.seed.or(exp.seed);
    if kind.is_none() {
        errs.push("experiment.kind is required".into());
    }
    if seed.is_none() {
        errs.push("experiment.seed is required (no implicit entropy)".into());
    }
    let Some(array) = raw.array else {
        errs.push("[array] section is required".into());
        return Err(Error::Validation(errs));
    };
    let Some(pos) = raw.positions else {
        errs.push("[positions] section is required".into());
        return Err(Error::Validation(errs));
    };
    let Some(power) = raw.power else {
        errs.push("[power] section is required".into());
        return Err(Error::Validation(errs));
    };
    let (rows, cols, n_rf) = if ov.full_scale { (40, 40, 40) } else { (array.rows, array.cols, array.n_rf) };
    let mk = |r: usize, c: usize| match array.spacing_m {
        Some(s) => ArrayGeometry { n_rows: r, n_cols: c, spacing: s, carrier: array.carrier_hz },
        None => ArrayGeometry::half_wavelength(r, c, array.carrier_hz),
    };
    let geometry = mk(rows, cols);
    let unit_m = match pos.units {
        Units::Meters => 1.0,
        Units::Fraunhofer => {
            let reference = array.fraunhofer_reference.map_or(geometry, |[r, c]| mk(r, c));
            if reference.validate().is_empty() {
                fraunhofer_distance(&reference)
            } else {
                errs.push("Fraunhofer unit needs a valid reference array".into());
                1.0
            }
        }
    };
    let to_pos = |p: &[f64; 3]| Position3::new(p[0] * unit_m, p[1] * unit_m, p[2] * unit_m);
    let transmit = pick_one(
        &[
            ("transmit_dbm", power.transmit_dbm.map(TransmitSpec::Dbm)),
            ("transmit_w", power.transmit_w.map(TransmitSpec::Watts)),
            ("transmit_static_multiple", power.transmit_static_multiple.map(TransmitSpec::StaticMultiple)),
        ],
        "power",
        &mut errs,
    );
    let gains = {
        let given = [power.user_sinr_db.is_some(), power.symbol_gains.is_some(), power.static_fraction.is_some()];
        match given.iter().filter(|g| **g).count() {
            1 => Some(if let Some(s) = power.user_sinr_db {
                GainSpec::SinrDb(s)
            } else if let Some(g) = power.symbol_gains.clone() {
                GainSpec::Explicit(g)
            } else {
                GainSpec::StaticFraction(power.static_fraction.unwrap())
            }),
            0 => {
                errs.push("one of power.user_sinr_db, power.symbol_gains, power.static_fraction is required".into());
                None
            }
            _ => {
                errs.push("only one of power.user_sinr_db, power.symbol_gains, power.static_fraction may be given".into());
                None
            }
        }
    };
    let xi = match power.xi {
        None => XiSpec::Bound,
        Some(RawXi::Value(v)) => XiSpec::Fixed(v),
        Some(RawXi::Budget { budget }) => XiSpec::Budget(budget),
        Some(RawXi::Name(n)) => match n.as_str() {
            "bound" => XiSpec::Bound,
            "exact" => XiSpec::Exact,
            other => {
                errs.push(format!("power.xi: unknown rule {other:?} (expected \"bound\", \"exact\", a number or {{ budget = f }})"));
                XiSpec::Bound
            }
        },
    };
    if let Some(TransmitSpec::StaticMultiple(_)) = transmit {
        if matches!(gains, Some(GainSpec::StaticFraction(_))) {
            errs.push("power.transmit_static_multiple cannot be combined with power.static_fraction".into());
        }
    }
    let m = pos.users.len();
    let modulations = raw.modulation.map(|r| r.schemes).unwrap_or_else(|| vec![ModulationScheme::qpsk(); m]);
    let out = raw.outage.unwrap_or_default();
    let d = OutageSpec::default();
    let mut grid = raw.grid;
    if let (Some(g), Some((nu, nv))) = (grid.as_mut(), ov.grid) {
        g.nu = nu;
        g.nv = nv;
    }
    let (Some(kind), Some(seed), Some(transmit), Some(gains)) = (kind, seed, transmit, gains) else {
        return Err(Error::Validation(errs));
    };
    let cfg = ExperimentConfig {
        kind,
        seed,
        slots: ov.slots.or(exp.slots).unwrap_or(1000),
        trials: ov.trials.or(exp.trials).unwrap_or(1),
        streams: exp.streams.unwrap_or_else(|| (0..m).collect()),
        geometry,
        n_rf,
        analog: array.analog,
        units: pos.units,
        unit_m,
        users: pos.users.iter().map(to_pos).collect(),
        eavesdroppers: pos.eavesdroppers.iter().map(to_pos).collect(),
        scatterers: raw.scatterers.iter().map(|s| (to_pos(&s.position), s.variance)).collect(),
        modulations,
        power: PowerSpec { noise_dbm: power.noise_dbm, transmit, gains, xi },
        grid,
        sweep: raw.sweep,
        outage: OutageSpec {
            rates: out.rates.unwrap_or(d.rates),
            epsilon: out.epsilon.unwrap_or(d.epsilon),
            empirical_slots: out.empirical_slots.unwrap_or(d.empirical_slots),
            series_cap: out.series_cap.unwrap_or(d.series_cap),
        },
        multipath: raw.multipath,
    };
    errs.extend(cfg.validate());
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(errs))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, ov: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text, ov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_preset_resolves_paper_positions() {
        let c = parse_config(FULL_PRESET, &Overrides::default()).unwrap();
        let d = fraunhofer_distance(&c.geometry);
        assert!((d - 16.285_154_593_5).abs() < 1e-6);
        let u = c.users[0];
        assert!((u.x + 0.3 * d).abs() < 1e-12 && (u.y - 0.5 * d).abs() < 1e-12 && (u.z - 0.55 * d).abs() < 1e-12);
        let u = c.users[1];
        assert!((u.x - 0.2 * d).abs() < 1e-12 && (u.y - 0.3 * d).abs() < 1e-12 && (u.z - 0.55 * d).abs() < 1e-12);
        assert_eq!(c.n_rf, 40);
    }

    #[test]
    fn shipped_presets_parse() {
        parse_config(FULL_PRESET, &Overrides::default()).unwrap();
        for kind in ExperimentKind::ALL {
            let c = parse_config(preset(kind), &Overrides::default()).unwrap();
            assert_eq!(c.kind, kind);
        }
    }

    #[test]
    fn missing_seed_is_a_validation_error() {
        let text = preset(ExperimentKind::Beampattern).replace("seed = ", "# seed = ");
        match parse_config(&text, &Overrides::default()) {
            Err(Error::Validation(v)) => assert!(v.iter().any(|s| s.contains("seed"))),
            other => panic!("{other:?}"),
        }
        assert!(parse_config(&text, &Overrides { seed: Some(3), ..Overrides::default() }).is_ok());
    }

    #[test]
    fn too_few_rf_chains_is_a_validation_error() {
        let text = preset(ExperimentKind::Beampattern).replace("n_rf = 16", "n_rf = 1");
        match parse_config(&text, &Overrides::default()) {
            Err(Error::Validation(v)) => assert!(v.iter().any(|s| s.contains("n_rf"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let text = "[experiment]\nseed = 1\nkind = \n";
        match parse_config(text, &Overrides::default()) {
            Err(Error::Parse(msg)) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let text = preset(ExperimentKind::Beampattern).replace("[power]", "[power]\nbogus_key = 1");
        match parse_config(&text, &Overrides::default()) {
            Err(Error::Parse(msg)) => assert!(msg.contains("bogus_key"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_apply() {
        let ov = Overrides { full_scale: true, grid: Some((5, 7)), slots: Some(3), ..Overrides::default() };
        let c = parse_config(preset(ExperimentKind::Beampattern), &ov).unwrap();
        assert_eq!((c.geometry.n_rows, c.geometry.n_cols, c.n_rf, c.slots), (40, 40, 40, 3));
        let g = c.grid.unwrap();
        assert_eq!((g.nu, g.nv), (5, 7));
    }

    #[test]
    fn grid_points_cover_the_ranges() {
        let g = GridSpec { plane: Plane::Z, offset: 0.55, u_range: [-1.0, 1.0], v_range: [0.0, 2.0], nu: 3, nv: 2 };
        let p = g.points();
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], [-1.0, 0.0, 0.55]);
        assert_eq!(p[2], [1.0, 0.0, 0.55]);
        assert_eq!(p[5], [1.0, 2.0, 0.55]);
    }
}
