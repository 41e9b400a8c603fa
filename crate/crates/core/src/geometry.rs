//! Planar array geometry and near-field channels.
//!
//! Channel vectors are stored so that `h.adjoint() * f` is the received
//! baseband gain of a transmit vector `f`: entry `(i, l)` holds
//! `A_{i,l}(r) * exp(+j k_c |r - s_{i,l}|)`, and the conjugate transpose
//! restores the `exp(-j k_c |r - s|)` propagation phase. Elements are ordered
//! row-major (row `i` outer, column `l` inner) everywhere in the crate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, CVec};
use crate::montecarlo::ModulationScheme;
use crate::precoding::AnalogMode;
use crate::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const ORIGIN: Position3 = Position3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.distance(&Position3::ORIGIN)
    }

    pub fn scale(&self, c: f64) -> Position3 {
        Position3::new(self.x * c, self.y * c, self.z * c)
    }

    pub fn add(&self, o: &Position3) -> Position3 {
        Position3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Uniform planar array in the `xy` plane, centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Rows (vertical, `y` direction).
    pub n_rows: usize,
    /// Columns (horizontal, `x` direction).
    pub n_cols: usize,
    /// Element spacing in meters.
    pub spacing: f64,
    /// Carrier frequency in hertz.
    pub carrier: f64,
}

impl ArrayGeometry {
    /// Square array with half-wavelength spacing.
    pub fn half_wavelength(n_rows: usize, n_cols: usize, carrier: f64) -> Self {
        let spacing = 0.5 * SPEED_OF_LIGHT / carrier;
        Self { n_rows, n_cols, spacing, carrier }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_rows < 1 {
            v.push("geometry.n_rows must be >= 1".into());
        }
        if self.n_cols < 1 {
            v.push("geometry.n_cols must be >= 1".into());
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            v.push("geometry.spacing must be > 0".into());
        }
        if !(self.carrier > 0.0 && self.carrier.is_finite()) {
            v.push("geometry.carrier must be > 0".into());
        }
        v
    }

    pub fn n_elements(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength()
    }

    /// Side length `max(N_d - 1, N_e - 1) * d`.
    pub fn side_length(&self) -> f64 {
        (self.n_rows.max(self.n_cols) - 1) as f64 * self.spacing
    }
}

/// Element positions, row-major.
pub fn element_positions(geom: &ArrayGeometry) -> Vec<Position3> {
    let d = geom.spacing;
    let x0 = (geom.n_cols as f64 + 1.0) / 2.0;
    let y0 = (geom.n_rows as f64 + 1.0) / 2.0;
    let mut out = Vec::with_capacity(geom.n_elements());
    for i in 1..=geom.n_rows {
        let y = (i as f64 - y0) * d;
        for l in 1..=geom.n_cols {
            out.push(Position3::new((l as f64 - x0) * d, y, 0.0));
        }
    }
    out
}

/// `2 D^2 / λ` with aperture `D = sqrt(2) L`.
pub fn fraunhofer_distance(geom: &ArrayGeometry) -> f64 {
    let aperture = std::f64::consts::SQRT_2 * geom.side_length();
    2.0 * aperture * aperture / geom.wavelength()
}

/// Free-space amplitude `λ / (4π r)`.
pub fn path_amplitude(geom: &ArrayGeometry, dist: f64) -> f64 {
    geom.wavelength() / (4.0 * PI * dist)
}

/// Spherical-wave line-of-sight channel from the array to `r`.
pub fn los_channel(geom: &ArrayGeometry, r: &Position3) -> Result<CVec> {
    let k = geom.wavenumber();
    let elems = element_positions(geom);
    let mut h = CVec::zeros(elems.len());
    for (idx, s) in elems.iter().enumerate() {
        let dist = r.distance(s);
        if dist == 0.0 {
            return Err(Error::CoincidentPosition { index: idx });
        }
        h[idx] = Complex64::from_polar(path_amplitude(geom, dist), k * dist);
    }
    Ok(h)
}

/// Scattering point with a circularly-symmetric Gaussian reflection coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Position3,
    /// Variance of the reflection coefficient.
    pub variance: f64,
}

/// Scatterer-to-user coefficient: free-space gain with propagation phase.
pub fn scatterer_link_gain(geom: &ArrayGeometry, scat: &Scatterer, r_user: &Position3) -> Result<Complex64> {
    let dist = scat.position.distance(r_user);
    if dist == 0.0 {
        return Err(Error::CoincidentPosition { index: usize::MAX });
    }
    Ok(Complex64::from_polar(path_amplitude(geom, dist), -geom.wavenumber() * dist))
}

/// One draw of the multi-path channel: LoS plus Gaussian-weighted scatterer paths.
pub fn sample_multipath_channel<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    r_user: &Position3,
    scatterers: &[Scatterer],
    rng: &mut R,
) -> Result<CVec> {
    let mut h = los_channel(geom, r_user)?;
    for scat in scatterers {
        let link = scatterer_link_gain(geom, scat, r_user)?;
        let sd = (scat.variance / 2.0).sqrt();
        let normal = Normal::new(0.0, sd).map_err(|e| Error::Domain(e.to_string()))?;
        let alpha = Complex64::new(normal.sample(rng), normal.sample(rng));
        let hs = los_channel(geom, &scat.position)?;
        h.axpy(alpha * link, &hs, Complex64::new(1.0, 0.0));
    }
    Ok(h)
}

/// Covariance of the scattered part, `Σ σ_l² |h_l|² h(r_l) h(r_l)^H`.
pub fn multipath_covariance(geom: &ArrayGeometry, r_user: &Position3, scatterers: &[Scatterer]) -> Result<CMat> {
    let n = geom.n_elements();
    let mut r = CMat::zeros(n, n);
    for scat in scatterers {
        let link = scatterer_link_gain(geom, scat, r_user)?;
        let hs = los_channel(geom, &scat.position)?;
        let w = scat.variance * link.norm_sqr();
        r.gerc(Complex64::new(w, 0.0), &hs, &hs, Complex64::new(1.0, 0.0));
    }
    Ok(r)
}

/// A complete single-cell experiment input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub users: Vec<Position3>,
    pub eavesdroppers: Vec<Position3>,
    #[serde(default)]
    pub scatterers: Vec<Scatterer>,
    pub n_rf: usize,
    #[serde(default)]
    pub analog: AnalogMode,
    /// Noise power `σ²` in watts.
    pub noise_power: f64,
    /// Transmit power budget `P_t` in watts.
    pub transmit_power: f64,
    /// Diagonal of `B_M`.
    pub symbol_gains: Vec<f64>,
    pub modulations: Vec<ModulationScheme>,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_power.sqrt()
    }

    /// Effective RF-chain count (`N` in fully-digital mode).
    pub fn rf_chains(&self) -> usize {
        match self.analog {
            AnalogMode::Hybrid => self.n_rf,
            AnalogMode::FullyDigital => self.geometry.n_elements(),
        }
    }

    /// All violated invariants; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = self.geometry.validate();
        let m = self.users.len();
        let n = self.geometry.n_elements();
        if m == 0 {
            v.push("at least one user is required".into());
        }
        if self.analog == AnalogMode::Hybrid {
            if self.n_rf < m {
                v.push(format!("n_rf ({}) must be >= number of users ({m})", self.n_rf));
            }
            if self.n_rf > n {
                v.push(format!("n_rf ({}) must be <= number of elements ({n})", self.n_rf));
            }
        } else if m > n {
            v.push(format!("number of users ({m}) exceeds number of elements ({n})"));
        }
        if !(self.noise_power > 0.0) {
            v.push("noise power must be > 0".into());
        }
        if !(self.transmit_power > 0.0) {
            v.push("transmit power must be > 0".into());
        }
        if self.symbol_gains.len() != m {
            v.push(format!("expected {m} symbol gains, got {}", self.symbol_gains.len()));
        }
        if self.symbol_gains.iter().any(|b| !(*b > 0.0)) {
            v.push("all symbol gains must be > 0".into());
        }
        if self.modulations.len() != m {
            v.push(format!("expected {m} modulation schemes, got {}", self.modulations.len()));
        }
        for (i, p) in self.users.iter().chain(&self.eavesdroppers).enumerate() {
            if !p.is_finite() {
                v.push(format!("position #{i} is not finite"));
            }
        }
        for (i, s) in self.scatterers.iter().enumerate() {
            if !(s.variance > 0.0) {
                v.push(format!("scatterer #{i} variance must be > 0"));
            }
        }
        v
    }
}

/// Channels for one scenario realisation.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Users' channels as columns (`N × M`).
    pub h_u: CMat,
    /// Eavesdroppers' channels.
    pub eves: Vec<CVec>,
    /// Scattered-part covariance per user, when scatterers are present.
    pub covariance: Option<Vec<CMat>>,
    /// LoS means per user.
    pub los_means: Option<Vec<CVec>>,
}

impl ChannelSet {
    /// Deterministic line-of-sight channels for all users and eavesdroppers.
    pub fn los(scenario: &Scenario) -> Result<Self> {
        let h_u = stack_columns(&scenario.users.iter().map(|u| los_channel(&scenario.geometry, u)).collect::<Result<Vec<_>>>()?);
        let eves = scenario
            .eavesdroppers
            .iter()
            .map(|e| los_channel(&scenario.geometry, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { h_u, eves, covariance: None, los_means: None })
    }

    /// One multi-path draw for users and eavesdroppers.
    pub fn multipath<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<Self> {
        let g = &scenario.geometry;
        let users = scenario
            .users
            .iter()
            .map(|u| sample_multipath_channel(g, u, &scenario.scatterers, rng))
            .collect::<Result<Vec<_>>>()?;
        let eves = scenario
            .eavesdroppers
            .iter()
            .map(|e| sample_multipath_channel(g, e, &scenario.scatterers, rng))
            .collect::<Result<Vec<_>>>()?;
        let means = scenario.users.iter().map(|u| los_channel(g, u)).collect::<Result<Vec<_>>>()?;
        let cov = scenario
            .users
            .iter()
            .map(|u| multipath_covariance(g, u, &scenario.scatterers))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { h_u: stack_columns(&users), eves, covariance: Some(cov), los_means: Some(means) })
    }
}

pub fn stack_columns(cols: &[CVec]) -> CMat {
    let n = cols.first().map_or(0, |c| c.len());
    CMat::from_fn(n, cols.len(), |i, j| cols[j][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, norm_sq};
    use crate::rng;

    fn geom(n: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(n, n, 28e9)
    }

    #[test]
    fn single_element_sits_at_origin() {
        let p = element_positions(&ArrayGeometry { n_rows: 1, n_cols: 1, spacing: 0.3, carrier: 1e9 });
        assert_eq!(p, vec![Position3::ORIGIN]);
    }

    #[test]
    fn pair_is_symmetric() {
        let p = element_positions(&ArrayGeometry { n_rows: 1, n_cols: 2, spacing: 0.01, carrier: 1e9 });
        assert!((p[0].x + 0.005).abs() < 1e-15 && (p[1].x - 0.005).abs() < 1e-15);
        assert!(p.iter().all(|e| e.y == 0.0 && e.z == 0.0));
    }

    #[test]
    fn forty_by_forty_span() {
        let g = geom(40);
        let p = element_positions(&g);
        let xmax = p.iter().map(|e| e.x).fold(f64::MIN, f64::max);
        let xmin = p.iter().map(|e| e.x).fold(f64::MAX, f64::min);
        assert!((xmax - 19.5 * g.spacing).abs() < 1e-15);
        assert!((xmax - xmin - 0.208784).abs() < 1e-5);
        // row-major: second element moves along x
        assert!(p[1].x > p[0].x && p[1].y == p[0].y);
    }

    #[test]
    fn fraunhofer_values() {
        assert!((fraunhofer_distance(&geom(40)) - 16.285_154_593_5).abs() < 1e-8);
        assert!((fraunhofer_distance(&geom(20)) - 3.865_181_333_5).abs() < 1e-8);
        assert_eq!(fraunhofer_distance(&geom(1)), 0.0);
        let a = ArrayGeometry { n_rows: 8, n_cols: 20, spacing: 0.004, carrier: 3e10 };
        let b = ArrayGeometry { n_rows: 20, n_cols: 8, ..a };
        assert_eq!(fraunhofer_distance(&a), fraunhofer_distance(&b));
    }

    #[test]
    fn los_single_element_magnitude() {
        let g = geom(1);
        let h = los_channel(&g, &Position3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((h[0].norm() - 8.520_259_212_923_111e-4).abs() < 1e-17);
    }

    #[test]
    fn los_norm_is_sum_of_squared_amplitudes() {
        let g = geom(6);
        let r = Position3::new(0.3, -0.2, 1.7);
        let h = los_channel(&g, &r).unwrap();
        let expect: f64 = element_positions(&g).iter().map(|s| path_amplitude(&g, r.distance(s)).powi(2)).sum();
        assert!((norm_sq(&h) - expect).abs() <= 1e-14 * expect);
        // h^H h is real positive
        let ip = h.dotc(&h);
        assert!(ip.re > 0.0 && ip.im.abs() < 1e-25);
    }

    #[test]
    fn boresight_symmetry() {
        let g = geom(2);
        let h = los_channel(&g, &Position3::new(0.0, 0.0, 0.7)).unwrap();
        for z in h.iter() {
            assert!((z - h[0]).norm() < 1e-15);
        }
    }

    #[test]
    fn stored_phase_convention() {
        let g = geom(1);
        let dist = 1.234;
        let h = los_channel(&g, &Position3::new(0.0, 0.0, dist)).unwrap();
        // h^H * 1 carries the exp(-j k r) propagation phase
        let rx = h.adjoint() * CVec::from_element(1, Complex64::new(1.0, 0.0));
        let expect = Complex64::from_polar(path_amplitude(&g, dist), -g.wavenumber() * dist);
        assert!((rx[0] - expect).norm() < 1e-15);
    }

    #[test]
    fn coincident_position_is_rejected() {
        let g = geom(2);
        let p = element_positions(&g)[3];
        assert_eq!(los_channel(&g, &p), Err(Error::CoincidentPosition { index: 3 }));
    }

    #[test]
    fn link_gain_inverse_distance() {
        let g = geom(1);
        let s = Scatterer { position: Position3::new(0.0, 0.0, 3.0), variance: 1.0 };
        let a = scatterer_link_gain(&g, &s, &Position3::new(0.0, 1.0, 3.0)).unwrap();
        let b = scatterer_link_gain(&g, &s, &Position3::new(0.0, 2.0, 3.0)).unwrap();
        assert!((a.norm() - g.wavelength() / (4.0 * PI)).abs() < 1e-16);
        assert!((a.norm() / b.norm() - 2.0).abs() < 1e-12);
        let c = scatterer_link_gain(&g, &s, &Position3::new(1.0, 0.0, 3.0)).unwrap();
        assert!((a.norm() - c.norm()).abs() < 1e-18);
    }

    #[test]
    fn no_scatterers_gives_los() {
        let g = geom(3);
        let r = Position3::new(0.1, 0.2, 0.9);
        let mut rng = rng::stream(1, &[]);
        let h = sample_multipath_channel(&g, &r, &[], &mut rng).unwrap();
        assert_eq!(h, los_channel(&g, &r).unwrap());
        assert_eq!(multipath_covariance(&g, &r, &[]).unwrap(), CMat::zeros(9, 9));
    }

    #[test]
    fn single_scatterer_covariance_is_rank_one() {
        let g = geom(3);
        let r = Position3::new(0.1, 0.2, 0.9);
        let s = Scatterer { position: Position3::new(-0.4, 0.1, 1.2), variance: 0.7 };
        let cov = multipath_covariance(&g, &r, &[s]).unwrap();
        let link = scatterer_link_gain(&g, &s, &r).unwrap();
        let hs = los_channel(&g, &s.position).unwrap();
        let tr = cov.trace().re;
        let expect = 0.7 * link.norm_sqr() * norm_sq(&hs);
        assert!((tr - expect).abs() < 1e-12 * expect);
        let ev = hermitian_eigenvalues(&cov);
        assert!(ev.iter().filter(|e| **e > 1e-10 * tr).count() == 1);
    }
}
