//! Physical parameters, the oxygen-dependent growth rate and the initial
//! tumor and oxygen fields.

use crate::error::{Error, Result};
use crate::fem::{FeFunction, FemSpace};

/// Parameters of the tumor–oxygen system. Defaults are the reference values
/// used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Tumor diffusivity.
    pub d_u: f64,
    /// Oxygen diffusivity.
    pub d_sigma: f64,
    /// Carrying capacity.
    pub alpha: f64,
    /// Maximum proliferation rate under normoxia.
    pub rho_hat: f64,
    /// Hypoxia modulation, in `[0, 1]`.
    pub b: f64,
    /// Oxytaxis sensitivity.
    pub chi: f64,
    /// Cytotoxic intensity.
    pub kappa: f64,
    /// Oxygen consumption rate.
    pub a_ox: f64,
    /// Michaelis constant.
    pub k_ox: f64,
    /// Vascular oxygen level.
    pub beta: f64,
    /// Vascular permeability times vascular density.
    pub gamma: f64,
    /// Angiogenic supply rate.
    pub s_c: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            d_u: 2.0,
            d_sigma: 0.02,
            alpha: 4.0,
            rho_hat: 3.5,
            b: 1.0,
            chi: 10.0,
            kappa: 1.0,
            a_ox: 0.6,
            k_ox: 0.1,
            beta: 1.0,
            gamma: 1.0,
            s_c: 0.4,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("D_u", self.d_u),
            ("D_sigma", self.d_sigma),
            ("alpha", self.alpha),
            ("rho_hat", self.rho_hat),
            ("chi", self.chi),
            ("kappa", self.kappa),
            ("A_ox", self.a_ox),
            ("k_ox", self.k_ox),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("S_c", self.s_c),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidArgument(format!("b must lie in [0, 1], got {}", self.b)));
        }
        if self.alpha < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "carrying capacity alpha must be at least 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Growth rate `ρ(σ) = (ρ̂/α)(σ/β + b(1 − σ/β))`, with negative `σ`
    /// clamped to zero.
    pub fn rho(&self, sigma: f64) -> f64 {
        let r = sigma.max(0.0) / self.beta;
        self.rho_hat / self.alpha * (r + self.b * (1.0 - r))
    }

    /// `ρ′ = (ρ̂/α)(1 − b)/β`; the prototype is affine so this does not
    /// depend on `σ`.
    pub fn rho_prime(&self, _sigma: f64) -> f64 {
        self.rho_hat / self.alpha * (1.0 - self.b) / self.beta
    }

    /// Derivative of the clamped growth rate actually used by the scheme:
    /// zero for `σ < 0`.
    pub(crate) fn rho_prime_clamped(&self, sigma: f64) -> f64 {
        if sigma < 0.0 {
            0.0
        } else {
            self.rho_prime(sigma)
        }
    }
}

/// How analytic initial data are transferred to the P1 space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// L² projection `Q^h`.
    #[default]
    L2Projection,
    /// Nodal interpolation.
    Interpolation,
}

fn transfer(space: &FemSpace, mode: InitMode, f: impl Fn([f64; 2]) -> f64) -> Result<FeFunction> {
    match mode {
        InitMode::L2Projection => space.l2_project(f),
        InitMode::Interpolation => Ok(space.interpolate(f)),
    }
}

fn gaussian(p: [f64; 2], c: [f64; 2], width: f64) -> f64 {
    let r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
    (-r2 / (2.0 * width * width)).exp()
}

/// Analytic initial tumor density: a Gaussian of amplitude 0.6 and width
/// `0.1·min(Lx, Ly)` centred on the bounding box.
#[derive(Debug, Clone, Copy)]
pub struct TumorProfile {
    pub center: [f64; 2],
    pub width: f64,
}

impl TumorProfile {
    pub fn for_space(space: &FemSpace) -> Self {
        let bbox = space.mesh().bbox();
        let [lx, ly] = bbox.lengths();
        Self {
            center: bbox.center(),
            width: 0.1 * lx.min(ly),
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        0.6 * gaussian(p, self.center, self.width)
    }
}

/// Analytic initial oxygen: a tumor-depleted background plus two satellite
/// Gaussians of widths `0.08·min L` and `0.025·min L`.
#[derive(Debug, Clone, Copy)]
pub struct OxygenProfile {
    pub tumor: TumorProfile,
    pub beta: f64,
    pub satellites: [[f64; 2]; 2],
    pub widths: [f64; 2],
}

impl OxygenProfile {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let u0 = self.tumor.eval(p);
        0.7 * self.beta * (1.0 - 0.3 * u0)
            + self.beta * gaussian(p, self.satellites[0], self.widths[0])
            + self.beta * gaussian(p, self.satellites[1], self.widths[1])
    }
}

/// Default satellite centres: the domain centre offset by
/// `(0.25 Lx, 0.10 Ly)` and `(−0.20 Lx, −0.15 Ly)`.
pub fn default_satellites(space: &FemSpace) -> [[f64; 2]; 2] {
    let bbox = space.mesh().bbox();
    let [lx, ly] = bbox.lengths();
    let c = bbox.center();
    [
        [c[0] + 0.25 * lx, c[1] + 0.10 * ly],
        [c[0] - 0.20 * lx, c[1] - 0.15 * ly],
    ]
}

pub fn oxygen_profile(space: &FemSpace, beta: f64, satellites: [[f64; 2]; 2]) -> Result<OxygenProfile> {
    let bbox = space.mesh().bbox();
    for (i, s) in satellites.iter().enumerate() {
        if !bbox.contains(*s) {
            return Err(Error::InvalidArgument(format!(
                "satellite centre {} at ({}, {}) lies outside the domain bounding box",
                i + 1,
                s[0],
                s[1]
            )));
        }
    }
    let tumor = TumorProfile::for_space(space);
    let min_len = tumor.width / 0.1;
    Ok(OxygenProfile {
        tumor,
        beta,
        satellites,
        widths: [0.08 * min_len, 0.025 * min_len],
    })
}

pub fn initial_tumor(space: &FemSpace, mode: InitMode) -> Result<FeFunction> {
    let profile = TumorProfile::for_space(space);
    transfer(space, mode, |p| profile.eval(p))
}

pub fn initial_oxygen(
    space: &FemSpace,
    params: &ModelParams,
    satellites: [[f64; 2]; 2],
    mode: InitMode,
) -> Result<FeFunction> {
    let profile = oxygen_profile(space, params.beta, satellites)?;
    transfer(space, mode, |p| profile.eval(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_unit_square;

    #[test]
    fn rho_values() {
        let p = ModelParams::default();
        assert_eq!(p.rho(p.beta), p.rho_hat / p.alpha);
        for s in [0.0, 0.5, 1.0, 3.0] {
            assert_eq!(p.rho(s), 0.875);
        }
        assert_eq!(p.rho_prime(0.3), 0.0);
        let q = ModelParams { b: 0.0, ..p };
        assert_eq!(q.rho(0.0), 0.0);
        assert_eq!(q.rho_prime(0.0), 0.875);
        let half = ModelParams { b: 0.3, ..p };
        assert_eq!(half.rho(half.beta), half.rho_hat / half.alpha);
    }

    #[test]
    fn rho_prime_matches_central_difference() {
        let p = ModelParams { b: 0.35, beta: 1.7, ..Default::default() };
        let h = 1e-5;
        for s in [0.2, 1.0, 4.0] {
            let fd = (p.rho(s + h) - p.rho(s - h)) / (2.0 * h);
            assert!((fd - p.rho_prime(s)).abs() < 1e-8);
        }
    }

    #[test]
    fn rho_is_affine_and_bounded_below() {
        let p = ModelParams { b: 0.4, ..Default::default() };
        let floor = (p.rho_hat / p.alpha * p.b).min(p.rho_hat / p.alpha);
        for i in 0..=1000 {
            let s = 10.0 * p.beta * i as f64 / 1000.0;
            assert!((p.rho(s) - (p.rho(0.0) + p.rho_prime(s) * s)).abs() < 1e-14);
            assert!(p.rho(s) >= floor - 1e-15);
        }
    }

    #[test]
    fn negative_sigma_is_clamped() {
        let p = ModelParams { b: 0.2, ..Default::default() };
        assert_eq!(p.rho(-3.0), p.rho(0.0));
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::default().validate().is_ok());
        assert!(ModelParams { b: 1.5, ..Default::default() }.validate().is_err());
        assert!(ModelParams { alpha: 0.5, ..Default::default() }.validate().is_err());
        assert!(ModelParams { k_ox: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn tumor_profile_values() {
        let s = FemSpace::new(generate_unit_square(4, 4).unwrap());
        let t = TumorProfile::for_space(&s);
        assert_eq!(t.eval([0.5, 0.5]), 0.6);
        let far = t.eval([0.5 + 5.0 * 0.1, 0.5]);
        assert!((far - 0.6 * (-12.5f64).exp()).abs() < 1e-18);
        assert!((far - 2.24e-6).abs() < 1e-8);
        assert!((t.eval([0.3, 0.5]) - t.eval([0.5, 0.7])).abs() < 1e-15);
    }

    #[test]
    fn oxygen_profile_values() {
        let s = FemSpace::new(generate_unit_square(4, 4).unwrap());
        let sat = [[0.9, 0.9], [0.1, 0.9]];
        let o = oxygen_profile(&s, 1.0, sat).unwrap();
        assert!((o.eval([0.05, 0.05]) - 0.7).abs() < 1e-6);
        assert!((o.eval([0.9, 0.9]) - 1.7).abs() < 1e-6);
        let o2 = oxygen_profile(&s, 2.0, sat).unwrap();
        for p in [[0.2, 0.3], [0.5, 0.5], [0.88, 0.91]] {
            assert!((o2.eval(p) - 2.0 * o.eval(p)).abs() < 1e-14);
        }
        assert!(oxygen_profile(&s, 1.0, [[1.2, 0.5], [0.5, 0.5]]).is_err());
    }

    #[test]
    fn initial_fields_nonnegative() {
        let s = FemSpace::new(generate_unit_square(16, 16).unwrap());
        let p = ModelParams::default();
        let sat = default_satellites(&s);
        for mode in [InitMode::Interpolation, InitMode::L2Projection] {
            let u = initial_tumor(&s, mode).unwrap();
            let o = initial_oxygen(&s, &p, sat, mode).unwrap();
            assert!(o.iter().all(|&v| v > 0.0));
            let umax = u.max_abs();
            match mode {
                InitMode::Interpolation => assert!(u.iter().all(|&v| v >= 0.0)),
                InitMode::L2Projection => assert!(u.iter().all(|&v| v > -1e-3 * umax)),
            }
        }
    }
}
