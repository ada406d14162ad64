//! Element stabilization parameters: the scalar SUPG time scale and the
//! residual-based shock-capturing viscosity.

use crate::physics::{sound_speed, FreeStream, GasModel, Grad, PhysicsError, State};

/// Stabilization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationOptions {
    pub supg: bool,
    pub shock_capturing: bool,
    /// Upper bound on the shock-capturing viscosity in units of
    /// `(h/2)(|u| + c)`.
    pub clamp_factor: f64,
}

impl Default for StabilizationOptions {
    fn default() -> Self {
        Self { supg: true, shock_capturing: true, clamp_factor: 1.0 }
    }
}

/// Frozen per-element parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElementTaus {
    /// SUPG scalar (the matrix is `tau * I`).
    pub tau: f64,
    /// Shock-capturing viscosity.
    pub nu_dc: f64,
}

fn speed_scale(u: &State, gas: &GasModel) -> Result<f64, PhysicsError> {
    let c = sound_speed(u, gas)?;
    Ok(u[1].hypot(u[2]) / u[0] + c)
}

/// `[(2/dt)^2 + (2(|u|+c)/h)^2 + (4 nu/h^2)^2]^(-1/2)`.
pub fn tau_mom(u: &State, h: f64, dt: f64, gas: &GasModel) -> Result<f64, PhysicsError> {
    let a = speed_scale(u, gas)?;
    let nu = if gas.is_inviscid() { 0.0 } else { gas.mu.max(gas.kappa_over_cv()) / u[0] };
    let t1 = 2.0 / dt;
    let t2 = 2.0 * a / h;
    let t3 = 4.0 * nu / (h * h);
    Ok(1.0 / (t1 * t1 + t2 * t2 + t3 * t3).sqrt())
}

/// Shock-capturing viscosity from an element residual and gradient, both
/// scaled component-wise by free-stream magnitudes.
pub fn tau_dc(
    residual: &State,
    grad: &Grad,
    u: &State,
    h: f64,
    fs: &FreeStream,
    gas: &GasModel,
    clamp_factor: f64,
) -> Result<f64, PhysicsError> {
    let speed = fs.speed().max(1e-300);
    let scale = [fs.rho, fs.rho * speed, fs.rho * speed, fs.rho * fs.e];
    let mut r2 = 0.0;
    let mut g2 = 0.0;
    for c in 0..4 {
        r2 += (residual[c] / scale[c]).powi(2);
        g2 += (grad[c][0] / scale[c]).powi(2) + (grad[c][1] / scale[c]).powi(2);
    }
    let nu = 0.5 * h * r2.sqrt() / g2.sqrt().max(1e-12);
    let limit = clamp_factor * 0.5 * h * speed_scale(u, gas)?;
    Ok(nu.min(limit))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: FreeStream = FreeStream { rho: 1.0, u: 1.0, v: 0.0, e: 1.1179, l_ref: 1.0 };

    #[test]
    fn advective_limit() {
        let gas = GasModel::inviscid(1.4);
        let u = TABLE1.state();
        let a = 1.0 + sound_speed(&u, &gas).unwrap();
        let t = tau_mom(&u, 0.1, f64::INFINITY, &gas).unwrap();
        assert!((t - 0.1 / (2.0 * a)).abs() < 1e-15);
    }

    #[test]
    fn table1_formula_value() {
        let gas = GasModel::inviscid(1.4);
        let u = TABLE1.state();
        let c = (1.4f64 * 0.24716).sqrt();
        let expect = 1.0 / (200f64.powi(2) + (2.0 * (1.0 + c) / 0.01).powi(2)).sqrt();
        let t = tau_mom(&u, 0.01, 0.01, &gas).unwrap();
        assert!((t - expect).abs() < 1e-15 * expect);
        // (2 (1 + c) / h)^2 is about 100900
        assert!(((2.0 * (1.0 + c) / 0.01).powi(2) - 100_901.6).abs() < 2.0);
    }

    #[test]
    fn tau_is_bounded_by_half_step() {
        let gas = GasModel::viscous(1.4, 0.5, 0.72);
        for &(h, dt) in &[(1e-3, 1e-2), (1.0, 1e-4), (10.0, 10.0)] {
            let t = tau_mom(&TABLE1.state(), h, dt, &gas).unwrap();
            assert!(t <= 0.5 * dt);
        }
    }

    #[test]
    fn zero_residual_gives_no_capturing() {
        let gas = GasModel::inviscid(1.4);
        let u = TABLE1.state();
        let nu = tau_dc(&[0.0; 4], &[[0.0; 2]; 4], &u, 0.1, &TABLE1, &gas, 1.0).unwrap();
        assert_eq!(nu, 0.0);
    }

    #[test]
    fn capturing_matches_hand_evaluation_and_clamp() {
        let gas = GasModel::inviscid(1.4);
        let u = TABLE1.state();
        let r = [0.01, 0.02, 0.0, 0.0];
        let mut g = [[0.0; 2]; 4];
        g[0][0] = 1.0;
        g[3][1] = 1.1179;
        // scaled norms: |R| = sqrt(1e-4 + 4e-4), |grad| = sqrt(2)
        let expect = 0.5 * 0.1 * (5e-4f64).sqrt() / 2f64.sqrt();
        let nu = tau_dc(&r, &g, &u, 0.1, &TABLE1, &gas, 1.0).unwrap();
        assert!((nu - expect).abs() < 1e-15);
        let big = tau_dc(&[100.0; 4], &g, &u, 0.1, &TABLE1, &gas, 1.0).unwrap();
        let limit = 0.05 * (1.0 + sound_speed(&u, &gas).unwrap());
        assert!((big - limit).abs() < 1e-15);
        // both parameters scale linearly with h in their limits
        let big2 = tau_dc(&[100.0; 4], &g, &u, 0.2, &TABLE1, &gas, 1.0).unwrap();
        assert!((big2 - 2.0 * big).abs() < 1e-15);
    }
}
