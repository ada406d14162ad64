//! Ideal-gas state algebra, Euler and viscous fluxes, their Jacobians, and
//! wall quantities.
//!
//! States are conservation variables `U = (rho, rho u, rho v, rho e)` with
//! `e` the total specific energy. Gradients are stored per component:
//! `grad[c][k] = dU_c / dx_k`.

use thiserror::Error;

use crate::dual::Real;
use crate::mapping::WallPoint;
use crate::vec2::{self, Vec2};

pub type State = [f64; 4];
pub type Grad = [[f64; 2]; 4];
pub type Mat4 = [[f64; 4]; 4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid state: density {rho:e}, pressure {p:e}")]
    InvalidState { rho: f64, p: f64 },
    #[error("free-stream speed is zero")]
    ZeroFreeStreamSpeed,
    #[error("invalid gas model: {0}")]
    InvalidGas(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasModel {
    pub gamma: f64,
    /// Dynamic viscosity; zero for inviscid flow.
    pub mu: f64,
    pub prandtl: f64,
}

impl GasModel {
    pub fn inviscid(gamma: f64) -> Self {
        Self { gamma, mu: 0.0, prandtl: 0.72 }
    }

    pub fn viscous(gamma: f64, mu: f64, prandtl: f64) -> Self {
        Self { gamma, mu, prandtl }
    }

    pub fn is_inviscid(&self) -> bool {
        self.mu == 0.0
    }

    /// Heat conductivity divided by the specific heat at constant volume.
    pub fn kappa_over_cv(&self) -> f64 {
        self.mu * self.gamma / self.prandtl
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.gamma > 1.0) {
            return Err(PhysicsError::InvalidGas(format!("gamma = {} must exceed 1", self.gamma)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(PhysicsError::InvalidGas(format!("viscosity {} must be nonnegative", self.mu)));
        }
        if !(self.prandtl > 0.0) {
            return Err(PhysicsError::InvalidGas(format!("Prandtl number {} must be positive", self.prandtl)));
        }
        Ok(())
    }
}

/// Uniform reference state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeStream {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    /// Total specific energy.
    pub e: f64,
    /// Reference length for force coefficients and the Reynolds number.
    pub l_ref: f64,
}

impl FreeStream {
    pub fn state(&self) -> State {
        [self.rho, self.rho * self.u, self.rho * self.v, self.rho * self.e]
    }

    pub fn speed(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn pressure(&self, gas: &GasModel) -> f64 {
        pressure(&self.state(), gas.gamma)
    }

    pub fn mach(&self, gas: &GasModel) -> Result<f64, PhysicsError> {
        mach_number(&self.state(), gas)
    }

    pub fn dynamic_pressure(&self) -> f64 {
        0.5 * self.rho * (self.u * self.u + self.v * self.v)
    }

    /// Viscosity giving Reynolds number `re` based on `l_ref`.
    pub fn viscosity_for_reynolds(&self, re: f64) -> f64 {
        self.rho * self.speed() * self.l_ref / re
    }
}

#[inline]
pub fn pressure<T: Real>(u: &[T; 4], gamma: f64) -> T {
    T::cst(gamma - 1.0) * (u[3] - T::cst(0.5) * (u[1] * u[1] + u[2] * u[2]) / u[0])
}

/// Pressure with the state-validity check (positive density and pressure).
pub fn checked_pressure(u: &State, gas: &GasModel) -> Result<f64, PhysicsError> {
    let p = pressure(u, gas.gamma);
    if !(u[0] > 0.0) || !(p > 0.0) || !p.is_finite() {
        return Err(PhysicsError::InvalidState { rho: u[0], p });
    }
    Ok(p)
}

pub fn sound_speed(u: &State, gas: &GasModel) -> Result<f64, PhysicsError> {
    let p = checked_pressure(u, gas)?;
    Ok((gas.gamma * p / u[0]).sqrt())
}

pub fn mach_number(u: &State, gas: &GasModel) -> Result<f64, PhysicsError> {
    let c = sound_speed(u, gas)?;
    Ok(u[1].hypot(u[2]) / u[0] / c)
}

/// `(rho, u, v, p)` from conservation variables.
pub fn primitive(u: &State, gas: &GasModel) -> Result<State, PhysicsError> {
    let p = checked_pressure(u, gas)?;
    Ok([u[0], u[1] / u[0], u[2] / u[0], p])
}

/// Conservation variables from `(rho, u, v, p)`.
pub fn conservative(w: &State, gas: &GasModel) -> State {
    let [rho, vx, vy, p] = *w;
    [rho, rho * vx, rho * vy, p / (gas.gamma - 1.0) + 0.5 * rho * (vx * vx + vy * vy)]
}

/// Euler fluxes `[F1, F2]`.
pub fn euler_flux<T: Real>(u: &[T; 4], gamma: f64) -> [[T; 4]; 2] {
    let p = pressure(u, gamma);
    let vx = u[1] / u[0];
    let vy = u[2] / u[0];
    let zero = T::cst(0.0);
    [
        [u[1], u[1] * vx + p, u[2] * vx + zero, (u[3] + p) * vx],
        [u[2], u[1] * vy, u[2] * vy + p, (u[3] + p) * vy],
    ]
}

/// Euler Jacobians `[A1, A2]` with `A_i = dF_i/dU`.
pub fn euler_jacobians<T: Real>(u: &[T; 4], gamma: f64) -> [[[T; 4]; 4]; 2] {
    let g1 = T::cst(gamma - 1.0);
    let vx = u[1] / u[0];
    let vy = u[2] / u[0];
    let phi = T::cst(0.5) * g1 * (vx * vx + vy * vy);
    let h = T::cst(gamma) * u[3] / u[0] - phi;
    let z = T::cst(0.0);
    let one = T::cst(1.0);
    let a1 = [
        [z, one, z, z],
        [phi - vx * vx, T::cst(3.0 - gamma) * vx, -g1 * vy, g1],
        [-vx * vy, vy, vx, z],
        [vx * (phi - h), h - g1 * vx * vx, -g1 * vx * vy, T::cst(gamma) * vx],
    ];
    let a2 = [
        [z, z, one, z],
        [-vx * vy, vy, vx, z],
        [phi - vy * vy, -g1 * vx, T::cst(3.0 - gamma) * vy, g1],
        [vy * (phi - h), -g1 * vx * vy, h - g1 * vy * vy, T::cst(gamma) * vy],
    ];
    [a1, a2]
}

/// Viscous fluxes `[E1, E2]` from the primitive-variable stress and heat
/// flux (Stokes hypothesis, Fourier conduction with constant Prandtl
/// number).
pub fn viscous_flux<T: Real>(u: &[T; 4], grad: &[[T; 2]; 4], gas: &GasModel) -> [[T; 4]; 2] {
    let z = T::cst(0.0);
    if gas.is_inviscid() {
        return [[z; 4]; 2];
    }
    let mu = T::cst(gas.mu);
    let rho = u[0];
    let vx = u[1] / rho;
    let vy = u[2] / rho;
    let etot = u[3] / rho;
    let mut du = [z; 2];
    let mut dv = [z; 2];
    let mut deps = [z; 2];
    for k in 0..2 {
        du[k] = (grad[1][k] - vx * grad[0][k]) / rho;
        dv[k] = (grad[2][k] - vy * grad[0][k]) / rho;
        deps[k] = (grad[3][k] - etot * grad[0][k]) / rho - vx * du[k] - vy * dv[k];
    }
    let div = du[0] + dv[1];
    let third = T::cst(2.0 / 3.0);
    let t11 = mu * (T::cst(2.0) * du[0] - third * div);
    let t22 = mu * (T::cst(2.0) * dv[1] - third * div);
    let t12 = mu * (du[1] + dv[0]);
    let kappa = T::cst(gas.kappa_over_cv());
    [
        [z, t11, t12, t11 * vx + t12 * vy + kappa * deps[0]],
        [z, t12, t22, t12 * vx + t22 * vy + kappa * deps[1]],
    ]
}

/// Diffusivity blocks `k[i][j]` with `sum_j k[i][j] dU/dx_j = E_i`.
pub fn diffusivity(u: &State, gas: &GasModel) -> [[Mat4; 2]; 2] {
    let mut k = [[[[0.0; 4]; 4]; 2]; 2];
    if gas.is_inviscid() {
        return k;
    }
    let mu = gas.mu;
    let kap = gas.kappa_over_cv();
    let rho = u[0];
    let vx = u[1] / rho;
    let vy = u[2] / rho;
    let q2 = vx * vx + vy * vy;
    // derivatives of u, v and the internal energy with respect to U
    let du = [-vx / rho, 1.0 / rho, 0.0, 0.0];
    let dv = [-vy / rho, 0.0, 1.0 / rho, 0.0];
    let de = [(-u[3] / rho + q2) / rho, -vx / rho, -vy / rho, 1.0 / rho];
    let c43 = 4.0 / 3.0 * mu;
    let c23 = -2.0 / 3.0 * mu;
    for m in 0..4 {
        // i = 1
        k[0][0][1][m] = c43 * du[m];
        k[0][0][2][m] = mu * dv[m];
        k[0][0][3][m] = vx * c43 * du[m] + vy * mu * dv[m] + kap * de[m];
        k[0][1][1][m] = c23 * dv[m];
        k[0][1][2][m] = mu * du[m];
        k[0][1][3][m] = vx * c23 * dv[m] + vy * mu * du[m];
        // i = 2
        k[1][0][1][m] = mu * dv[m];
        k[1][0][2][m] = c23 * du[m];
        k[1][0][3][m] = vx * mu * dv[m] + vy * c23 * du[m];
        k[1][1][1][m] = mu * du[m];
        k[1][1][2][m] = c43 * dv[m];
        k[1][1][3][m] = vx * mu * du[m] + vy * c43 * dv[m] + kap * de[m];
    }
    k
}

pub fn pressure_coefficient(p: f64, fs: &FreeStream, gas: &GasModel) -> Result<f64, PhysicsError> {
    let q = fs.dynamic_pressure();
    if !(q > 0.0) {
        return Err(PhysicsError::ZeroFreeStreamSpeed);
    }
    Ok((p - fs.pressure(gas)) / q)
}

/// Force exerted by the fluid on a wall, split into pressure and viscous
/// parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WallForces {
    pub pressure: Vec2,
    pub viscous: Vec2,
}

impl WallForces {
    pub fn total(&self) -> Vec2 {
        vec2::add(self.pressure, self.viscous)
    }
}

/// Integrates `p n` over wall quadrature points for a pressure given
/// pointwise (`n` pointing out of the fluid).
pub fn pressure_force(points: &[WallPoint], p: impl Fn(&WallPoint) -> f64) -> Vec2 {
    points.iter().fold([0.0, 0.0], |acc, wp| vec2::add(acc, vec2::scale(wp.normal, wp.weight * p(wp))))
}

/// Integrates `p n - tau n` over wall quadrature points (`n` pointing out of
/// the fluid) for the nodal field `u_nodes`.
pub fn wall_forces(points: &[WallPoint], u_nodes: &[State], gas: &GasModel) -> Result<WallForces, PhysicsError> {
    let mut f = WallForces::default();
    for wp in points {
        let mut u = [0.0; 4];
        let mut g = [[0.0; 2]; 4];
        for a in 0..3 {
            let ua = &u_nodes[wp.nodes[a]];
            for c in 0..4 {
                u[c] += wp.shape[a] * ua[c];
                g[c][0] += wp.grads[a][0] * ua[c];
                g[c][1] += wp.grads[a][1] * ua[c];
            }
        }
        let p = checked_pressure(&u, gas)?;
        f.pressure = vec2::add(f.pressure, pressure_force(std::slice::from_ref(wp), |_| p));
        if !gas.is_inviscid() {
            let e = viscous_flux(&u, &g, gas);
            // (tau n)_k = tau_ki n_i; E_i[1 + k] = tau_ik
            let tn = [
                e[0][1] * wp.normal[0] + e[1][1] * wp.normal[1],
                e[0][2] * wp.normal[0] + e[1][2] * wp.normal[1],
            ];
            f.viscous = vec2::sub(f.viscous, vec2::scale(tn, wp.weight));
        }
    }
    Ok(f)
}

/// Drag coefficients `(pressure part, viscous part)` along the free-stream
/// direction.
pub fn drag_coefficients(f: &WallForces, fs: &FreeStream) -> Result<(f64, f64), PhysicsError> {
    let speed = fs.speed();
    if !(speed > 0.0) {
        return Err(PhysicsError::ZeroFreeStreamSpeed);
    }
    let dir = [fs.u / speed, fs.v / speed];
    let q = fs.dynamic_pressure() * fs.l_ref;
    Ok((vec2::dot(f.pressure, dir) / q, vec2::dot(f.viscous, dir) / q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::Dual4;
    use proptest::prelude::*;

    const TABLE1: FreeStream = FreeStream { rho: 1.0, u: 1.0, v: 0.0, e: 1.1179, l_ref: 1.0 };
    const TABLE3: FreeStream = FreeStream { rho: 1.0, u: 1.0, v: 0.0, e: 3.29, l_ref: 1.0 };

    fn air() -> GasModel {
        GasModel::viscous(1.4, 0.013, 0.72)
    }

    #[test]
    fn pressure_of_reference_states() {
        let gas = GasModel::inviscid(1.4);
        assert!((TABLE1.pressure(&gas) - 0.24716).abs() < 1e-12);
        assert!((TABLE3.pressure(&gas) - 1.116).abs() < 1e-12);
        assert!((checked_pressure(&[1.0, 0.0, 0.0, 2.5], &gas).unwrap() - 1.0).abs() < 1e-15);
        assert!(checked_pressure(&[1.0, 3.0, 0.0, 2.5], &gas).is_err());
        assert!(checked_pressure(&[-1.0, 0.0, 0.0, 2.5], &gas).is_err());
    }

    #[test]
    fn mach_of_reference_states() {
        let gas = GasModel::inviscid(1.4);
        let m1 = TABLE1.mach(&gas).unwrap();
        let m3 = TABLE3.mach(&gas).unwrap();
        assert!((m1 - 1.7).abs() < 1.7e-3, "{m1}");
        assert!((m3 - 0.8).abs() < 1.6e-3, "{m3}");
        assert_eq!(mach_number(&[1.0, 0.0, 0.0, 2.5], &gas).unwrap(), 0.0);
    }

    #[test]
    fn euler_flux_values() {
        let f = euler_flux(&TABLE1.state(), 1.4);
        let expect = [1.0, 1.24716, 0.0, 1.36506];
        for c in 0..4 {
            assert!((f[0][c] - expect[c]).abs() < 1e-12);
        }
        let f = euler_flux(&[1.0, 0.0, 0.0, 2.5], 1.4);
        assert_eq!([f[0][0], f[0][2], f[0][3]], [0.0; 3]);
        assert!((f[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn static_state_mass_row() {
        let a = euler_jacobians(&[1.0, 0.0, 0.0, 2.5], 1.4);
        assert_eq!(a[0][0], [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(a[1][0], [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn shear_stress() {
        let gas = GasModel::viscous(1.4, 1.0, 0.72);
        // rho = 1, u = y: dU1/dy = 1
        let u = [1.0, 0.0, 0.0, 2.5];
        let mut g = [[0.0; 2]; 4];
        g[1][1] = 1.0;
        let e = viscous_flux(&u, &g, &gas);
        assert_eq!((e[0][1], e[0][2], e[1][1], e[1][2]), (0.0, 1.0, 1.0, 0.0));
        let zero = viscous_flux(&u, &[[0.0; 2]; 4], &gas);
        assert_eq!(zero, [[0.0; 4]; 2]);
    }

    #[test]
    fn inviscid_has_no_diffusion() {
        let gas = GasModel::inviscid(1.4);
        assert_eq!(diffusivity(&TABLE3.state(), &gas), [[[[0.0; 4]; 4]; 2]; 2]);
        let mut g = [[0.3; 2]; 4];
        g[0][1] = -1.0;
        assert_eq!(viscous_flux(&TABLE3.state(), &g, &gas), [[0.0; 4]; 2]);
    }

    #[test]
    fn cp_of_free_stream_is_zero() {
        let gas = GasModel::inviscid(1.4);
        assert_eq!(pressure_coefficient(TABLE1.pressure(&gas), &TABLE1, &gas).unwrap(), 0.0);
        let still = FreeStream { u: 0.0, ..TABLE1 };
        assert!(pressure_coefficient(1.0, &still, &gas).is_err());
    }

    #[test]
    fn dual_jacobian_matches_closed_form() {
        let u = [1.2, 0.7, -0.3, 3.1];
        let fd = euler_flux(&Dual4::seed(u), 1.4);
        let a = euler_jacobians(&u, 1.4);
        for i in 0..2 {
            for r in 0..4 {
                for c in 0..4 {
                    assert!((fd[i][r].d[c] - a[i][r][c]).abs() < 1e-13);
                }
            }
        }
    }

    // state from primitives drawn in a physically sensible range
    fn state() -> impl Strategy<Value = State> {
        (0.2..3.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.1..3.0f64)
            .prop_map(|(rho, vx, vy, p)| conservative(&[rho, vx, vy, p], &GasModel::inviscid(1.4)))
    }

    fn gradient() -> impl Strategy<Value = Grad> {
        proptest::array::uniform4(proptest::array::uniform2(-2.0..2.0f64))
    }

    /// Central-difference Jacobian of the Euler flux.
    fn fd_jacobian(u: &State, i: usize) -> Mat4 {
        let mut a = [[0.0; 4]; 4];
        for c in 0..4 {
            let h = 1e-6 * u[c].abs().max(1.0);
            let mut up = *u;
            let mut um = *u;
            up[c] += h;
            um[c] -= h;
            let fp = euler_flux(&up, 1.4)[i];
            let fm = euler_flux(&um, 1.4)[i];
            for r in 0..4 {
                a[r][c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        a
    }

    /// Stress and heat flux evaluated directly on primitive-variable
    /// gradients obtained by finite differences of U -> (u, v, eps).
    fn primitive_oracle(u: &State, g: &Grad, gas: &GasModel) -> [[f64; 4]; 2] {
        let prim = |u: &State| {
            let vx = u[1] / u[0];
            let vy = u[2] / u[0];
            [vx, vy, u[3] / u[0] - 0.5 * (vx * vx + vy * vy)]
        };
        let mut dprim = [[0.0; 2]; 3];
        for k in 0..2 {
            let h = 1e-6;
            let mut up = *u;
            let mut um = *u;
            for c in 0..4 {
                up[c] += h * g[c][k];
                um[c] -= h * g[c][k];
            }
            let (pp, pm) = (prim(&up), prim(&um));
            for q in 0..3 {
                dprim[q][k] = (pp[q] - pm[q]) / (2.0 * h);
            }
        }
        let mu = gas.mu;
        let div = dprim[0][0] + dprim[1][1];
        let tau = [
            [mu * (2.0 * dprim[0][0] - 2.0 / 3.0 * div), mu * (dprim[0][1] + dprim[1][0])],
            [mu * (dprim[0][1] + dprim[1][0]), mu * (2.0 * dprim[1][1] - 2.0 / 3.0 * div)],
        ];
        let cv_t_grad = dprim[2];
        let kappa = mu * gas.gamma / gas.prandtl;
        let [vx, vy, _] = prim(u);
        let mut e = [[0.0; 4]; 2];
        for i in 0..2 {
            e[i][1] = tau[i][0];
            e[i][2] = tau[i][1];
            e[i][3] = kappa * cv_t_grad[i] + tau[i][0] * vx + tau[i][1] * vy;
        }
        e
    }

    fn cylinder_wall(curved: bool) -> Vec<WallPoint> {
        use crate::mesh::{classify_elements, PROJECTION_TOLERANCE};
        use crate::meshgen::{cylinder_ogrid, OGridSpec, WALL_TAG};
        let case = cylinder_ogrid(&OGridSpec { n_wall: 64, n_radial: 4, r_outer: 2.0, stretch: 1.0 });
        let recs = classify_elements(&case.mesh, &case.curves, &case.wall_curves, PROJECTION_TOLERANCE).unwrap();
        let recs = if curved { recs } else { Vec::new() };
        crate::mapping::wall_quadrature(&case.mesh, &recs, &case.curves, &[WALL_TAG], 5).unwrap()
    }

    #[test]
    fn closed_wall_pressure_integrals() {
        let wall = cylinder_wall(true);
        let f = pressure_force(&wall, |_| 1.0);
        assert!(vec2::norm(f) < 1e-12, "{f:?}");
        // p = cos(theta): int cos^2(theta) r dtheta = pi r, directed against +x
        // because the normal points into the cylinder
        let f = pressure_force(&wall, |wp| wp.x[0] / 0.5);
        assert!((f[0] + std::f64::consts::PI * 0.5).abs() < 1e-8, "{f:?}");
        assert!(f[1].abs() < 1e-12);
    }

    #[test]
    fn uniform_flow_has_no_drag() {
        let gas = air();
        for curved in [true, false] {
            let wall = cylinder_wall(curved);
            let n_nodes = wall.iter().flat_map(|w| w.nodes).max().unwrap() + 1;
            let field = vec![TABLE1.state(); n_nodes];
            let f = wall_forces(&wall, &field, &gas).unwrap();
            let (cp, cv) = drag_coefficients(&f, &TABLE1).unwrap();
            assert!(cp.abs() < 1e-10 && cv.abs() < 1e-12, "{cp} {cv}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn jacobians_match_finite_differences(u in state()) {
            let a = euler_jacobians(&u, 1.4);
            for i in 0..2 {
                let fd = fd_jacobian(&u, i);
                let scale = fd.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
                for r in 0..4 { for c in 0..4 {
                    prop_assert!((a[i][r][c] - fd[r][c]).abs() <= 1e-6 * scale);
                }}
            }
        }

        #[test]
        fn flux_is_homogeneous(u in state()) {
            let a = euler_jacobians(&u, 1.4);
            let f = euler_flux(&u, 1.4);
            for i in 0..2 { for r in 0..4 {
                let au: f64 = (0..4).map(|c| a[i][r][c] * u[c]).sum();
                prop_assert!((au - f[i][r]).abs() <= 1e-12 * (1.0 + f[i][r].abs()));
            }}
        }

        #[test]
        fn diffusivity_contracts_to_viscous_flux(u in state(), g in gradient()) {
            let gas = air();
            let k = diffusivity(&u, &gas);
            let e = viscous_flux(&u, &g, &gas);
            for i in 0..2 {
                prop_assert!(k[i][0][0] == [0.0; 4] && k[i][1][0] == [0.0; 4]);
                for r in 0..4 {
                    let s: f64 = (0..2).map(|j| (0..4).map(|c| k[i][j][r][c] * g[c][j]).sum::<f64>()).sum();
                    prop_assert!((s - e[i][r]).abs() <= 1e-10 * (1.0 + e[i][r].abs()));
                }
            }
        }

        #[test]
        fn viscous_flux_matches_primitive_oracle(u in state(), g in gradient()) {
            let gas = air();
            let e = viscous_flux(&u, &g, &gas);
            let o = primitive_oracle(&u, &g, &gas);
            for i in 0..2 { for r in 0..4 {
                prop_assert!((e[i][r] - o[i][r]).abs() <= 1e-8 * (1.0 + o[i][r].abs()));
            }}
        }

        #[test]
        fn primitive_round_trip(rho in 0.1..5.0f64, vx in -3.0..3.0f64, vy in -3.0..3.0f64, p in 0.05..5.0f64) {
            let gas = GasModel::inviscid(1.4);
            let w = primitive(&conservative(&[rho, vx, vy, p], &gas), &gas).unwrap();
            for (a, b) in w.iter().zip([rho, vx, vy, p]) {
                prop_assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn flux_rotates_with_velocity(u in state()) {
            // rotating the velocity by 90 degrees maps F1 onto F2
            let r = [u[0], -u[2], u[1], u[3]];
            let f = euler_flux(&u, 1.4);
            let g = euler_flux(&r, 1.4);
            let rot = [f[0][0], -f[0][2], f[0][1], f[0][3]];
            for c in 0..4 {
                prop_assert!((g[1][c] - rot[c]).abs() <= 1e-12 * (1.0 + rot[c].abs()));
            }
        }

        #[test]
        fn cp_ignores_a_common_pressure_shift(dp in -0.1..0.5f64, p in 0.1..2.0f64) {
            // raising e_inf by dp / (gamma - 1) / rho shifts p_inf by dp
            let gas = GasModel::inviscid(1.4);
            let shifted = FreeStream { e: TABLE1.e + dp / 0.4, ..TABLE1 };
            let a = pressure_coefficient(p, &TABLE1, &gas).unwrap();
            let b = pressure_coefficient(p + dp, &shifted, &gas).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
