//! Sampled continuous-time dynamics: vector fields, fixed-step RK4 flows, and
//! growth-bound reachable-set over-approximation.
//!
//! All integration uses classical RK4 with a fixed number of sub-steps per
//! sampling period, so results are deterministic and bit-identical across
//! runs. The angle coordinate of the vehicle model is not wrapped here;
//! wrapping is the quantizer's job.

use crate::geom::HyperRect;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Right-hand sides available to scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VectorField {
    /// Kinematic single-track vehicle, state (x, y, heading, speed),
    /// input (acceleration, steering angle).
    Vehicle,
    /// Pure integrator, state dimension equals input dimension.
    Integrator { dim: usize },
    /// Linear dynamics dx = A x + B u.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

impl VectorField {
    pub fn state_dim(&self) -> usize {
        match self {
            VectorField::Vehicle => 4,
            VectorField::Integrator { dim } => *dim,
            VectorField::Linear { a, .. } => a.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            VectorField::Vehicle => 2,
            VectorField::Integrator { dim } => *dim,
            VectorField::Linear { a, b } => {
                if a.is_empty() {
                    0
                } else {
                    b[0].len()
                }
            }
        }
    }
}

/// Input-dependent constants hoisted out of the stage evaluations.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub u: Vec<f64>,
    /// Vehicle only: (slip angle, 1/cos(slip), tan(steering)).
    vehicle: Option<(f64, f64, f64)>,
}

/// Kinematic single-track vehicle field. Exposed directly for tests.
pub fn vehicle_field(x: &[f64], u: &[f64]) -> [f64; 4] {
    let alpha = (u[1].tan() / 2.0).atan();
    let beta = 1.0 / alpha.cos();
    [
        x[3] * (alpha + x[2]).cos() * beta,
        x[3] * (alpha + x[2]).sin() * beta,
        x[3] * u[1].tan(),
        u[0],
    ]
}

/// Sampling-period description of a control system.
#[derive(Debug, Clone)]
pub struct SampledSystem {
    pub field: VectorField,
    /// Sampling period, seconds.
    pub tau: f64,
    /// RK4 sub-steps per sampling period.
    pub substeps: u32,
    /// Componentwise growth-bound matrix for the field on the working domain:
    /// L[i][j] bounds |df_i/dx_j| off the diagonal and df_i/dx_i on it.
    /// Certified by the scenario author, not derived here.
    pub growth: Vec<Vec<f64>>,
    /// Half-widths of the disturbance box W.
    pub disturbance: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("state became non-finite during integration")]
    NonFinite,
    #[error("dimension mismatch: state {state}, field expects {expect}")]
    Dimension { state: usize, expect: usize },
}

impl SampledSystem {
    pub fn prepare(&self, u: &[f64]) -> PreparedInput {
        let vehicle = match self.field {
            VectorField::Vehicle => {
                let t = u[1].tan();
                let alpha = (t / 2.0).atan();
                Some((alpha, 1.0 / alpha.cos(), t))
            }
            _ => None,
        };
        PreparedInput { u: u.to_vec(), vehicle }
    }

    fn eval(&self, pre: &PreparedInput, x: &[f64], out: &mut [f64]) {
        match &self.field {
            VectorField::Vehicle => {
                let (alpha, beta, tan_steer) = pre.vehicle.unwrap();
                out[0] = x[3] * (alpha + x[2]).cos() * beta;
                out[1] = x[3] * (alpha + x[2]).sin() * beta;
                out[2] = x[3] * tan_steer;
                out[3] = pre.u[0];
            }
            VectorField::Integrator { .. } => out.copy_from_slice(&pre.u),
            VectorField::Linear { a, b } => {
                for i in 0..a.len() {
                    let mut v = 0.0;
                    for j in 0..a[i].len() {
                        v += a[i][j] * x[j];
                    }
                    for (j, &uj) in pre.u.iter().enumerate() {
                        v += b[i][j] * uj;
                    }
                    out[i] = v;
                }
            }
        }
    }

    /// One RK4 sub-step of dx = f(x,u) + d with the disturbance held constant.
    pub fn rk4_substep(&self, pre: &PreparedInput, x: &mut [f64], h: f64, d: &[f64]) {
        let n = x.len();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];

        self.eval(pre, x, &mut k1);
        add_disturbance(&mut k1, d);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        self.eval(pre, &tmp, &mut k2);
        add_disturbance(&mut k2, d);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        self.eval(pre, &tmp, &mut k3);
        add_disturbance(&mut k3, d);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        self.eval(pre, &tmp, &mut k4);
        add_disturbance(&mut k4, d);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Nominal (disturbance-free) flow over one sampling period.
    pub fn integrate_nominal(&self, x0: &[f64], u: &[f64]) -> Result<Vec<f64>, IntegrationError> {
        self.integrate_prepared(x0, &self.prepare(u), &[])
    }

    /// Flow over one sampling period with a disturbance vector per sub-step;
    /// an empty slice means no disturbance.
    pub fn integrate_prepared(
        &self,
        x0: &[f64],
        pre: &PreparedInput,
        disturbance_per_substep: &[Vec<f64>],
    ) -> Result<Vec<f64>, IntegrationError> {
        let n = self.field.state_dim();
        if x0.len() != n {
            return Err(IntegrationError::Dimension { state: x0.len(), expect: n });
        }
        if !disturbance_per_substep.is_empty() {
            debug_assert_eq!(disturbance_per_substep.len(), self.substeps as usize);
        }
        let h = self.tau / self.substeps as f64;
        let mut x = x0.to_vec();
        for s in 0..self.substeps as usize {
            let d: &[f64] = disturbance_per_substep.get(s).map(|v| v.as_slice()).unwrap_or(&[]);
            self.rk4_substep(pre, &mut x, h, d);
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(IntegrationError::NonFinite)
        }
    }

    /// Radius of the growth-bound tube after one sampling period, starting
    /// from initial radius `r0`: the solution of dr = L r + w integrated with
    /// the same RK4 stepping as the nominal flow.
    pub fn tube_radius(&self, r0: &[f64]) -> Result<Vec<f64>, IntegrationError> {
        let n = self.field.state_dim();
        if r0.len() != n {
            return Err(IntegrationError::Dimension { state: r0.len(), expect: n });
        }
        let h = self.tau / self.substeps as f64;
        let mut r = r0.to_vec();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let lin = |r: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut v = self.disturbance[i];
                for j in 0..n {
                    v += self.growth[i][j] * r[j];
                }
                out[i] = v;
            }
        };
        for _ in 0..self.substeps {
            lin(&r, &mut k1);
            for i in 0..n {
                tmp[i] = r[i] + 0.5 * h * k1[i];
            }
            lin(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = r[i] + 0.5 * h * k2[i];
            }
            lin(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = r[i] + h * k3[i];
            }
            lin(&tmp, &mut k4);
            for i in 0..n {
                r[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(IntegrationError::NonFinite)
        }
    }
}

fn add_disturbance(k: &mut [f64], d: &[f64]) {
    for (ki, di) in k.iter_mut().zip(d) {
        *ki += di;
    }
}

/// Box around all states reachable from `cell` in one sampling period under
/// input `u` and any disturbance in W, valid whenever the growth matrix is a
/// sound bound for the field on the domain.
#[derive(Debug, Clone)]
pub struct ReachBox {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl ReachBox {
    pub fn lo(&self, i: usize) -> f64 {
        self.center[i] - self.radius[i]
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.center[i] + self.radius[i]
    }
}

pub fn reach_box(
    sys: &SampledSystem,
    cell: &HyperRect,
    u: &[f64],
) -> Result<ReachBox, IntegrationError> {
    let center = sys.integrate_nominal(&cell.center(), u)?;
    let radius = sys.tube_radius(&cell.half_widths())?;
    Ok(ReachBox { center, radius })
}
