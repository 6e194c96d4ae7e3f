//! First-order discrete-time blocks, all discretized with backward Euler.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::sim::InertiaParams;

/// State of one first-order block with cutoff `cutoff` sampled every `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub y_prev: f64,
    pub u_prev: f64,
    pub cutoff: f64,
    pub dt: f64,
}

impl FilterState {
    pub fn new(cutoff: f64, dt: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "filter cutoff must be > 0, got {cutoff}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParam(format!("filter dt must be > 0, got {dt}")));
        }
        Ok(Self {
            y_prev: 0.0,
            u_prev: 0.0,
            cutoff,
            dt,
        })
    }

    fn alpha(&self) -> f64 {
        self.cutoff * self.dt
    }

    /// `g/(s+g)`: `y = (y_prev + g·dt·u) / (1 + g·dt)`.
    pub fn lowpass_step(&mut self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::NonFinite("low-pass input"));
        }
        let a = self.alpha();
        let y = (self.y_prev + a * u) / (1.0 + a);
        self.y_prev = y;
        self.u_prev = u;
        Ok(y)
    }

    /// `g·s/(s+g)`: `y = (y_prev + g·(u − u_prev)) / (1 + g·dt)`.
    pub fn pseudo_derivative_step(&mut self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::NonFinite("pseudo-derivative input"));
        }
        let y = (self.y_prev + self.cutoff * (u - self.u_prev)) / (1.0 + self.alpha());
        self.y_prev = y;
        self.u_prev = u;
        Ok(y)
    }

    /// Sets the remembered input without producing output, so a differentiator
    /// started on a non-zero signal does not see a step from zero.
    pub fn prime_input(&mut self, u: f64) {
        self.u_prev = u;
    }
}

pub fn lowpass_step(fs: &FilterState, u: f64) -> Result<(f64, FilterState)> {
    let mut next = fs.clone();
    let y = next.lowpass_step(u)?;
    Ok((y, next))
}

pub fn pseudo_derivative_step(fs: &FilterState, u: f64) -> Result<(f64, FilterState)> {
    let mut next = fs.clone();
    let y = next.pseudo_derivative_step(u)?;
    Ok((y, next))
}

/// Virtual mass-damper `1/(M·s + D)` per joint with `D = ω·M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceParams {
    m: Vec<f64>,
    omega: f64,
    d: Vec<f64>,
}

impl AdmittanceParams {
    pub fn new(m: Vec<f64>, omega: f64) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::Empty("virtual mass vector"));
        }
        if let Some(bad) = m.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParam(format!(
                "virtual mass must be > 0, got {bad}"
            )));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "admittance cutoff must be > 0, got {omega}"
            )));
        }
        let d = m.iter().map(|mi| omega * mi).collect();
        Ok(Self { m, omega, d })
    }

    pub fn mass(&self) -> &[f64] {
        &self.m
    }

    pub fn damping(&self) -> &[f64] {
        &self.d
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Converts torque references into velocity commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admittance {
    params: AdmittanceParams,
    states: Vec<FilterState>,
}

impl Admittance {
    pub fn new(params: AdmittanceParams, dt: f64) -> Result<Self> {
        let states = (0..params.len())
            .map(|_| FilterState::new(params.omega, dt))
            .collect::<Result<_>>()?;
        Ok(Self { params, states })
    }

    pub fn params(&self) -> &AdmittanceParams {
        &self.params
    }

    /// Backward Euler on `M·v' + D·v = τ`, i.e. `v = (M·v_prev + dt·τ) / (M + D·dt)`.
    pub fn step(&mut self, tau_ref: &[f64]) -> Result<Vec<f64>> {
        ensure_len("admittance torque reference", self.states.len(), tau_ref.len())?;
        ensure_finite("admittance torque reference", tau_ref)?;
        Ok(self
            .states
            .iter_mut()
            .zip(tau_ref)
            .zip(self.params.m.iter().zip(&self.params.d))
            .map(|((fs, &tau), (&m, &d))| {
                let v = (m * fs.y_prev + fs.dt * tau) / (m + d * fs.dt);
                fs.y_prev = v;
                fs.u_prev = tau;
                v
            })
            .collect())
    }
}

pub fn admittance_step(adm: &Admittance, tau_ref: &[f64]) -> Result<(Vec<f64>, Admittance)> {
    let mut next = adm.clone();
    let v = next.step(tau_ref)?;
    Ok((v, next))
}

/// Velocity-measurement disturbance observer, one low-pass per joint.
///
/// Estimate: `LPF(τ_applied + g·J·v) − g·J·v`, which equals the low-passed
/// `τ_applied − J·v'` without differentiating the velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DobState {
    filters: Vec<FilterState>,
    cutoff: f64,
}

impl DobState {
    pub fn new(joints: usize, cutoff: f64, dt: f64) -> Result<Self> {
        let filters = (0..joints)
            .map(|_| FilterState::new(cutoff, dt))
            .collect::<Result<_>>()?;
        Ok(Self { filters, cutoff })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn step(
        &mut self,
        dtheta_res: &[f64],
        tau_applied: &[f64],
        inertia: &InertiaParams,
    ) -> Result<Vec<f64>> {
        let n = self.filters.len();
        ensure_len("observer velocity", n, dtheta_res.len())?;
        ensure_len("observer torque", n, tau_applied.len())?;
        ensure_len("observer inertia", n, inertia.len())?;
        ensure_finite("observer velocity", dtheta_res)?;
        ensure_finite("observer torque", tau_applied)?;
        let g = self.cutoff;
        self.filters
            .iter_mut()
            .zip(dtheta_res.iter().zip(tau_applied))
            .zip(inertia.values())
            .map(|((fs, (&v, &tau)), &j)| {
                let w = g * j * v;
                Ok(fs.lowpass_step(tau + w)? - w)
            })
            .collect()
    }
}

pub fn dob_step(
    ds: &DobState,
    dtheta_res: &[f64],
    tau_applied: &[f64],
    inertia: &InertiaParams,
) -> Result<(Vec<f64>, DobState)> {
    let mut next = ds.clone();
    let d = next.step(dtheta_res, tau_applied, inertia)?;
    Ok((d, next))
}
