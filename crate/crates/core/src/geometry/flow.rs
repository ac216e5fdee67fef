use nalgebra::DMatrix;

use super::VectorFieldSystem;
use crate::error::{Error, Result};

/// RK4 steps per unit flow time.
pub const DEFAULT_FLOW_STEPS: usize = 64;

struct Velocity<'a> {
    sys: &'a VectorFieldSystem,
    h: &'a [f64],
    sigma: Vec<f64>,
    dsigma: Vec<f64>,
}

impl<'a> Velocity<'a> {
    fn new(sys: &'a VectorFieldSystem, h: &'a [f64]) -> Self {
        let (n, m) = (sys.dim(), sys.fields());
        Self { sys, h, sigma: vec![0.0; n * m], dsigma: vec![0.0; m * n * n] }
    }

    fn eval(&mut self, z: &[f64], out: &mut [f64]) {
        let n = self.sys.dim();
        self.sys.sigma_into(z, &mut self.sigma);
        out.fill(0.0);
        for (j, hj) in self.h.iter().enumerate() {
            if *hj != 0.0 {
                for k in 0..n {
                    out[k] += hj * self.sigma[j * n + k];
                }
            }
        }
    }

    /// Velocity and its spatial Jacobian (row-major `n×n`).
    fn eval_with_jacobian(&mut self, z: &[f64], out: &mut [f64], jac: &mut [f64]) {
        self.eval(z, out);
        let n = self.sys.dim();
        self.sys.dsigma_into(z, &mut self.dsigma);
        jac.fill(0.0);
        for (j, hj) in self.h.iter().enumerate() {
            if *hj != 0.0 {
                let block = &self.dsigma[j * n * n..(j + 1) * n * n];
                for (a, b) in jac.iter_mut().zip(block) {
                    *a += hj * b;
                }
            }
        }
    }
}

fn check_inputs(sys: &VectorFieldSystem, x: &[f64], h: &[f64], steps: usize) -> Result<()> {
    if x.len() != sys.dim() {
        return Err(Error::Dimension { expected: sys.dim(), got: x.len() });
    }
    if h.len() != sys.fields() {
        return Err(Error::Dimension { expected: sys.fields(), got: h.len() });
    }
    if steps == 0 {
        return Err(Error::Config("flow needs at least one step".into()));
    }
    if !sys.domain().contains(x) {
        return Err(Error::ExitedDomain { time: 0.0, point: x.to_vec() });
    }
    Ok(())
}

/// Time-1 point of `γ' = Σ hᵢXᵢ(γ)`, `γ(0) = x`, by classical RK4 with `steps`
/// equal steps. Fails if the trajectory leaves the system's domain.
pub fn exp_flow(sys: &VectorFieldSystem, x: &[f64], h: &[f64], steps: usize) -> Result<Vec<f64>> {
    check_inputs(sys, x, h, steps)?;
    if h.iter().all(|v| *v == 0.0) {
        return Ok(x.to_vec());
    }
    let n = sys.dim();
    let dt = 1.0 / steps as f64;
    let mut vel = Velocity::new(sys, h);
    let mut z = x.to_vec();
    let mut tmp = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..steps {
        vel.eval(&z, &mut k1);
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * dt * k1[i];
        }
        vel.eval(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * dt * k2[i];
        }
        vel.eval(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = z[i] + dt * k3[i];
        }
        vel.eval(&tmp, &mut k4);
        for i in 0..n {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !sys.domain().contains(&z) {
            return Err(Error::ExitedDomain { time: (s + 1) as f64 * dt, point: z });
        }
    }
    Ok(z)
}

pub fn exp_flow_default(sys: &VectorFieldSystem, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    exp_flow(sys, x, h, DEFAULT_FLOW_STEPS)
}

/// Flow endpoint together with the Jacobian of `y ↦ exp_flow(y, h)` at `x`,
/// from the variational equation `J' = DV(γ)J` integrated alongside the flow.
pub fn flow_with_jacobian(
    sys: &VectorFieldSystem,
    x: &[f64],
    h: &[f64],
    steps: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_inputs(sys, x, h, steps)?;
    let n = sys.dim();
    if h.iter().all(|v| *v == 0.0) {
        return Ok((x.to_vec(), DMatrix::identity(n, n)));
    }
    let dt = 1.0 / steps as f64;
    let nn = n * n;
    let mut vel = Velocity::new(sys, h);
    let mut z = x.to_vec();
    let mut jm = vec![0.0; nn];
    for i in 0..n {
        jm[i * n + i] = 1.0;
    }
    let mut zt = vec![0.0; n];
    let mut jt = vec![0.0; nn];
    let mut dv = vec![0.0; nn];
    let mut kz = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut kj = [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]];
    let weights = [0.0, 0.5, 0.5, 1.0];
    for s in 0..steps {
        for stage in 0..4 {
            if stage == 0 {
                zt.copy_from_slice(&z);
                jt.copy_from_slice(&jm);
            } else {
                let w = weights[stage] * dt;
                for i in 0..n {
                    zt[i] = z[i] + w * kz[stage - 1][i];
                }
                for i in 0..nn {
                    jt[i] = jm[i] + w * kj[stage - 1][i];
                }
            }
            vel.eval_with_jacobian(&zt, &mut kz[stage], &mut dv);
            let kjs = &mut kj[stage];
            for r in 0..n {
                for c in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += dv[r * n + l] * jt[l * n + c];
                    }
                    kjs[r * n + c] = acc;
                }
            }
        }
        for i in 0..n {
            z[i] += dt / 6.0 * (kz[0][i] + 2.0 * kz[1][i] + 2.0 * kz[2][i] + kz[3][i]);
        }
        for i in 0..nn {
            jm[i] += dt / 6.0 * (kj[0][i] + 2.0 * kj[1][i] + 2.0 * kj[2][i] + kj[3][i]);
        }
        if !sys.domain().contains(&z) {
            return Err(Error::ExitedDomain { time: (s + 1) as f64 * dt, point: z });
        }
    }
    Ok((z, DMatrix::from_row_slice(n, n, &jm)))
}

pub fn flow_jacobian(sys: &VectorFieldSystem, x: &[f64], h: &[f64], steps: usize) -> Result<DMatrix<f64>> {
    flow_with_jacobian(sys, x, h, steps).map(|(_, j)| j)
}
