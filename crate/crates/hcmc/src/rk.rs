//! Adaptive embedded Runge-Kutta (Dormand-Prince 5(4)) over generic states.

use crate::error::{Error, Result};

/// Linear-space state with a norm, enough for step-size control.
pub trait RkState: Clone {
    fn axpy(&mut self, a: f64, x: &Self);
    fn norm(&self) -> f64;
}

impl RkState for Vec<f64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += a * v;
        }
    }
    fn norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl RkState for crate::mat2::Mat2 {
    fn axpy(&mut self, a: f64, x: &Self) {
        *self = *self + x.scale(crate::mat2::C64::new(a, 0.0));
    }
    fn norm(&self) -> f64 {
        crate::mat2::Mat2::norm(self)
    }
}

impl RkState for crate::loops::LoopMat {
    fn axpy(&mut self, a: f64, x: &Self) {
        *self = self
            .add(&x.scale(crate::mat2::C64::new(a, 0.0)))
            .expect("shared order");
    }
    fn norm(&self) -> f64 {
        self.rho_norm(1.0)
    }
}

pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-13,
            h_init: 1e-2,
            h_min: 1e-13,
            h_max: 0.25,
        }
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One fixed step of the fifth-order Dormand-Prince formula.
pub fn dp5_step<S, F>(y: &S, u: f64, h: f64, rhs: &F) -> Result<S>
where
    S: RkState,
    F: Fn(f64, &S) -> Result<S>,
{
    let mut k: Vec<S> = Vec::with_capacity(6);
    k.push(rhs(u, y)?);
    for stage in 0..5 {
        let mut ys = y.clone();
        for (j, kj) in k.iter().enumerate() {
            ys.axpy(h * A[stage][j], kj);
        }
        k.push(rhs(u + C[stage] * h, &ys)?);
    }
    let mut out = y.clone();
    for (j, kj) in k.iter().enumerate() {
        out.axpy(h * A[5][j], kj);
    }
    Ok(out)
}

/// Integrate dy/du = rhs(u, y) from u = 0 to u = 1, adaptively.
/// `observer`, when given, sees every accepted (u, y).
pub fn integrate<S, F>(
    y0: S,
    mut rhs: F,
    opts: &AdaptiveOptions,
    mut observer: Option<&mut dyn FnMut(f64, &S)>,
) -> Result<S>
where
    S: RkState,
    F: FnMut(f64, &S) -> Result<S>,
{
    let mut y = y0;
    let mut u = 0.0f64;
    let mut h = opts.h_init.min(opts.h_max);
    let mut k0 = rhs(u, &y)?;
    if let Some(obs) = observer.as_deref_mut() {
        obs(u, &y);
    }
    let mut rejected_in_a_row = 0usize;
    while u < 1.0 {
        if h < opts.h_min {
            return Err(Error::StepUnderflow(u));
        }
        if u + h > 1.0 {
            h = 1.0 - u;
        }
        let mut k = Vec::with_capacity(7);
        k.push(k0.clone());
        let mut failed = false;
        for stage in 0..6 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                ys.axpy(h * A[stage][j], kj);
            }
            match rhs(u + C[stage] * h, &ys) {
                Ok(v) => k.push(v),
                Err(_) => {
                    // Evaluation failures (pole guards) reject the step.
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            h *= 0.25;
            rejected_in_a_row += 1;
            if rejected_in_a_row > 60 {
                return Err(Error::StepUnderflow(u));
            }
            continue;
        }
        // The 6th stage evaluated at u + h with the A[5] row IS the 5th-order
        // solution's derivative point; y5 uses the A[5] weights (FSAL pair).
        let mut y5 = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            y5.axpy(h * A[5][j], kj);
        }
        let k7 = match rhs(u + h, &y5) {
            Ok(v) => v,
            Err(_) => {
                h *= 0.25;
                rejected_in_a_row += 1;
                if rejected_in_a_row > 60 {
                    return Err(Error::StepUnderflow(u));
                }
                continue;
            }
        };
        let mut y4 = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            y4.axpy(h * B4[j], kj);
        }
        y4.axpy(h * B4[6], &k7);
        let mut err_vec = y5.clone();
        err_vec.axpy(-1.0, &y4);
        let scale = opts.atol + opts.rtol * y.norm().max(y5.norm());
        let err = err_vec.norm() / scale;
        if err <= 1.0 {
            u += h;
            y = y5;
            k0 = k7; // FSAL
            rejected_in_a_row = 0;
            if let Some(obs) = observer.as_deref_mut() {
                obs(u, &y);
            }
            let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
            h = (h * factor.clamp(0.2, 5.0)).min(opts.h_max);
        } else {
            rejected_in_a_row += 1;
            if rejected_in_a_row > 60 {
                return Err(Error::StepUnderflow(u));
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(y)
}
