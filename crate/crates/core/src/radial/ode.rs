//! Adaptive Dormand–Prince 5(4) integrator with first-same-as-last stages.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// 4th-order embedded weights
const E1: f64 = 5179.0 / 57600.0;
const E3: f64 = 7571.0 / 16695.0;
const E4: f64 = 393.0 / 640.0;
const E5: f64 = -92097.0 / 339200.0;
const E6: f64 = 187.0 / 2100.0;
const E7: f64 = 1.0 / 40.0;

/// One accepted node of the trajectory: position, state and derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub t: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Controls {
    /// Mixed absolute/relative local error bound per step.
    pub tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    /// Maximum step as a function of the current position.
    pub h_max: fn(f64, f64) -> f64,
    /// Parameter passed to `h_max` (e.g. a switch point).
    pub h_max_arg: f64,
}

/// Result of one Dormand–Prince step.
struct Trial {
    y: Vec<f64>,
    dy: Vec<f64>,
    err: f64,
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, v) in terms {
            acc += c * v[k];
        }
        *o = y[k] + h * acc;
    }
}

fn trial<F>(f: &F, t: f64, y: &[f64], k1: &[f64], h: f64, tol: f64) -> Trial
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut tmp = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];

    axpy(&mut tmp, y, h, &[(A21, k1)]);
    f(t + C2 * h, &tmp, &mut k2);
    axpy(&mut tmp, y, h, &[(A31, k1), (A32, &k2)]);
    f(t + C3 * h, &tmp, &mut k3);
    axpy(&mut tmp, y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]);
    f(t + C4 * h, &tmp, &mut k4);
    axpy(&mut tmp, y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
    f(t + C5 * h, &tmp, &mut k5);
    axpy(&mut tmp, y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
    f(t + h, &tmp, &mut k6);
    let mut y5 = vec![0.0; n];
    axpy(&mut y5, y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    f(t + h, &y5, &mut k7);

    let mut err: f64 = 0.0;
    for k in 0..n {
        let y4 = y[k]
            + h * (E1 * k1[k] + E3 * k3[k] + E4 * k4[k] + E5 * k5[k] + E6 * k6[k] + E7 * k7[k]);
        let scale = tol * (1.0 + y[k].abs().max(y5[k].abs()));
        err = err.max((y5[k] - y4).abs() / scale);
    }
    if !err.is_finite() {
        err = f64::INFINITY;
    }
    Trial { y: y5, dy: k7, err }
}

/// Integrates from `start` until `stop` returns true on an accepted node or
/// `t_cap` is reached; the caller inspects the last node to tell the two
/// apart. Every accepted node is recorded.
pub fn integrate<F, S>(f: F, start: Node, ctl: Controls, t_cap: f64, mut stop: S) -> Result<Vec<Node>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    S: FnMut(&Node) -> bool,
{
    let mut nodes = vec![start];
    let mut h = ctl.h_init;
    loop {
        let cur = nodes.last().expect("nonempty");
        if stop(cur) || cur.t >= t_cap {
            return Ok(nodes);
        }
        let h_cap = (ctl.h_max)(cur.t, ctl.h_max_arg);
        h = h.min(h_cap).min(t_cap - cur.t);
        loop {
            if h < ctl.h_min {
                return Err(Error::Stiffness { r: cur.t.exp() });
            }
            let tr = trial(&f, cur.t, &cur.y, &cur.dy, h, ctl.tol);
            if tr.err <= 1.0 {
                let next = Node { t: cur.t + h, y: tr.y, dy: tr.dy };
                let grow = if tr.err == 0.0 { 5.0 } else { (0.9 * tr.err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= grow;
                nodes.push(next);
                break;
            }
            h *= (0.9 * tr.err.powf(-0.2)).clamp(0.1, 0.5);
        }
    }
}

/// Cubic Hermite interpolation of component `k` between two nodes.
pub fn hermite(a: &Node, b: &Node, k: usize, t: f64) -> f64 {
    let h = b.t - a.t;
    let x = (t - a.t) / h;
    let h00 = (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x);
    let h10 = x * (1.0 - x) * (1.0 - x);
    let h01 = x * x * (3.0 - 2.0 * x);
    let h11 = x * x * (x - 1.0);
    h00 * a.y[k] + h10 * h * a.dy[k] + h01 * b.y[k] + h11 * h * b.dy[k]
}

/// Derivative of the Hermite interpolant with respect to t.
pub fn hermite_deriv(a: &Node, b: &Node, k: usize, t: f64) -> f64 {
    let h = b.t - a.t;
    let x = (t - a.t) / h;
    let d00 = 6.0 * x * x - 6.0 * x;
    let d10 = 3.0 * x * x - 4.0 * x + 1.0;
    let d01 = -d00;
    let d11 = 3.0 * x * x - 2.0 * x;
    (d00 * a.y[k] + d01 * b.y[k]) / h + d10 * a.dy[k] + d11 * b.dy[k]
}
