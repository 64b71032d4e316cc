//! Central finite-difference verification of tape gradients.
//!
//! `check_gradients` perturbs every scalar of every parameter and compares
//! (f(θ+h) - f(θ-h)) / 2h against the analytic gradient. The primary step
//! is h=1e-5; an element that misses tolerance is re-probed at smaller h
//! before being counted as a failure. That retry only rescues relu
//! subgradient kinks sitting inside the probe window (the discrepancy
//! shrinks with h); a wrong gradient formula stays wrong at every h.

use crate::nn::params::ParamSet;
use crate::nn::tape::Gradients;

const STEPS: [f64; 4] = [1e-5, 1e-6, 1e-7, 1e-8];
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct FdReport {
    pub elements: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

impl FdReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(REL_FLOOR)
}

/// Compare `grads` (from one backward sweep at the current `params`)
/// against finite differences of `f` over every parameter element.
/// Parameters absent from `grads` are treated as zero-gradient.
/// `params` is restored to its original values before returning.
pub fn check_gradients(
    params: &mut ParamSet,
    grads: &Gradients,
    tol: f64,
    mut f: impl FnMut(&ParamSet) -> f64,
) -> FdReport {
    let mut report = FdReport {
        elements: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let ids: Vec<_> = params.ids().collect();
    for pid in ids {
        let len = params.get(pid).data.len();
        for k in 0..len {
            let analytic = grads.get(pid).map(|g| g[k]).unwrap_or(0.0);
            let orig = params.get(pid).data[k];
            let mut best = f64::INFINITY;
            for &h in &STEPS {
                params.get_mut(pid).data[k] = orig + h;
                let fp = f(params);
                params.get_mut(pid).data[k] = orig - h;
                let fm = f(params);
                params.get_mut(pid).data[k] = orig;
                let fd = (fp - fm) / (2.0 * h);
                best = best.min(rel_err(analytic, fd));
                if best < tol {
                    break;
                }
            }
            report.elements += 1;
            if best > report.max_rel_err {
                report.max_rel_err = best;
                report.worst = format!("{}[{k}]", params.name(pid));
            }
        }
    }
    report
}
