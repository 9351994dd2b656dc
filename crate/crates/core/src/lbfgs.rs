//! Limited-memory BFGS with backtracking line search.
//!
//! Used for the shared-weight block of the coordinate descent and as the
//! fallback solver when the likelihood has no usable Hessian.

pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iters: 50,
            grad_tol: 1e-8,
            step_tol: 1e-10,
        }
    }
}

pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
}

/// Minimize `f` starting at `x0`. The objective writes its gradient into the
/// provided buffer and returns the function value. The line search is
/// monotone, so the returned value never exceeds the starting value.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if n == 0 {
        return LbfgsOutcome { x, fx };
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    for _ in 0..opts.max_iters {
        let gnorm = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if gnorm < opts.grad_tol {
            break;
        }

        // two-loop recursion
        let mut q = g.clone();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for i in (0..m).rev() {
            let a = rho_hist[i] * dot(&s_hist[i], &q);
            alphas[i] = a;
            axpy(-a, &y_hist[i], &mut q);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y).max(1e-300);
            for v in &mut q {
                *v *= gamma;
            }
        }
        for i in 0..m {
            let b = rho_hist[i] * dot(&y_hist[i], &q);
            axpy(alphas[i] - b, &s_hist[i], &mut q);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut descent = dot(&dir, &g);
        if !(descent < 0.0) {
            // reset to steepest descent
            dir = g.iter().map(|v| -v).collect();
            descent = dot(&dir, &g);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // backtracking Armijo search
        let mut t = 1.0;
        let c1 = 1e-4;
        let mut x_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + t * dir[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new <= fx + c1 * t * descent {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if s_hist.len() == opts.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho_hist.remove(0);
                    }
                    rho_hist.push(1.0 / sy);
                    s_hist.push(s);
                    y_hist.push(y);
                }
                let step = t * dir.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                accepted = true;
                if step < opts.step_tol {
                    return LbfgsOutcome { x, fx };
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    LbfgsOutcome { x, fx }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
