//! Derivative-free minimisers used by the likelihood fits.

/// Options for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Converged when the simplex diameter falls below `xtol·(1 + |x|)`.
    pub xtol: f64,
    /// Restarts from the current best point after the first convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 20_000, xtol: 1e-8, restarts: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder–Mead simplex minimisation with restarts.
///
/// `step` gives the initial simplex edge along each coordinate. After convergence the
/// simplex is rebuilt around the best point and the search repeated `restarts` times,
/// stopping early when a restart does not improve the objective.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best = run_simplex(&mut f, x0, step, opts);
    let mut total = best.evals;
    for _ in 0..opts.restarts {
        if total >= opts.max_evals {
            break;
        }
        let remaining = NelderMeadOptions { max_evals: opts.max_evals - total, ..opts };
        let small: Vec<f64> = step.iter().map(|s| s * 0.1).collect();
        let next = run_simplex(&mut f, &best.x, &small, remaining);
        total += next.evals;
        let improved = next.value < best.value - 1e-12 * best.value.abs().max(1.0);
        if next.value <= best.value {
            best = Minimum { evals: total, ..next };
        }
        if !improved {
            break;
        }
    }
    best.evals = total;
    best
}

fn run_simplex<F>(f: &mut F, x0: &[f64], step: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    vals.push(sanitize(f(x0)));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if step[i] != 0.0 { step[i] } else { 0.05 * x0[i].abs().max(1e-3) };
        vals.push(sanitize(f(&p)));
        pts.push(p);
    }
    let mut evals = n + 1;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();

    while evals < opts.max_evals {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let diam = pts
            .iter()
            .map(|p| p.iter().zip(&pts[best]).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diam < opts.xtol && vals[worst].is_finite() {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[worst]).map(|(c, w)| c + t * (w - c)).collect() };

        let xr = along(-1.0);
        let fr = sanitize(f(&xr));
        evals += 1;
        if fr < vals[best] {
            let xe = along(-2.0);
            let fe = sanitize(f(&xe));
            evals += 1;
            if fe < fr {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[worst] {
            let xc = along(-0.5);
            let fc = sanitize(f(&xc));
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = sanitize(f(&xc));
            (xc, fc)
        };
        evals += 1;
        if fc < vals[worst].min(fr) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        // shrink towards the best vertex
        let anchor = pts[best].clone();
        for &i in &order[1..] {
            for (p, a) in pts[i].iter_mut().zip(&anchor) {
                *p = a + 0.5 * (*p - a);
            }
            vals[i] = sanitize(f(&pts[i]));
            evals += 1;
        }
    }

    let (bi, _) = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty simplex");
    Minimum { x: pts[bi].clone(), value: vals[bi], evals, converged }
}

/// Brent's method for a one-dimensional minimum on `[a, b]`.
pub fn brent_minimize<F>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + CGOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = sanitize(f(x));
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-15;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm - x >= 0.0 { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + if d >= 0.0 { tol1 } else { -tol1 } };
        let fu = sanitize(f(u));
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], NelderMeadOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn quadratic_in_five_dimensions() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - i as f64).powi(2)).sum();
        let m = nelder_mead(f, &[3.0; 5], &[1.0; 5], NelderMeadOptions::default());
        for (i, v) in m.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn brent_finds_parabola_vertex() {
        let (x, fx) = brent_minimize(|x| (x - 2.5).powi(2) + 1.0, -10.0, 10.0, 1e-12, 200);
        assert!((x - 2.5).abs() < 1e-8);
        assert!((fx - 1.0).abs() < 1e-15);
    }
}
