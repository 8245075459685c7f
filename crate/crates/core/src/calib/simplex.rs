//! Derivative-free simplex minimizer with box bounds enforced by projection.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Stop once every vertex is within this distance of the best one.
    pub tol: f64,
    /// Initial edge length as a fraction of each bound's width.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOutcome<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn project<const N: usize>(x: [f64; N], lower: &[f64; N], upper: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| x[i].clamp(lower[i], upper[i]))
}

fn along<const N: usize>(from: &[f64; N], to: &[f64; N], t: f64) -> [f64; N] {
    std::array::from_fn(|i| from[i] + t * (to[i] - from[i]))
}

fn distance<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimize `f` over the box `[lower, upper]` starting from `x0`.
///
/// The best vertex never gets worse, so the returned value is at most
/// `f(project(x0))`.
pub fn minimize_bounded<const N: usize, F>(
    mut f: F,
    x0: [f64; N],
    lower: [f64; N],
    upper: [f64; N],
    opts: &SimplexOptions,
) -> SimplexOutcome<N>
where
    F: FnMut(&[f64; N]) -> f64,
{
    let start = project(x0, &lower, &upper);
    let mut evaluations = 0;
    let mut eval = |x: &[f64; N]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, eval(&start)));
    for i in 0..N {
        let step = opts.initial_step * (upper[i] - lower[i]);
        let mut v = start;
        v[i] = if start[i] + step <= upper[i] {
            start[i] + step
        } else {
            start[i] - step
        };
        let v = project(v, &lower, &upper);
        simplex.push((v, eval(&v)));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].0;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| distance(v, &best))
            .fold(0.0, f64::max);
        if size <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let centroid: [f64; N] =
            std::array::from_fn(|i| simplex[..N].iter().map(|(v, _)| v[i]).sum::<f64>() / N as f64);
        let (worst, f_worst) = simplex[N];
        let f_best = simplex[0].1;
        let f_second = simplex[N - 1].1;

        let reflected = project(along(&centroid, &worst, -REFLECT), &lower, &upper);
        let f_reflected = eval(&reflected);

        if f_reflected < f_best {
            let expanded = project(along(&centroid, &reflected, EXPAND), &lower, &upper);
            let f_expanded = eval(&expanded);
            simplex[N] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < f_second {
            simplex[N] = (reflected, f_reflected);
            continue;
        }
        let accepted = if f_reflected < f_worst {
            let c = project(along(&centroid, &reflected, CONTRACT), &lower, &upper);
            let fc = eval(&c);
            (fc <= f_reflected).then_some((c, fc))
        } else {
            let c = project(along(&centroid, &worst, CONTRACT), &lower, &upper);
            let fc = eval(&c);
            (fc < f_worst).then_some((c, fc))
        };
        match accepted {
            Some(v) => simplex[N] = v,
            None => {
                for vertex in simplex.iter_mut().skip(1) {
                    let v = along(&best, &vertex.0, SHRINK);
                    *vertex = (v, eval(&v));
                }
            }
        }
    }

    let (x, value) = simplex[0];
    SimplexOutcome {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_minimum() {
        let f = |x: &[f64; 2]| (x[0] - 0.3).powi(2) + 3.0 * (x[1] + 0.2).powi(2);
        let opts = SimplexOptions { tol: 1e-10, ..Default::default() };
        let out = minimize_bounded(f, [0.0, 0.0], [-1.0, -1.0], [1.0, 1.0], &opts);
        assert!(out.converged);
        assert!((out.x[0] - 0.3).abs() < 1e-8);
        assert!((out.x[1] + 0.2).abs() < 1e-8);
    }

    #[test]
    fn finds_nonsmooth_minimum() {
        let f = |x: &[f64; 2]| (x[0] - 0.28).abs() + 2.0 * (x[1] - 0.24).abs() + (x[0] + x[1] - 0.52).abs();
        let opts = SimplexOptions { tol: 1e-12, ..Default::default() };
        let out = minimize_bounded(f, [0.3, 0.25], [0.15, 0.15], [0.45, 0.45], &opts);
        assert!(out.converged);
        assert!(out.value < 1e-10, "{out:?}");
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64; 2]| x[0] + x[1];
        let out = minimize_bounded(f, [0.3, 0.3], [0.15, 0.2], [0.45, 0.45], &SimplexOptions::default());
        assert!(out.x[0] >= 0.15 && out.x[1] >= 0.2);
        assert!((out.x[0] - 0.15).abs() < 1e-5 && (out.x[1] - 0.2).abs() < 1e-5);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let f = |x: &[f64; 2]| (x[0] - 0.3).powi(2) + (x[1] - 0.3).powi(2);
        let opts = SimplexOptions { max_iter: 3, tol: 1e-15, ..Default::default() };
        let out = minimize_bounded(f, [0.2, 0.2], [0.0, 0.0], [1.0, 1.0], &opts);
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!(out.value <= f(&[0.2, 0.2]));
    }
}
