//! Derivative-free simplex minimizer used by the least-squares harness.

/// Result of one simplex run.
#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    #[allow(dead_code)] // diagnostic, read by tests
    pub iterations: usize,
    /// True when the simplex collapsed below the diameter tolerance.
    pub converged: bool,
}

/// Standard Nelder-Mead with reflection, expansion, contraction and shrink.
///
/// Terminates when the simplex infinity-norm diameter falls below `tol` or
/// after `max_iters` iterations. `step` sets the initial simplex spread.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_iters: usize,
) -> SimplexOutcome {
    let dim = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;

        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let diameter = simplex
            .iter()
            .map(|p| {
                p.iter()
                    .zip(simplex[best].iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for &idx in order.iter().take(dim) {
            for d in 0..dim {
                centroid[d] += simplex[idx][d];
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let reflect: Vec<f64> = (0..dim)
            .map(|d| centroid[d] + alpha * (centroid[d] - simplex[worst][d]))
            .collect();
        let f_reflect = f(&reflect);

        if f_reflect < values[best] {
            let expand: Vec<f64> = (0..dim)
                .map(|d| centroid[d] + gamma * (reflect[d] - centroid[d]))
                .collect();
            let f_expand = f(&expand);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
            continue;
        }
        if f_reflect < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
            continue;
        }

        let contract: Vec<f64> = (0..dim)
            .map(|d| centroid[d] + rho * (simplex[worst][d] - centroid[d]))
            .collect();
        let f_contract = f(&contract);
        if f_contract < values[worst] {
            simplex[worst] = contract;
            values[worst] = f_contract;
            continue;
        }

        for &idx in order.iter().skip(1) {
            for d in 0..dim {
                simplex[idx][d] =
                    simplex[best][d] + sigma * (simplex[idx][d] - simplex[best][d]);
            }
            values[idx] = f(&simplex[idx]);
        }
    }

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    SimplexOutcome {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}
