//! Central finite-difference checks of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Elements probed per input tensor; `None` probes all of them.
    pub max_elements: Option<usize>,
    /// Random ±1 directions probed across all inputs at once.
    pub directions: usize,
    /// Denominator floor of the relative error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_elements: None,
            directions: 0,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checks: usize,
    /// `(input, element)` of the worst element-wise check, if any.
    pub worst: Option<(usize, usize)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Checks `d f(x) / d x` for a scalar-valued tape function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(x),
        tol,
        &GradCheckOptions::default(),
    )
}

fn evaluate<F>(f: &F, xs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.value(out).item()
}

/// Checks the gradient of `f` with respect to every tensor in `xs`.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], tol: f64, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs
        .iter()
        .map(|x| tape.leaf(x.clone().with_requires_grad(true)))
        .collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(xs)
        .map(|(&v, x)| tape.grad(v).map_or_else(|| vec![0.0; x.numel()], <[f64]>::to_vec))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checks: 0,
        worst: None,
        tolerance: tol,
    };
    let record = |report: &mut GradCheckReport, a: f64, n: f64, at: Option<(usize, usize)>| {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(opts.abs_floor);
        report.checks += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            if at.is_some() {
                report.worst = at;
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = xs.to_vec();
    for (t, x) in xs.iter().enumerate() {
        let indices: Vec<usize> = match opts.max_elements {
            Some(k) if k < x.numel() => (0..k).map(|_| rng.random_range(0..x.numel())).collect(),
            _ => (0..x.numel()).collect(),
        };
        for i in indices {
            let orig = x.data()[i];
            probe[t].data_mut()[i] = orig + opts.step;
            let plus = evaluate(&f, &probe)?;
            probe[t].data_mut()[i] = orig - opts.step;
            let minus = evaluate(&f, &probe)?;
            probe[t].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            record(&mut report, analytic[t][i], numeric, Some((t, i)));
        }
    }

    for _ in 0..opts.directions {
        let dirs: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| (0..x.numel()).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            .collect();
        let shifted = |sign: f64| -> Vec<Tensor> {
            xs.iter()
                .zip(&dirs)
                .map(|(x, d)| {
                    let data = x.data().iter().zip(d).map(|(v, d)| v + sign * opts.step * d).collect();
                    Tensor::new(x.shape(), data).expect("same shape")
                })
                .collect()
        };
        let plus = evaluate(&f, &shifted(1.0))?;
        let minus = evaluate(&f, &shifted(-1.0))?;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a: f64 = analytic
            .iter()
            .zip(&dirs)
            .map(|(g, d)| g.iter().zip(d).map(|(g, d)| g * d).sum::<f64>())
            .sum();
        record(&mut report, a, numeric, None);
    }
    Ok(report)
}
