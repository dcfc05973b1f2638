use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients to central finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(leaf, element)` where the largest error occurred.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Checks `d out / d leaf` for every element of every leaf.
///
/// `build` receives a fresh graph and one trainable handle per entry of
/// `leaves`, and returns a scalar output. The builder is rerun twice per
/// element, so it must be deterministic (eval-mode graphs, fixed masks).
pub fn check_gradients<F>(leaves: &[Tensor<f64>], eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        if g.value(out).numel() != 1 {
            return Err(Error::argument("check_gradients", "output must be scalar"));
        }
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(leaves)
        .map(|(&v, t)| {
            g.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let mut work = leaves.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    for li in 0..work.len() {
        for ei in 0..work[li].numel() {
            let orig = work[li].data()[ei];
            work[li].data_mut()[ei] = orig + eps;
            let plus = eval(&work)?;
            work[li].data_mut()[ei] = orig - eps;
            let minus = eval(&work)?;
            work[li].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = rel_err(analytic[li][ei], numeric);
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((li, ei));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
