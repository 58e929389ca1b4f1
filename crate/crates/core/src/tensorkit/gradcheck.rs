use super::{ParamSet, Tape, Var};
use crate::error::Result;

/// Denominator floor for relative errors, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compare reverse-mode gradients of `loss_fn` with central differences of
/// step `h` over every parameter coordinate, in f64.
///
/// `loss_fn` receives a fresh tape and the parameter leaves (in `params`
/// order) and must return a scalar loss.
pub fn fd_check<F>(params: &ParamSet, h: f64, loss_fn: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = tape.params(ps);
        let l = loss_fn(&mut tape, &vars)?;
        Ok(tape.value(l).data()[0])
    };

    let mut tape = Tape::new();
    let vars = tape.params(params);
    let loss = loss_fn(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut work = params.clone();
    let mut result = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (ti, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt_or_zeros(v, params.tensors()[ti].len());
        for j in 0..analytic.len() {
            let orig = work.tensors()[ti].data()[j];
            work.tensors_mut()[ti].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work.tensors_mut()[ti].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work.tensors_mut()[ti].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            result.checked += 1;
            if rel > result.max_rel_error || result.worst.is_none() {
                result.max_rel_error = rel;
                result.worst = Some((params.names()[ti].clone(), j));
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorkit::{ContextSpec, Tensor};
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn linear_model_is_exact() {
        let mut r = rng();
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::kaiming_uniform(&[3, 2], 3, &mut r));
        ps.push("b", Tensor::kaiming_uniform(&[2], 3, &mut r));
        let x = Tensor::kaiming_uniform(&[4, 3], 1, &mut r);
        let check = fd_check(&ps, 1e-3, |tape, v| {
            let xi = tape.leaf(x.clone());
            let y = tape.dense(xi, v[0], Some(v[1]))?;
            Ok(tape.sum(y))
        })
        .unwrap();
        assert_eq!(check.checked, 8);
        assert!(check.max_rel_error < 1e-10, "{check:?}");
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut r = rng();
        let mut ps = ParamSet::new();
        ps.push("x", Tensor::kaiming_uniform(&[7, 3], 1, &mut r));
        ps.push("w", Tensor::kaiming_uniform(&[9, 4], 9, &mut r));
        ps.push("b", Tensor::kaiming_uniform(&[4], 9, &mut r));
        ps.push("table", Tensor::kaiming_uniform(&[5, 4], 1, &mut r));
        ps.push("row", Tensor::kaiming_uniform(&[1, 4], 1, &mut r));
        let ctx = ContextSpec::new(vec![-1, 0, 2]).unwrap();
        let target: Vec<f64> = (0..8).map(|i| (i as f64 * 0.3).sin()).collect();
        let check = fd_check(&ps, 1e-5, |tape, v| {
            let h = tape.tdnn(v[0], &ctx, v[1], v[2])?; // 4 x 4
            let h = tape.relu(h);
            let e = tape.embed(v[3], &[1, 4, 1, 0])?;
            let h = tape.add(h, e)?;
            let h = tape.add_row(h, v[4])?;
            let h = tape.scale(h, 0.7);
            let p = tape.pad_rows(h, 1, 1)?; // 6 x 4
            let rep = tape.repeat_rows(p, &[1, 0, 2, 1, 1, 1])?;
            let s = tape.stats_pool(rep)?; // 1 x 8
            tape.mse(s, &target)
        })
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "{check:?}");
    }

    #[test]
    fn relu_gradient_is_indicator() {
        let mut ps = ParamSet::new();
        ps.push("x", Tensor::row(vec![-0.7, 0.4, 1.3, -2.0, 0.05]));
        let check = fd_check(&ps, 1e-3, |tape, v| {
            let y = tape.relu(v[0]);
            Ok(tape.sum(y))
        })
        .unwrap();
        assert!(check.max_rel_error < 1e-10);
    }
}
