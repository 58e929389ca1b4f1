//! Minimal dense kernels with reverse-mode differentiation, an Adam
//! optimizer, a finite-difference gradient checker and a checkpoint format.

mod adam;
pub(crate) mod checkpoint;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use gradcheck::{fd_check, GradCheck};
pub use tape::{Gradients, Tape, Var, STATS_POOL_EPS};
pub use tensor::{ParamSet, Tensor};

use crate::error::{Error, Result};

/// Frame offsets read by a time-delay layer, e.g. `{-2, 0, +2}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSpec {
    offsets: Vec<isize>,
}

impl ContextSpec {
    /// Offsets must be strictly increasing and contain 0.
    pub fn new(offsets: Vec<isize>) -> Result<Self> {
        if offsets.is_empty() || !offsets.contains(&0) {
            return Err(Error::InvalidInput(format!("context {offsets:?} must contain 0")));
        }
        if offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "context {offsets:?} must be strictly increasing"
            )));
        }
        Ok(Self { offsets })
    }

    /// Symmetric context of odd width `kernel`, e.g. 3 gives `{-1, 0, 1}`.
    pub fn symmetric(kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::InvalidInput(format!("kernel {kernel} must be odd")));
        }
        let h = (kernel / 2) as isize;
        Self::new((-h..=h).collect())
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn min_offset(&self) -> isize {
        self.offsets[0]
    }

    pub fn max_offset(&self) -> isize {
        *self.offsets.last().expect("non-empty")
    }

    /// Frames lost at the edges: `max - min`.
    pub fn span(&self) -> usize {
        (self.max_offset() - self.min_offset()) as usize
    }
}

/// Sum per-example gradient vectors in order, then divide by the count.
pub fn mean_gradients(per_example: Vec<Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    let n = per_example.len().max(1) as f64;
    let mut iter = per_example.into_iter();
    let Some(mut total) = iter.next() else {
        return Vec::new();
    };
    for g in iter {
        for (t, gi) in total.iter_mut().zip(g) {
            t.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
        }
    }
    total
        .iter_mut()
        .for_each(|t| t.iter_mut().for_each(|v| *v /= n));
    total
}

/// Evaluate `loss_fn` for every item on its own tape, in parallel, and
/// return the summed loss and the mean gradient per parameter tensor.
///
/// Gradients are reduced in item order, so the result does not depend on
/// the number of threads.
pub fn batch_gradients<T, F>(params: &ParamSet, items: &[T], loss_fn: F) -> Result<(f64, Vec<Vec<f64>>)>
where
    T: Sync,
    F: Fn(&mut Tape, &[Var], &T) -> Result<Var> + Sync,
{
    use rayon::prelude::*;
    let per = items
        .par_iter()
        .map(|item| {
            let mut tape = Tape::new();
            let vars = tape.params(params);
            let loss = loss_fn(&mut tape, &vars, item)?;
            let l = tape.value(loss).data()[0];
            let g = tape.backward(loss)?;
            let grads = vars
                .iter()
                .zip(params.tensors())
                .map(|(&v, t)| g.wrt_or_zeros(v, t.len()))
                .collect::<Vec<_>>();
            Ok((l, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let total = per.iter().map(|(l, _)| l).sum();
    Ok((total, mean_gradients(per.into_iter().map(|(_, g)| g).collect())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_validation() {
        assert!(ContextSpec::new(vec![-2, 0, 2]).is_ok());
        assert!(ContextSpec::new(vec![-1, 1]).is_err());
        assert!(ContextSpec::new(vec![0, 0]).is_err());
        assert!(ContextSpec::new(vec![2, 0]).is_err());
        assert_eq!(ContextSpec::new(vec![-2, 0, 2]).unwrap().span(), 4);
        assert_eq!(ContextSpec::new(vec![-6, -3, 0, 3, 6]).unwrap().span(), 12);
        assert_eq!(ContextSpec::symmetric(3).unwrap().offsets(), &[-1, 0, 1]);
        assert!(ContextSpec::symmetric(4).is_err());
    }

    #[test]
    fn mean_gradients_in_order() {
        let g = mean_gradients(vec![vec![vec![1.0, 2.0]], vec![vec![3.0, 6.0]]]);
        assert_eq!(g, vec![vec![2.0, 4.0]]);
    }
}
