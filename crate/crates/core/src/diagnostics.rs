//! Finite-difference gradient checks over every tape operation and both
//! full models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{MelConfig, MelSpectrogram};
use crate::converter::{example_loss, ConverterConfig, ConverterExample, ConverterModel};
use crate::error::Result;
use crate::predictor::{build_model, LikabilityRating};
use crate::speaker::SpeakerEmbedding;
use crate::tensorkit::{fd_check, ContextSpec, GradCheck, ParamSet, Tape, Tensor, Var};
use crate::units::UnitSequence;

/// Largest acceptable relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub name: String,
    pub check: GradCheck,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.check.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn uniform(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("dims match data")
}

fn targets(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

type OpFn = fn(&mut Tape, &[Var]) -> Result<Var>;

/// `(name, parameter shapes, forward)` for each single-op check.
fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, OpFn)> {
    vec![
        ("dense", vec![vec![5, 4], vec![4, 3], vec![3]], |t, v| t.dense(v[0], v[1], Some(v[2]))),
        ("unfold", vec![vec![7, 3]], |t, v| t.unfold(v[0], &ContextSpec::new(vec![-2, 0, 1])?)),
        ("tdnn", vec![vec![8, 3], vec![9, 4], vec![4]], |t, v| {
            t.tdnn(v[0], &ContextSpec::new(vec![-1, 0, 2])?, v[1], v[2])
        }),
        ("relu", vec![vec![4, 5]], |t, v| Ok(t.relu(v[0]))),
        ("stats_pool", vec![vec![6, 4]], |t, v| t.stats_pool(v[0])),
        ("add", vec![vec![3, 4], vec![3, 4]], |t, v| t.add(v[0], v[1])),
        ("add_row", vec![vec![3, 4], vec![1, 4]], |t, v| t.add_row(v[0], v[1])),
        ("scale", vec![vec![3, 4]], |t, v| Ok(t.scale(v[0], -1.7))),
        ("embed", vec![vec![5, 3]], |t, v| t.embed(v[0], &[4, 0, 4, 2])),
        ("pad_rows", vec![vec![3, 4]], |t, v| t.pad_rows(v[0], 2, 1)),
        ("repeat_rows", vec![vec![4, 3]], |t, v| t.repeat_rows(v[0], &[2, 0, 3, 1])),
        ("sum", vec![vec![3, 4]], |t, v| {
            let s = t.sum(v[0]);
            t.mse(s, &[0.25])
        }),
    ]
}

fn op_check(name: &str, shapes: &[Vec<usize>], forward: OpFn, rng: &mut ChaCha8Rng) -> Result<GradCheckRow> {
    let mut ps = ParamSet::new();
    for (i, dims) in shapes.iter().enumerate() {
        ps.push(format!("{name}.{i}"), uniform(dims, rng));
    }
    let out_len = {
        let mut tape = Tape::new();
        let vars = tape.params(&ps);
        let y = forward(&mut tape, &vars)?;
        tape.value(y).len()
    };
    let target = targets(out_len, rng);
    // The squared error is itself the mse check.
    let check = fd_check(&ps, 1e-6, |tape, vars| {
        let y = forward(tape, vars)?;
        tape.mse(y, &target)
    })?;
    Ok(GradCheckRow { name: name.to_string(), check })
}

fn predictor_check(rng: &mut ChaCha8Rng) -> Result<GradCheckRow> {
    let model = build_model(rng.random());
    let t = 24;
    let mel = MelSpectrogram::from_frames(uniform(&[t, 80], rng).into_data(), t, MelConfig::default())?;
    let x = model.normalise(&mel)?;
    let target = targets(4, rng);
    let check = fd_check(&model.params, 1e-6, |tape, vars| {
        let xv = tape.leaf(x.clone());
        let y = model.forward(tape, vars, xv)?;
        tape.mse(y, &target)
    })?;
    Ok(GradCheckRow { name: "predictor".into(), check })
}

fn converter_check(rng: &mut ChaCha8Rng) -> Result<GradCheckRow> {
    let cfg = ConverterConfig {
        vocab: 6,
        embed_dim: 8,
        speaker_dim: 3,
        encoder_blocks: 1,
        decoder_blocks: 1,
        duration_hidden: 5,
        seed: rng.random(),
        ..ConverterConfig::default()
    };
    let mut model = ConverterModel::new(cfg)?;
    // The mel head starts at zero; give it values so every path carries gradient.
    let head = model.params.index_of("mel_head.weight").expect("converter has a mel head");
    let dims = model.params.tensors()[head].dims().to_vec();
    model.params.tensors_mut()[head] = uniform(&dims, rng);
    model.mel_mean = (0..80).map(|_| rng.random_range(-6.0..-2.0)).collect();
    model.mel_std = (0..80).map(|_| rng.random_range(0.5..2.0)).collect();
    let runs = vec![2, 1, 3];
    let frames: usize = 6;
    let ex = ConverterExample {
        id: "gradcheck".into(),
        units: UnitSequence::with_runs(vec![1, 4, 2], runs)?,
        speaker: SpeakerEmbedding::new(targets(3, rng))?,
        target: LikabilityRating::new([0.2, -0.4, 0.6, 0.1]),
        mel: MelSpectrogram::from_frames(
            (0..frames * 80).map(|_| rng.random_range(-8.0..0.0)).collect(),
            frames,
            MelConfig::default(),
        )?,
    };
    // Larger step: the loss is quadratic in the head and a 1e-6 step is
    // dominated by roundoff there.
    let check = fd_check(&model.params, 1e-5, |tape, vars| example_loss(&model, tape, vars, &ex, 1.0, 0.5))?;
    Ok(GradCheckRow { name: "converter".into(), check })
}

/// Run every single-op check, then the full predictor and converter.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for (name, shapes, forward) in op_cases() {
        rows.push(op_check(name, &shapes, forward, &mut rng)?);
    }
    rows.push(predictor_check(&mut rng)?);
    rows.push(converter_check(&mut rng)?);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_ops_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (name, shapes, forward) in op_cases() {
            let row = op_check(name, &shapes, forward, &mut rng).unwrap();
            assert!(row.passed(), "{row:?}");
            assert_eq!(row.check.checked, shapes.iter().map(|d| d.iter().product::<usize>()).sum::<usize>());
        }
    }
}
