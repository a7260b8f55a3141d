//! Finite-difference cases covering every op: f64, h = 1e-3 unless noted,
//! 10 random instances per case.

#![allow(dead_code)]

use kmerspace_autodiff::gradcheck::check_gradients;
use kmerspace_autodiff::{AttentionMask, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
pub const TRIALS: usize = 10;

type Inputs = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>>;
type Graph = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

pub struct GradCase {
    pub name: &'static str,
    pub seed: u64,
    pub h: f64,
    inputs: Inputs,
    graph: Graph,
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0) * scale)
}

fn case(
    name: &'static str,
    seed: u64,
    inputs: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>> + 'static,
    graph: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'static,
) -> GradCase {
    GradCase {
        name,
        seed,
        h: H,
        inputs: Box::new(inputs),
        graph: Box::new(graph),
    }
}

impl GradCase {
    /// Largest relative error over all trials and input tensors.
    pub fn worst_error(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut worst: f64 = 0.0;
        for _ in 0..TRIALS {
            let inputs = (self.inputs)(&mut rng);
            let mut tape = Tape::inference();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
            let out = (self.graph)(&mut tape, &vars).unwrap();
            let n = tape.value(out).numel();
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for check in check_gradients(&inputs, &weights, self.h, &self.graph).unwrap() {
                worst = worst.max(check.relative_error());
            }
        }
        worst
    }
}

pub fn all_cases() -> Vec<GradCase> {
    let mut cases = vec![
        case(
            "dense",
            1,
            |r| {
                vec![
                    rand_tensor(r, &[2, 3, 4], 1.0),
                    rand_tensor(r, &[4, 5], 1.0),
                    rand_tensor(r, &[5], 1.0),
                ]
            },
            |t, v| t.dense(v[0], v[1], Some(v[2])),
        ),
        case(
            "conv1d same",
            2,
            |r| {
                vec![
                    rand_tensor(r, &[2, 7, 3], 1.0),
                    rand_tensor(r, &[3, 3, 4], 1.0),
                    rand_tensor(r, &[4], 1.0),
                ]
            },
            |t, v| t.conv1d_same(v[0], v[1], Some(v[2])),
        ),
        case(
            "conv1d strided",
            3,
            |r| {
                vec![
                    rand_tensor(r, &[2, 9, 2], 1.0),
                    rand_tensor(r, &[3, 2, 3], 1.0),
                    rand_tensor(r, &[3], 1.0),
                ]
            },
            |t, v| t.conv1d(v[0], v[1], Some(v[2]), 2, 1),
        ),
        case(
            "layer_norm",
            4,
            |r| {
                vec![
                    rand_tensor(r, &[3, 6], 2.0),
                    rand_tensor(r, &[6], 1.0),
                    rand_tensor(r, &[6], 1.0),
                ]
            },
            |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5),
        ),
        case(
            "gelu",
            5,
            |r| vec![rand_tensor(r, &[4, 5], 3.0)],
            |t, v| Ok(t.gelu(v[0])),
        ),
        case(
            "silu",
            6,
            |r| vec![rand_tensor(r, &[4, 5], 3.0)],
            |t, v| Ok(t.silu(v[0])),
        ),
        case(
            "softmax axis 0",
            7,
            |r| vec![rand_tensor(r, &[2, 3, 4], 2.0)],
            |t, v| t.softmax(v[0], 0),
        ),
        case(
            "softmax axis 1",
            8,
            |r| vec![rand_tensor(r, &[2, 3, 4], 2.0)],
            |t, v| t.softmax(v[0], 1),
        ),
        case(
            "softmax axis 2",
            9,
            |r| vec![rand_tensor(r, &[2, 3, 4], 2.0)],
            |t, v| t.softmax(v[0], 2),
        ),
        case(
            "avg_pool1d odd length",
            10,
            |r| vec![rand_tensor(r, &[2, 7, 3], 1.0)],
            |t, v| t.avg_pool1d(v[0], 2, 2),
        ),
        case(
            "global_avg_pool",
            11,
            |r| vec![rand_tensor(r, &[2, 5, 3], 1.0)],
            |t, v| t.global_avg_pool(v[0]),
        ),
        case(
            "l2_normalize",
            12,
            |r| vec![rand_tensor(r, &[3, 5], 1.0)],
            |t, v| Ok(t.l2_normalize(v[0], 1e-12)),
        ),
        case(
            "embedding_lookup",
            13,
            |r| vec![rand_tensor(r, &[4, 3], 1.0)],
            |t, v| t.embedding_lookup(v[0], &[2, 0, 2, 3]),
        ),
        case(
            "causal_mha",
            14,
            |r| (0..3).map(|_| rand_tensor(r, &[2, 5, 4], 1.0)).collect(),
            |t, v| t.causal_mha(v[0], v[1], v[2], 2, AttentionMask::PrefixCausal { prefix: 2 }),
        ),
        case(
            "full mha",
            15,
            |r| (0..3).map(|_| rand_tensor(r, &[1, 4, 6], 1.0)).collect(),
            |t, v| t.causal_mha(v[0], v[1], v[2], 3, AttentionMask::Full),
        ),
        case(
            "cross_entropy",
            16,
            |r| vec![rand_tensor(r, &[4, 3], 2.0)],
            |t, v| t.cross_entropy(v[0], &[0, 2, 1, 2]),
        ),
        case(
            "mse",
            17,
            |r| vec![rand_tensor(r, &[3, 2], 1.0), rand_tensor(r, &[3, 2], 1.0)],
            |t, v| t.mse(v[0], v[1]),
        ),
        case(
            "add broadcast",
            18,
            |r| vec![rand_tensor(r, &[3, 4], 1.0), rand_tensor(r, &[4], 1.0)],
            |t, v| t.add(v[0], v[1]),
        ),
        case(
            "mul broadcast",
            19,
            |r| vec![rand_tensor(r, &[2, 3, 4], 1.0), rand_tensor(r, &[3, 4], 1.0)],
            |t, v| t.mul(v[0], v[1]),
        ),
        case(
            "matmul",
            20,
            |r| vec![rand_tensor(r, &[3, 4], 1.0), rand_tensor(r, &[4, 2], 1.0)],
            |t, v| t.matmul(v[0], v[1]),
        ),
        case(
            "concat",
            21,
            |r| vec![rand_tensor(r, &[2, 3, 2], 1.0), rand_tensor(r, &[2, 1, 2], 1.0)],
            |t, v| t.concat(&[v[0], v[1]], 1),
        ),
        case(
            "slice",
            22,
            |r| vec![rand_tensor(r, &[2, 5, 3], 1.0)],
            |t, v| t.slice(v[0], 1, 1, 4),
        ),
        case(
            "reshape scale sum mean",
            23,
            |r| vec![rand_tensor(r, &[2, 6], 1.0)],
            |t, v| {
                let r = t.reshape(v[0], &[3, 4])?;
                let s = t.scale(r, 0.5);
                let a = t.sum(s);
                let b = t.mean(v[0]);
                t.add(a, b)
            },
        ),
    ];
    // Stacked curvature (three-channel layer norm, then l2) makes h = 1e-3
    // truncation error dominate here; a smaller step isolates the VJPs.
    let mut block = case(
        "residual block",
        24,
        |r| {
            vec![
                rand_tensor(r, &[2, 5, 3], 1.0),
                rand_tensor(r, &[3, 3, 3], 0.5),
                rand_tensor(r, &[3], 0.5),
                rand_tensor(r, &[3, 6], 0.5),
                rand_tensor(r, &[6, 3], 0.5),
            ]
        },
        |t, v| {
            let ones = t.input(Tensor::full(&[3], 1.0));
            let zeros = t.input(Tensor::zeros(&[3]));
            let c = t.conv1d_same(v[0], v[1], Some(v[2]))?;
            let n = t.layer_norm(c, ones, zeros, 1e-5)?;
            let e = t.dense(n, v[3], None)?;
            let g = t.gelu(e);
            let p = t.dense(g, v[4], None)?;
            let s = t.add(v[0], p)?;
            let pool = t.avg_pool1d(s, 2, 2)?;
            let gp = t.global_avg_pool(pool)?;
            Ok(t.l2_normalize(gp, 1e-12))
        },
    );
    block.h = 1e-5;
    cases.push(block);
    cases
}
