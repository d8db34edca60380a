//! Central-difference gradient checking for every graph primitive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

const MAX_RETRIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    MatMul,
    MatMulNt,
    MatMulTn,
    Add,
    AddRow,
    Mul,
    DivCol,
    Scale,
    Exp,
    EluPlusOne,
    Gelu,
    Relu,
    Tanh,
    Softmax,
    LayerNorm,
    MeanAxis0,
    MeanAxis1,
    Sum,
    ConcatRows,
    ConcatCols,
    SliceRows,
    SliceCols,
    Transpose,
    Embedding,
    CrossEntropy,
}

impl Primitive {
    pub const ALL: [Primitive; 25] = [
        Primitive::MatMul,
        Primitive::MatMulNt,
        Primitive::MatMulTn,
        Primitive::Add,
        Primitive::AddRow,
        Primitive::Mul,
        Primitive::DivCol,
        Primitive::Scale,
        Primitive::Exp,
        Primitive::EluPlusOne,
        Primitive::Gelu,
        Primitive::Relu,
        Primitive::Tanh,
        Primitive::Softmax,
        Primitive::LayerNorm,
        Primitive::MeanAxis0,
        Primitive::MeanAxis1,
        Primitive::Sum,
        Primitive::ConcatRows,
        Primitive::ConcatCols,
        Primitive::SliceRows,
        Primitive::SliceCols,
        Primitive::Transpose,
        Primitive::Embedding,
        Primitive::CrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::MatMulNt => "matmul_nt",
            Primitive::MatMulTn => "matmul_tn",
            Primitive::Add => "add",
            Primitive::AddRow => "add_row",
            Primitive::Mul => "mul",
            Primitive::DivCol => "div_col",
            Primitive::Scale => "scale",
            Primitive::Exp => "exp",
            Primitive::EluPlusOne => "elu_plus_one",
            Primitive::Gelu => "gelu",
            Primitive::Relu => "relu",
            Primitive::Tanh => "tanh",
            Primitive::Softmax => "softmax",
            Primitive::LayerNorm => "layer_norm",
            Primitive::MeanAxis0 => "mean_axis0",
            Primitive::MeanAxis1 => "mean_axis1",
            Primitive::Sum => "sum",
            Primitive::ConcatRows => "concat_rows",
            Primitive::ConcatCols => "concat_cols",
            Primitive::SliceRows => "slice_rows",
            Primitive::SliceCols => "slice_cols",
            Primitive::Transpose => "transpose",
            Primitive::Embedding => "embedding",
            Primitive::CrossEntropy => "cross_entropy",
        }
    }

    /// Conforming input shapes drawn from `rng`, dims in `1..=5`.
    pub fn random_shapes<R: Rng + ?Sized>(self, rng: &mut R) -> Vec<Vec<usize>> {
        let mut d = || rng.random_range(1..=5usize);
        let (m, k, n) = (d(), d(), d());
        match self {
            Primitive::MatMul => vec![vec![m, k], vec![k, n]],
            Primitive::MatMulNt => vec![vec![m, k], vec![n, k]],
            Primitive::MatMulTn => vec![vec![k, m], vec![k, n]],
            Primitive::Add | Primitive::Mul | Primitive::ConcatRows => {
                vec![vec![m, n], vec![m, n]]
            }
            Primitive::ConcatCols => vec![vec![m, n], vec![m, k]],
            Primitive::AddRow => vec![vec![m, n], vec![n]],
            Primitive::DivCol => vec![vec![m, n], vec![m, 1]],
            Primitive::LayerNorm => vec![vec![m, n + 1], vec![n + 1], vec![n + 1]],
            Primitive::Embedding => vec![vec![m + 1, n], vec![k]],
            Primitive::CrossEntropy => vec![vec![m, n + 1]],
            _ => vec![vec![m, n]],
        }
    }

    fn has_kink(self) -> bool {
        matches!(self, Primitive::Relu)
    }
}

struct Case {
    inputs: Vec<Tensor>,
    ids: Vec<usize>,
    mask: Vec<bool>,
    weights: Vec<f64>,
}

fn build(op: Primitive, g: &mut Graph, vars: &[Var], case: &Case) -> Result<Var> {
    Ok(match op {
        Primitive::MatMul => g.matmul(vars[0], vars[1])?,
        Primitive::MatMulNt => g.matmul_nt(vars[0], vars[1])?,
        Primitive::MatMulTn => g.matmul_tn(vars[0], vars[1])?,
        Primitive::Add => g.add(vars[0], vars[1])?,
        Primitive::AddRow => g.add_row(vars[0], vars[1])?,
        Primitive::Mul => g.mul(vars[0], vars[1])?,
        Primitive::DivCol => g.div_col(vars[0], vars[1], 1e-6)?,
        Primitive::Scale => g.scale(vars[0], -1.7),
        Primitive::Exp => g.exp(vars[0]),
        Primitive::EluPlusOne => g.elu_plus_one(vars[0]),
        Primitive::Gelu => g.gelu(vars[0]),
        Primitive::Relu => g.relu(vars[0]),
        Primitive::Tanh => g.tanh(vars[0]),
        Primitive::Softmax => g.softmax(vars[0]),
        Primitive::LayerNorm => g.layer_norm(vars[0], vars[1], vars[2])?,
        Primitive::MeanAxis0 => g.mean_axis(vars[0], 0)?,
        Primitive::MeanAxis1 => g.mean_axis(vars[0], 1)?,
        Primitive::Sum => g.sum(vars[0]),
        Primitive::ConcatRows => g.concat_rows(&[vars[0], vars[1]])?,
        Primitive::ConcatCols => g.concat_cols(&[vars[0], vars[1]])?,
        Primitive::SliceRows => {
            let (m, _) = g.dims(vars[0]);
            g.slice_rows(vars[0], m / 2, m - m / 2)?
        }
        Primitive::SliceCols => {
            let (_, n) = g.dims(vars[0]);
            g.slice_cols(vars[0], n / 2, n - n / 2)?
        }
        Primitive::Transpose => g.transpose(vars[0]),
        Primitive::Embedding => g.embedding(vars[0], &case.ids)?,
        Primitive::CrossEntropy => {
            let (t, _) = g.dims(vars[0]);
            g.cross_entropy(vars[0], &case.ids[..t], &case.mask)?
        }
    })
}

/// Scalar objective `sum(op(inputs) ∘ weights)`.
fn objective(op: Primitive, case: &Case, track: bool) -> Result<(Graph, Vec<Var>, Var)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| g.leaf(&t.clone().with_grad(track))).collect();
    let out = build(op, &mut g, &vars, case)?;
    let shape = g.shape(out).to_vec();
    let w = g.constant(&shape, case.weights.clone())?;
    let prod = g.mul(out, w)?;
    let loss = g.sum(prod);
    Ok((g, vars, loss))
}

fn sample_case<R: Rng + ?Sized>(op: Primitive, shapes: &[Vec<usize>], rng: &mut R) -> Result<Case> {
    let mut inputs: Vec<Tensor> = Vec::new();
    let mut ids = Vec::new();
    let mut mask = Vec::new();
    match op {
        Primitive::Embedding => {
            let table = &shapes[0];
            let len = shapes.get(1).and_then(|s| s.first()).copied().unwrap_or(1);
            inputs.push(Tensor::uniform(table, 1.0, rng));
            ids = (0..len).map(|_| rng.random_range(0..table[0])).collect();
        }
        Primitive::CrossEntropy => {
            let s = &shapes[0];
            inputs.push(Tensor::uniform(s, 2.0, rng));
            ids = (0..s[0]).map(|_| rng.random_range(0..s[1])).collect();
            mask = (0..s[0]).map(|_| rng.random_bool(0.7)).collect();
            mask[0] = true;
        }
        Primitive::DivCol => {
            inputs.push(Tensor::uniform(&shapes[0], 1.0, rng));
            let mut den = Tensor::uniform(&shapes[1], 1.0, rng);
            den.data_mut().iter_mut().for_each(|v| *v += 1.5);
            inputs.push(den);
        }
        _ => {
            for s in shapes {
                inputs.push(Tensor::uniform(s, 1.0, rng));
            }
        }
    }
    // One forward pass just to learn the output size.
    let probe = Case { inputs: inputs.clone(), ids: ids.clone(), mask: mask.clone(), weights: Vec::new() };
    let mut g = Graph::new();
    let vars: Vec<Var> = probe.inputs.iter().map(|t| g.leaf(t)).collect();
    let out = build(op, &mut g, &vars, &probe)?;
    let weights = (0..g.value(out).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(Case { inputs, ids, mask, weights })
}

/// Max over every input coordinate of
/// `|analytic - central| / max(1, |central|)`.
pub fn grad_check(op: Primitive, shapes: &[Vec<usize>], eps: f64, seed: u64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(TensorError::InvalidArgument {
            op: "grad_check",
            detail: format!("eps {eps} outside [1e-7, 1e-3]"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempt = 0;
    let case = loop {
        let case = sample_case(op, shapes, &mut rng)?;
        let near_kink = op.has_kink() && case.inputs.iter().flat_map(|t| t.data()).any(|v| v.abs() < 10.0 * eps);
        if !near_kink {
            break case;
        }
        attempt += 1;
        if attempt > MAX_RETRIES {
            return Err(TensorError::NonDifferentiable(MAX_RETRIES));
        }
    };

    let (mut g, vars, loss) = objective(op, &case, true)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&case.inputs)
        .map(|(&v, t)| g.grad(v).map(<[f64]>::to_vec).unwrap_or(vec![0.0; t.len()]))
        .collect();

    let eval = |c: &Case| -> Result<f64> {
        let (g, _, loss) = objective(op, c, false)?;
        Ok(g.scalar(loss))
    };
    let mut worst: f64 = 0.0;
    let mut probe = Case {
        inputs: case.inputs.clone(),
        ids: case.ids.clone(),
        mask: case.mask.clone(),
        weights: case.weights.clone(),
    };
    for (ti, t) in case.inputs.iter().enumerate() {
        for j in 0..t.len() {
            let x0 = t.data()[j];
            probe.inputs[ti].data_mut()[j] = x0 + eps;
            let up = eval(&probe)?;
            probe.inputs[ti].data_mut()[j] = x0 - eps;
            let down = eval(&probe)?;
            probe.inputs[ti].data_mut()[j] = x0;
            let central = (up - down) / (2.0 * eps);
            let err = (analytic[ti][j] - central).abs() / central.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
