//! Parameter construction and named-layer helpers shared by the encoder and heads.

use kmerspace_autodiff::{init_truncated_normal, ParamStore, Tape, Tensor, Var};
use rand::RngCore;

use crate::error::Result;

pub const INIT_STDDEV: f64 = 0.05;
pub const LN_EPS: f64 = 1e-5;
pub const L2_EPS: f64 = 1e-12;

/// Collects parameters in creation order. Without an RNG, weights are zero
/// (used to check stored shapes against a config).
pub(crate) struct Builder<'a> {
    pub store: ParamStore<f32>,
    rng: Option<&'a mut dyn RngCore>,
}

impl<'a> Builder<'a> {
    pub fn new(rng: &'a mut dyn RngCore) -> Self {
        Self {
            store: ParamStore::new(),
            rng: Some(rng),
        }
    }

    pub fn zeroed() -> Self {
        Self {
            store: ParamStore::new(),
            rng: None,
        }
    }

    fn weight(&mut self, name: String, shape: &[usize]) -> Result<()> {
        let t = match self.rng.as_deref_mut() {
            Some(rng) => init_truncated_normal(shape, 0.0, INIT_STDDEV, rng),
            None => Tensor::zeros(shape),
        };
        self.store.insert(name, t)?;
        Ok(())
    }

    fn constant(&mut self, name: String, shape: &[usize], v: f32) -> Result<()> {
        self.store.insert(name, Tensor::full(shape, v))?;
        Ok(())
    }

    pub fn dense(&mut self, name: &str, din: usize, dout: usize) -> Result<()> {
        self.weight(format!("{name}.w"), &[din, dout])?;
        self.constant(format!("{name}.b"), &[dout], 0.0)
    }

    pub fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize) -> Result<()> {
        self.weight(format!("{name}.w"), &[k, cin, cout])?;
        self.constant(format!("{name}.b"), &[cout], 0.0)
    }

    pub fn layer_norm(&mut self, name: &str, c: usize) -> Result<()> {
        self.constant(format!("{name}.g"), &[c], 1.0)?;
        self.constant(format!("{name}.b"), &[c], 0.0)
    }

    pub fn table(&mut self, name: &str, rows: usize, cols: usize) -> Result<()> {
        self.weight(name.to_string(), &[rows, cols])
    }
}

fn pair(tape: &mut Tape<f32>, store: &ParamStore<f32>, name: &str, a: &str, b: &str) -> Result<(Var, Var)> {
    Ok((
        tape.param_named(store, &format!("{name}.{a}"))?,
        tape.param_named(store, &format!("{name}.{b}"))?,
    ))
}

pub(crate) fn dense(tape: &mut Tape<f32>, store: &ParamStore<f32>, name: &str, x: Var) -> Result<Var> {
    let (w, b) = pair(tape, store, name, "w", "b")?;
    Ok(tape.dense(x, w, Some(b))?)
}

pub(crate) fn conv_same(tape: &mut Tape<f32>, store: &ParamStore<f32>, name: &str, x: Var) -> Result<Var> {
    let (w, b) = pair(tape, store, name, "w", "b")?;
    Ok(tape.conv1d_same(x, w, Some(b))?)
}

pub(crate) fn layer_norm(tape: &mut Tape<f32>, store: &ParamStore<f32>, name: &str, x: Var) -> Result<Var> {
    let (g, b) = pair(tape, store, name, "g", "b")?;
    Ok(tape.layer_norm(x, g, b, LN_EPS)?)
}

/// Stored parameters must match the layout `expected` in names and shapes.
pub(crate) fn check_layout(expected: &ParamStore<f32>, found: &ParamStore<f32>, what: &str) -> Result<()> {
    let same = expected.len() == found.len()
        && expected
            .iter()
            .zip(found.iter())
            .all(|(a, b)| a.0 == b.0 && a.1.shape() == b.1.shape());
    if same {
        Ok(())
    } else {
        Err(crate::Error::Format(format!(
            "{what} parameters do not match the stored config"
        )))
    }
}
