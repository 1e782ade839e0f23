//! Central finite-difference verification of tape gradients.
//!
//! Analytic gradients come from the f32 tape exactly as the model computes
//! them. The numeric side re-evaluates the same graph at f64 so the h=1e-3
//! stencil is not drowned by single-precision forward noise.

use super::real::Real;
use super::tape::{Tape, TensorId};
use super::tensor::ParamStore;
use crate::error::Result;

/// A differentiable scalar graph that can be rebuilt at either precision.
/// `params[i]` is the leaf for the i-th parameter of the store it is checked
/// against; the builder must be deterministic and pure in those leaves.
pub trait LossGraph {
    fn build<T: Real>(&self, tape: &mut Tape<T>, params: &[TensorId]) -> Result<TensorId>;
}

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tol: f64,
    pub h: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_err < self.tol)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }
}

/// |a - n| / max(|a|, |n|, 1): relative where gradients are large, absolute
/// where they vanish.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Analytic gradients of the graph for every parameter, in store order.
pub fn analytic_grads(graph: &impl LossGraph, store: &ParamStore) -> Result<Vec<Vec<f64>>> {
    let mut tape: Tape<f32> = Tape::new();
    let leaves: Vec<TensorId> = store.ids().map(|id| tape.param(store, id)).collect();
    let loss = graph.build(&mut tape, &leaves)?;
    tape.backward(loss)?;
    Ok(leaves
        .iter()
        .map(|&leaf| match tape.grad(leaf) {
            Some(g) => g.iter().map(|&v| v as f64).collect(),
            None => vec![0.0; tape.data(leaf).len()],
        })
        .collect())
}

/// Central finite differences at f64 over every parameter element.
pub fn numeric_grads(graph: &impl LossGraph, store: &ParamStore, h: f64) -> Result<Vec<Vec<f64>>> {
    let base: Vec<(Vec<usize>, Vec<f64>)> = store
        .ids()
        .map(|id| {
            let t = store.get(id);
            (t.shape.clone(), t.data.iter().map(|&v| v as f64).collect())
        })
        .collect();

    let eval = |values: &[(Vec<usize>, Vec<f64>)]| -> Result<f64> {
        let mut tape: Tape<f64> = Tape::new();
        let leaves: Vec<TensorId> = values
            .iter()
            .map(|(shape, data)| tape.input(shape.clone(), data.clone()))
            .collect();
        let loss = graph.build(&mut tape, &leaves)?;
        Ok(tape.scalar_value(loss))
    };

    let mut grads = Vec::with_capacity(base.len());
    let mut work = base.clone();
    for p in 0..base.len() {
        let mut g = vec![0.0; base[p].1.len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let x = base[p].1[i];
            work[p].1[i] = x + h;
            let lp = eval(&work)?;
            work[p].1[i] = x - h;
            let lm = eval(&work)?;
            work[p].1[i] = x;
            *gi = (lp - lm) / (2.0 * h);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Compare per-element and reduce to a per-tensor worst case.
pub fn compare_grads(
    store: &ParamStore,
    analytic: &[Vec<f64>],
    numeric: &[Vec<f64>],
    h: f64,
    tol: f64,
) -> GradCheckReport {
    let entries = store
        .ids()
        .enumerate()
        .map(|(p, id)| {
            let mut worst = (0.0f64, 0usize, 0.0f64, 0.0f64);
            for (i, (&a, &n)) in analytic[p].iter().zip(&numeric[p]).enumerate() {
                let e = rel_err(a, n);
                if e > worst.0 {
                    worst = (e, i, a, n);
                }
            }
            GradCheckEntry {
                name: store.name(id).to_string(),
                max_rel_err: worst.0,
                worst_index: worst.1,
                analytic_at_worst: worst.2,
                numeric_at_worst: worst.3,
            }
        })
        .collect();
    GradCheckReport { tol, h, entries }
}

/// Full check: analytic vs central differences on every parameter element.
pub fn grad_check(
    graph: &impl LossGraph,
    store: &ParamStore,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let analytic = analytic_grads(graph, store)?;
    let numeric = numeric_grads(graph, store, h)?;
    Ok(compare_grads(store, &analytic, &numeric, h, tol))
}
