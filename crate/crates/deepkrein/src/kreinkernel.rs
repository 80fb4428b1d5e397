//! Closed-form network kernels `K_NN`, `K̄_NN` and Gram matrices.
//!
//! `K_NN(x, x′) = σ_{d−1}(H_{d−2} σ_{d−2}(… H_0 σ_0(⟨x, x′⟩)))`; the
//! associated kernel uses the associated activations `σ̄_q`. Both are
//! evaluated by the scalar recursion, never through the feature map.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::netcore::Architecture;
use crate::pushforward::FlatSpace;
use crate::{Error, Result};

/// Which of the two kernels of an architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Krein,
    Associated,
}

/// An architecture together with the kernel variant to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDefinition {
    pub arch: Architecture,
    pub variant: Variant,
}

impl KernelDefinition {
    pub fn krein(arch: Architecture) -> Self {
        Self { arch, variant: Variant::Krein }
    }

    pub fn associated(arch: Architecture) -> Self {
        Self { arch, variant: Variant::Associated }
    }

    pub fn eval(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        match self.variant {
            Variant::Krein => kernel(self, x, xp),
            Variant::Associated => associated_kernel(self, x, xp),
        }
    }
}

fn recursion(arch: &Architecture, associated: bool, x: &[f64], xp: &[f64]) -> Result<f64> {
    let dim = arch.input_dim();
    for v in [x, xp] {
        if v.len() != dim {
            return Err(Error::Dimension { expected: dim, got: v.len() });
        }
    }
    let mut k: f64 = x.iter().zip(xp).map(|(a, b)| a * b).sum();
    for q in 0..arch.depth() {
        if q > 0 {
            k *= arch.width(q - 1) as f64;
        }
        let sigma = arch.activation(q);
        k = if associated { sigma.associated().eval(k) } else { sigma.eval(k) }.map_err(|e| e.at_layer(q))?;
    }
    Ok(k)
}

/// `K_NN(x, x′)`. The variant stored in `def` is ignored.
pub fn kernel(def: &KernelDefinition, x: &[f64], xp: &[f64]) -> Result<f64> {
    recursion(&def.arch, false, x, xp)
}

/// `K̄_NN(x, x′)`. The variant stored in `def` is ignored.
pub fn associated_kernel(def: &KernelDefinition, x: &[f64], xp: &[f64]) -> Result<f64> {
    recursion(&def.arch, true, x, xp)
}

/// `(K₊, K₋)` from the sign split of the truncated metric, so that
/// `K₊ − K₋ ≈ K` and `K₊ + K₋ ≈ K̄`.
pub fn kernel_parts(arch: &Architecture, x: &[f64], xp: &[f64], trunc: u32) -> Result<(f64, f64)> {
    kernel_parts_in(&FlatSpace::build(arch, trunc)?, x, xp)
}

/// [`kernel_parts`] on a prebuilt flat space.
pub fn kernel_parts_in(space: &FlatSpace, x: &[f64], xp: &[f64]) -> Result<(f64, f64)> {
    let (phi, phip) = (space.feature_map(x)?, space.feature_map(xp)?);
    let g = space.metric();
    let (mut plus, mut minus) = (0.0, 0.0);
    for ((g, a), b) in g.values().iter().zip(phi.values()).zip(phip.values()) {
        let t = a * b;
        if *g > 0.0 {
            plus += g * t;
        } else {
            minus -= g * t;
        }
    }
    Ok((plus, minus))
}

/// Gram matrix `G_ij = K(x_i, x_j)` for the variant in `def`.
///
/// The upper triangle is computed (in parallel over rows) and mirrored, so
/// the result is exactly symmetric. Failures carry the `(i, j)` cell.
pub fn gram(def: &KernelDefinition, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = xs.len();
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| def.eval(&xs[i], &xs[j]).map_err(|e| Error::Entry { i, j, source: Box::new(e) }))
                .collect()
        })
        .collect();
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row?.into_iter().enumerate() {
            g[(i, i + k)] = v;
            g[(i + k, i)] = v;
        }
    }
    Ok(g)
}

/// Cross-kernel matrix `C_ij = K(a_i, b_j)`.
pub fn cross_gram(def: &KernelDefinition, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let rows: Vec<Result<Vec<f64>>> = a
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            b.iter()
                .enumerate()
                .map(|(j, xp)| def.eval(x, xp).map_err(|e| Error::Entry { i, j, source: Box::new(e) }))
                .collect()
        })
        .collect();
    let mut c = DMatrix::zeros(a.len(), b.len());
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            c[(i, j)] = v;
        }
    }
    Ok(c)
}
