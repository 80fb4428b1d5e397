//! Deep networks with entire activation functions, rewritten as indefinite
//! (Kreĭn) kernel machines.
//!
//! A fully connected network `f(x) = σ_{d-1}(W_{d-1} … σ_0(W_0 x))` whose
//! activations are entire functions can be "flattened": the weights are pushed
//! through every non-linearity until the network becomes a fixed feature map
//! followed by a linear readout, `f(x) = ⟨⟨v_NN, φ_NN(x)⟩⟩_{g_NN}`, where the
//! metric `g_NN` may be indefinite. This crate provides
//!
//! * [`activations`] — Taylor-coefficient streams and their absolute-value
//!   ("associated") counterparts,
//! * [`netcore`] — the reference network, its objective and gradient descent,
//! * [`pushforward`] — the truncated explicit flat representation,
//! * [`kreinkernel`] — closed-form network kernels and Gram matrices,
//! * [`ksvm`] — the equivalent indefinite SVM,
//! * [`analysis`] — regularisation functionals, Rademacher and sparsity bounds.
//!
//! ```
//! use deepkrein::activations::ActivationSpec;
//! use deepkrein::kreinkernel::{kernel, KernelDefinition};
//! use deepkrein::netcore::Architecture;
//!
//! let arch = Architecture::new(1, vec![2, 1], vec![ActivationSpec::tanh(); 2]).unwrap();
//! let k = kernel(&KernelDefinition::krein(arch), &[0.5], &[0.5]).unwrap();
//! assert!((k - (2.0 * 0.25f64.tanh()).tanh()).abs() < 1e-15);
//! ```

pub mod activations;
pub mod analysis;
mod error;
pub mod kreinkernel;
pub mod ksvm;
pub mod netcore;
pub mod pushforward;
pub mod seed;

pub use error::{Error, Result};
