//! Decision rules over neuron activations, and ensembles of them.
//!
//! The crate runs inputs through a dense feed-forward network, records the
//! activations of selected layers, and grows one decision tree per
//! human-understandable feature (a set of class labels). Each root-to-pure-leaf
//! path is a rule of the form `(N_i <= t ∧ N_j > u ∧ ...) -> feature present`.
//! Rules from one tree never overlap, so several of them can be OR-ed into
//! an ensemble whose recall is exactly the sum of its members' recalls.
//!
//! ```
//! use neurule::dataset::{ActivationDataset, LabelColumn, Split};
//! use neurule::ensemble::{build_ensemble, sort_rules, Criterion};
//! use neurule::matrix::Matrix;
//! use neurule::rules::{extract_rules, Postcondition};
//! use neurule::tree::induce_tree;
//!
//! let acts = Matrix::from_rows(1, [[0.1], [0.2], [0.5], [0.9], [1.3]]);
//! let labels = LabelColumn { feature: "f".into(), values: vec![true, true, false, true, false] };
//! let train = ActivationDataset::new("L0".into(), Split::Train,
//!     (0..5).map(|i| i.to_string()).collect(), acts, vec![labels]).unwrap();
//!
//! let tree = induce_tree(&train, "f").unwrap();
//! let presence: Vec<_> = extract_rules(&tree)
//!     .into_iter()
//!     .filter(|r| r.postcondition == Postcondition::Presence)
//!     .collect();
//! assert_eq!(presence.len(), 2);
//!
//! let sorted = sort_rules(presence, &train).unwrap();
//! let ens = build_ensemble(&sorted, Criterion::Top(2), &train).unwrap();
//! assert_eq!(ens.train.recall, 1.0);
//! ```
//!
//! The guide under `book/` walks through each stage; its code blocks run as
//! doc-tests of this crate.

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod rules;
pub mod tree;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/activations.md")]
    mod activations {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
