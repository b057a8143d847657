//! Numerical certification of first- and second-order optimality
//! conditions for bilinear control of a 1-D semilinear heat equation.

// `!(a > b)` is used on purpose where NaN must fail a check; indexed loops
// are the clearer form for the stencil and matrix code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod example;
pub mod goh;
pub mod optimality;
pub mod problem;
pub mod quadratic;
pub mod quadrature;
pub mod solvers;

pub use error::{Error, Result};

/// The guide's code blocks, compiled and run as doc tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problem.md")]
    mod problem {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/first_order.md")]
    mod first_order {}
    #[doc = include_str!("../../../book/src/goh.md")]
    mod goh {}
    #[doc = include_str!("../../../book/src/second_order.md")]
    mod second_order {}
    #[doc = include_str!("../../../book/src/example.md")]
    mod example {}
    #[doc = include_str!("../../../book/src/tolerances.md")]
    mod tolerances {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
