//! Relational graph models of the untyped lambda calculus as executable
//! non-idempotent intersection type systems.

pub mod analysis;
pub mod boehm;
pub mod model;
pub mod reduction;
pub mod semantics;
pub mod syntax;
pub mod tree;
pub mod typing;
