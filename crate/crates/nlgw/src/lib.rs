//! Exact-arithmetic toolkit for the Noether-Lefschetz / Gromov-Witten
//! pipeline of K3^[2]-type pencils.
//!
//! The crate computes, at desk scale and with exact rational arithmetic
//! throughout:
//!
//! - q-expansions of the classical series (eta products, Eisenstein series
//!   for an odd quadratic character, theta, Delta) — [`qseries`];
//! - lattice bookkeeping for Noether-Lefschetz divisors: bordered
//!   determinants, discriminants, refined/unrefined conversions and the
//!   Heegner-to-first-type triangular transform — [`lattice`];
//! - generating series of Noether-Lefschetz numbers for the prime
//!   discriminant families (Fano of a cubic fourfold, Debarre-Voisin),
//!   determined either from explicit modular-form data or by solving the
//!   support-constrained space of weight 11 forms — [`nlforms`];
//! - truncated cohomology rings of products of projective spaces,
//!   abelianized (Martin) integration, Euler numbers and Riemann-Roch
//!   degrees of the pencil total spaces — [`cohoring`];
//! - small I-functions of the built-in pencils, the mirror map, and
//!   genus-0 one-point invariants in fiber classes — [`mirror`];
//! - reduced Gromov-Witten data for K3^[2]-type: primitive F/G tables,
//!   multiple-cover assembly/subtraction, the formal Hecke operator —
//!   [`redgw`];
//! - the Gromov-Witten/Noether-Lefschetz consistency engine — [`gwnl`];
//! - Gopakumar-Vafa conversions and the abelian-surface FLS transform —
//!   [`bps`].
//!
//! All public arithmetic is exact; no floating point is used anywhere.

pub mod bps;
pub mod cohoring;
pub mod gwnl;
pub mod lattice;
pub mod mirror;
pub mod nlforms;
pub mod qseries;
pub mod redgw;

pub use qseries::{FracSeries, Rational};
