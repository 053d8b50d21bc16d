//! Fixed high-order quadrature over the unit interval.
//!
//! A 128-point Gauss–Legendre rule integrates polynomials up to degree 255
//! exactly, which makes it an independent oracle for the closed-form
//! `∫₀¹ MTE(u, x) du` expressions used throughout: any disagreement beyond
//! ~1e-10 indicates a bug in the closed form, not in the quadrature.

use std::num::NonZeroUsize;
use std::sync::LazyLock;

use gauss_quad::GaussLegendre;

static RULE: LazyLock<GaussLegendre> =
    LazyLock::new(|| GaussLegendre::new(NonZeroUsize::new(128).unwrap()));

/// Integrate `f` over `[0, 1]` with the 128-point Gauss–Legendre rule.
pub fn integrate_unit(f: impl Fn(f64) -> f64) -> f64 {
    RULE.integrate(0.0, 1.0, f)
}
