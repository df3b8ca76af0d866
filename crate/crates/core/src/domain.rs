//! Effective domain of the exponent functionals.
//!
//! The set of real arguments whose large-jump exponential integrals are all
//! finite is convex and contains the origin. Every jump specification
//! contributes its own constraint; the intersection is represented as a list
//! of half-spaces plus, for density-specified measures, opaque membership
//! callbacks.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

/// Position of a point relative to the domain: strictly inside, on the
/// topological boundary, or outside the closure.
///
/// Membership of boundary points depends on the individual constraint
/// (a strict half-space excludes them, a closed one includes them), which is
/// why classification is kept separate from membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Boundary,
    Outside,
}

/// A constraint of the form `⟨normal, y⟩ < offset` (strict) or `≤ offset`.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub normal: DVector<f64>,
    pub offset: f64,
    /// Whether boundary points are excluded from the domain.
    pub strict: bool,
}

impl HalfSpace {
    /// `offset - ⟨normal, y⟩`, positive inside.
    pub fn margin(&self, y: &[f64]) -> f64 {
        let dot: f64 = self
            .normal
            .iter()
            .zip(y.iter())
            .map(|(n, v)| n * v)
            .sum();
        self.offset - dot
    }
}

/// Opaque membership test used by density-specified measures.
pub type MembershipFn = Arc<dyn Fn(&[f64]) -> Region + Send + Sync>;

/// Intersection of half-space and callback constraints.
///
/// No constraints at all means the whole space. Classification against the
/// half-space part is exact; callbacks are taken at their word.
#[derive(Clone, Default)]
pub struct DomainY {
    half_spaces: Vec<HalfSpace>,
    callbacks: Vec<MembershipFn>,
}

/// Width of the band around a hyperplane classified as `Boundary`.
pub const BOUNDARY_TOL: f64 = 1e-9;

impl DomainY {
    pub fn full_space() -> Self {
        Self::default()
    }

    pub fn from_half_spaces(half_spaces: Vec<HalfSpace>) -> Self {
        DomainY {
            half_spaces,
            callbacks: Vec::new(),
        }
    }

    pub fn push_half_space(&mut self, hs: HalfSpace) {
        self.half_spaces.push(hs);
    }

    pub fn push_callback(&mut self, cb: MembershipFn) {
        self.callbacks.push(cb);
    }

    /// Merge another domain's constraints into this one.
    pub fn intersect(&mut self, other: &DomainY) {
        self.half_spaces.extend(other.half_spaces.iter().cloned());
        self.callbacks.extend(other.callbacks.iter().cloned());
    }

    pub fn is_full_space(&self) -> bool {
        self.half_spaces.is_empty() && self.callbacks.is_empty()
    }

    /// Whether the domain is known to be open (all half-space constraints
    /// strict and no opaque callbacks).
    pub fn is_open(&self) -> bool {
        self.callbacks.is_empty() && self.half_spaces.iter().all(|h| h.strict)
    }

    pub fn has_callbacks(&self) -> bool {
        !self.callbacks.is_empty()
    }

    pub fn half_spaces(&self) -> &[HalfSpace] {
        &self.half_spaces
    }

    /// Classify `y` against the intersection: any `Outside` component wins,
    /// then any `Boundary`, otherwise `Interior`.
    pub fn classify(&self, y: &[f64]) -> Region {
        let mut region = Region::Interior;
        for hs in &self.half_spaces {
            let m = hs.margin(y);
            let scale = 1.0 + hs.offset.abs() + y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if m < -BOUNDARY_TOL * scale {
                return Region::Outside;
            }
            if m <= BOUNDARY_TOL * scale {
                region = Region::Boundary;
            }
        }
        for cb in &self.callbacks {
            match cb(y) {
                Region::Outside => return Region::Outside,
                Region::Boundary => region = Region::Boundary,
                Region::Interior => {}
            }
        }
        region
    }

    /// Smallest half-space margin at `y`, normalized by the constraint
    /// normal. `None` when the half-space part is empty or callbacks make a
    /// distance meaningless; trajectory monitors then degrade gracefully.
    pub fn boundary_distance(&self, y: &[f64]) -> Option<f64> {
        if self.has_callbacks() || self.half_spaces.is_empty() {
            return None;
        }
        let mut dist = f64::INFINITY;
        for hs in &self.half_spaces {
            let norm = hs.normal.norm();
            if norm > 0.0 {
                dist = dist.min(hs.margin(y) / norm);
            }
        }
        Some(dist)
    }

    /// Whether `y` belongs to the domain itself (not just its closure).
    pub fn contains(&self, y: &[f64]) -> bool {
        for hs in &self.half_spaces {
            let m = hs.margin(y);
            let scale = 1.0 + hs.offset.abs() + y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let on_boundary = m.abs() <= BOUNDARY_TOL * scale;
            if m < -BOUNDARY_TOL * scale || (on_boundary && hs.strict) {
                return false;
            }
        }
        self.callbacks.iter().all(|cb| cb(y) != Region::Outside)
    }
}

impl fmt::Debug for DomainY {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_full_space() {
            return write!(f, "DomainY::FullSpace");
        }
        f.debug_struct("DomainY")
            .field("half_spaces", &self.half_spaces)
            .field("callbacks", &self.callbacks.len())
            .finish()
    }
}
