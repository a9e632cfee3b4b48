//! Least-energy solutions of coupled critical Schrödinger systems on a ball
//! in R⁴, with explicit level estimates and competitor certificates.

pub mod algebra;
pub mod discretization;
pub mod quadrature;
pub mod bubbles;
pub mod functional;
pub mod nehari;
pub mod estimates;

use algebra::AlgebraError;
use bubbles::BubbleError;
use discretization::DiscretizationError;
use estimates::EstimatesError;
use functional::FunctionalError;
use nehari::NehariError;

/// Coarse cause of a failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Malformed input: shapes, breakpoints, grid parameters.
    Input,
    /// Well-formed input outside the hypotheses (sign conditions, λ range, geometry).
    Hypothesis,
    /// Iterations or certificates that did not succeed.
    Numerical,
}

pub trait Classify {
    fn kind(&self) -> FailureKind;
}

impl Classify for AlgebraError {
    fn kind(&self) -> FailureKind {
        match self {
            AlgebraError::NotConcave => FailureKind::Numerical,
            _ => FailureKind::Input,
        }
    }
}

impl Classify for DiscretizationError {
    fn kind(&self) -> FailureKind {
        match self {
            DiscretizationError::BadParameters(_) | DiscretizationError::GridMismatch { .. } => FailureKind::Input,
            DiscretizationError::IterationNotConverged(_) => FailureKind::Numerical,
            DiscretizationError::LambdaOutOfRange { .. } => FailureKind::Hypothesis,
        }
    }
}

impl Classify for BubbleError {
    fn kind(&self) -> FailureKind {
        match self {
            BubbleError::QuadratureNotConverged(_) => FailureKind::Numerical,
            BubbleError::CooperationViolated { .. } | BubbleError::HypothesisViolated(_) => FailureKind::Hypothesis,
            BubbleError::Algebra(e) => e.kind(),
            BubbleError::Discretization(e) => e.kind(),
        }
    }
}

impl Classify for FunctionalError {
    fn kind(&self) -> FailureKind {
        match self {
            FunctionalError::DimensionMismatch(_) => FailureKind::Input,
            FunctionalError::LambdaOutOfRange { .. } => FailureKind::Hypothesis,
            FunctionalError::Discretization(e) => e.kind(),
            FunctionalError::Algebra(e) => e.kind(),
        }
    }
}

impl Classify for NehariError {
    fn kind(&self) -> FailureKind {
        match self {
            NehariError::HypothesisViolated(_) => FailureKind::Hypothesis,
            NehariError::InvalidOptions(_) => FailureKind::Input,
            NehariError::Functional(e) => e.kind(),
            _ => FailureKind::Numerical,
        }
    }
}

impl Classify for EstimatesError {
    fn kind(&self) -> FailureKind {
        match self {
            EstimatesError::HypothesisViolated(_) | EstimatesError::GeometryViolated(_) => FailureKind::Hypothesis,
            EstimatesError::NotConcave { .. } | EstimatesError::SweepExhausted(_) => FailureKind::Numerical,
            EstimatesError::Bubble(e) => e.kind(),
            EstimatesError::Discretization(e) => e.kind(),
            EstimatesError::Functional(e) => e.kind(),
            EstimatesError::Nehari(e) => e.kind(),
            EstimatesError::Algebra(e) => e.kind(),
        }
    }
}
