use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric kernels are generic over (f32 or f64).
///
/// The engine itself runs on [`crate::Real`]; the generic bound exists so the
/// math stays type-agnostic and can be exercised at lower precision in tests.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64; panics only for values outside the type's range,
    /// which never happens for the constants used here.
    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    fn to_f64c(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Norm tolerance used by unit-vector checks; wider for f32.
    fn unit_norm_tolerance() -> Self {
        let eps_based = Self::epsilon() * Self::from_f64c(64.0);
        let floor = Self::from_f64c(1e-9);
        if eps_based > floor {
            eps_based
        } else {
            floor
        }
    }

    fn ln_2pi() -> Self {
        Self::from_f64c(core::f64::consts::TAU.ln())
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + serde::Serialize
        + serde::de::DeserializeOwned
        + Send
        + Sync
        + 'static
{
}
