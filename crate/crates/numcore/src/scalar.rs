use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type for tensors. Covers the two IEEE float widths; everything
/// downstream picks one through the crate-root aliases.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an f64 literal into the working scalar type.
/// Panics only if the literal cannot be represented at all, which for
/// f32/f64 never happens with the constants used in this crate.
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into the working scalar type.
pub fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}
