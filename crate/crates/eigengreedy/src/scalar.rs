//! Scalar abstraction: the numeric kernels are generic over the real field
//! backing the (complex) matrix entries, with `f64` as the default used by
//! the CLI and the concrete aliases at the crate root.

use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type all core math is generic over.
///
/// `nalgebra::RealField` supplies the linear-algebra operations and the
/// num-traits conversions move literal constants in and out of the field.
pub trait Scalar: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn c<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Complex number over the working scalar type.
pub type Cx<T> = Complex<T>;

/// Dynamically sized complex matrix over the working scalar type.
pub type CMatrix<T> = nalgebra::DMatrix<Cx<T>>;

/// Dynamically sized complex column vector.
pub type CVector<T> = nalgebra::DVector<Cx<T>>;

/// Dynamically sized real matrix.
pub type RMatrix<T> = nalgebra::DMatrix<T>;

/// Dynamically sized real column vector.
pub type RVector<T> = nalgebra::DVector<T>;
