use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the solvers are generic over.
///
/// Tolerances that the solver compares against are expressed in `f64` and
/// converted with [`Real::lit`]; the per-type constants below scale the
/// feasibility checks so that `f32` runs are not held to `f64` accuracy.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Feasibility tolerance for row norms and column sums.
    const FEAS_TOL: f64;
    /// Smallest row norm that `normalize_rows` accepts.
    const TINY: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn is_finite_val(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f64 {
    const FEAS_TOL: f64 = 1e-10;
    const TINY: f64 = 1e-14;
}

impl Real for f32 {
    const FEAS_TOL: f64 = 1e-4;
    const TINY: f64 = 1e-7;
}
