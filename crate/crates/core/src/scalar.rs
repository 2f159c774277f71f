use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating point type the cross-section assembly is generic over.
pub trait Real: Float + NumAssign + FromPrimitive + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
