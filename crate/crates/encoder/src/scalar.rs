//! Floating-point element types the encoder can run in.

use nalgebra::RealField;

/// `f32` for inference, `f64` for gradient checking.
pub trait Real: RealField + Copy + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn to_f32(self) -> f32;
    fn is_finite_val(self) -> bool;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn to_f32(self) -> f32 {
        self
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
}
