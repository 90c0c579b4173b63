use crate::tensor::Real;

/// Row-major 2x3 affine transform `[t11, t12, t13, t21, t22, t23]` mapping
/// normalized target coordinates to normalized source coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTheta<T = f32>(pub [T; 6]);

impl<T: Real> AffineTheta<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        AffineTheta([o, z, z, z, o, z])
    }

    /// Rotation by `alpha` radians followed by translation `(t1, t2)`.
    pub fn from_rotation(alpha: T, t1: T, t2: T) -> Self {
        let (s, c) = alpha.sin_cos();
        AffineTheta([c, -s, t1, s, c, t2])
    }

    pub fn params(&self) -> &[T; 6] {
        &self.0
    }

    /// Apply to a normalized target point.
    pub fn apply(&self, x: T, y: T) -> (T, T) {
        let p = &self.0;
        (p[0] * x + p[1] * y + p[2], p[3] * x + p[4] * y + p[5])
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

impl<T: Real> Default for AffineTheta<T> {
    fn default() -> Self {
        Self::identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_layout() {
        let t = AffineTheta::<f64>::from_rotation(0.3, 0.1, -0.2);
        let [a, b, c, d, e, f] = t.0;
        assert_eq!((a, b, c), (0.3f64.cos(), -(0.3f64.sin()), 0.1));
        assert_eq!((d, e, f), (0.3f64.sin(), 0.3f64.cos(), -0.2));
        assert!(AffineTheta::<f64>::from_rotation(0.0, 0.0, 0.0).is_identity());
    }
}
