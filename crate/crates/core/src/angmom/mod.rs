//! Angular-momentum bookkeeping and special functions.

pub mod bessel;
pub mod gaunt;
pub mod harmonics;
pub mod index;

pub use bessel::{
    sph_bessel_j, sph_bessel_j_upto, sph_bessel_j_with_deriv, sph_bessel_y_upto, sph_hankel_plus,
    sph_hankel_plus_upto, sph_hankel_plus_with_deriv,
};
pub use gaunt::{gaunt, GauntTable};
pub use harmonics::{real_sph_harm, real_sph_harm_upto};
pub use index::{block_size, composite_index, indices_upto, split_composite_index, AngularIndex};

use num_complex::Complex;

use crate::error::{MsError, Result};
use crate::scalar::{Cplx, Real};

/// Complex wave number `κ = √(2E)` (Hartree units) on the principal branch,
/// so `Im κ >= 0` whenever `Im E >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexWaveNumber<T: Real>(Cplx<T>);

impl<T: Real> ComplexWaveNumber<T> {
    pub fn from_energy(energy: Cplx<T>) -> Result<Self> {
        if energy == Complex::new(T::zero(), T::zero()) {
            return Err(MsError::Domain("zero energy gives zero wave number".into()));
        }
        let k = (energy * T::lit(2.0)).sqrt();
        // principal sqrt has Re >= 0; flip onto the Im >= 0 sheet when needed
        let k = if k.im < T::zero() { -k } else { k };
        Ok(Self(k))
    }

    #[inline]
    pub fn value(self) -> Cplx<T> {
        self.0
    }

    /// Energy corresponding to this wave number.
    pub fn energy(self) -> Cplx<T> {
        self.0 * self.0 * T::lit(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wave_number_branch() {
        let k = ComplexWaveNumber::<f64>::from_energy(Complex::new(0.5, 1e-3)).unwrap();
        assert!(k.value().im > 0.0 && k.value().re > 0.0);
        assert!((k.energy() - Complex::new(0.5, 1e-3)).norm() < 1e-15);
        let k = ComplexWaveNumber::<f64>::from_energy(Complex::new(-0.5, 0.0)).unwrap();
        assert!((k.value() - Complex::new(0.0, 1.0)).norm() < 1e-15);
        assert!(ComplexWaveNumber::<f64>::from_energy(Complex::new(0.0, 0.0)).is_err());
    }
}
