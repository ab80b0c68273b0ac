//! Shared helpers for unit tests.

use num_complex::Complex64;

use crate::rng::SplitMix64;
use crate::volume::{ComplexVolume, Dims, KSpaceData};

pub fn random_volume(dims: Dims, seed: u64) -> ComplexVolume {
    let mut rng = SplitMix64::new(seed);
    let n = dims.0 * dims.1 * dims.2;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let (re, im) = rng.normal_pair();
        data.push(Complex64::new(re, im));
    }
    ComplexVolume::new(dims, data).unwrap()
}

pub fn random_kspace(ncoils: usize, dims: Dims, seed: u64) -> KSpaceData {
    let mut rng = SplitMix64::new(seed);
    let n = ncoils * dims.0 * dims.1 * dims.2;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let (re, im) = rng.normal_pair();
        data.push(Complex64::new(re, im));
    }
    KSpaceData::new(ncoils, dims, data).unwrap()
}
