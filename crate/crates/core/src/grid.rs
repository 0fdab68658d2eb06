//! Periodic 4-torus discretization and the FFT machinery behind every
//! spectral derivative.
//!
//! Fields are stored in C order with axis 0 slowest. Real fields are
//! transformed two at a time by packing them into the real and imaginary
//! parts of one complex array; every multiplier used here maps real fields
//! to real fields, so the packing survives the round trip.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Points per axis and axis lengths of the periodic box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 4],
    pub periods: [f64; 4],
}

impl GridSpec {
    pub fn new(dims: [usize; 4], periods: [f64; 4]) -> Result<Self> {
        let spec = GridSpec { dims, periods };
        spec.validate()?;
        Ok(spec)
    }

    /// `n` points per axis on the (2 pi)^4 torus.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new([n; 4], [2.0 * PI; 4])
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, &n) in self.dims.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "dims[{axis}] = {n} must be even and at least 4"
                )));
            }
        }
        for (axis, &l) in self.periods.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "periods[{axis}] = {l} must be positive and finite"
                )));
            }
        }
        let total = self
            .dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .and_then(|n| n.checked_mul(std::mem::size_of::<Complex64>()));
        if total.is_none() {
            return Err(Error::InvalidGrid("point count overflows".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.dims[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..4).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.dims;
        write!(f, "{}x{}x{}x{}", d[0], d[1], d[2], d[3])
    }
}

/// Grid plus the transform plans and wavenumber tables.
pub struct Grid {
    spec: GridSpec,
    len: usize,
    strides: [usize; 4],
    forward: [Arc<dyn Fft<f64>>; 4],
    backward: [Arc<dyn Fft<f64>>; 4],
    /// Angular wavenumbers with the Nyquist entry zeroed: the symbol of the
    /// first derivative is `i * dk`.
    dk: [Vec<f64>; 4],
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        spec.validate()?;
        let mut planner = FftPlanner::new();
        let forward = spec.dims.map(|n| planner.plan_fft_forward(n));
        let backward = spec.dims.map(|n| planner.plan_fft_inverse(n));
        let dk = std::array::from_fn(|a| {
            let n = spec.dims[a];
            let scale = 2.0 * PI / spec.periods[a];
            (0..n)
                .map(|i| {
                    let k = signed_index(i, n);
                    if 2 * i == n {
                        0.0
                    } else {
                        scale * k as f64
                    }
                })
                .collect()
        });
        let d = spec.dims;
        let strides = [d[1] * d[2] * d[3], d[2] * d[3], d[3], 1];
        Ok(Arc::new(Grid {
            spec,
            len: spec.len(),
            strides,
            forward,
            backward,
            dk,
        }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> [usize; 4] {
        self.spec.dims
    }

    /// Multi-index of a flat position.
    pub fn unravel(&self, mut idx: usize) -> [usize; 4] {
        let mut out = [0; 4];
        for a in 0..4 {
            out[a] = idx / self.strides[a];
            idx %= self.strides[a];
        }
        out
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.spec.spacing(axis)
    }

    /// Physical coordinates of a flat position.
    pub fn point(&self, idx: usize) -> [f64; 4] {
        let m = self.unravel(idx);
        std::array::from_fn(|a| self.coordinate(a, m[a]))
    }

    /// Field sampled from a function of the coordinates.
    pub fn sample(&self, f: impl Fn([f64; 4]) -> f64 + Sync) -> Vec<f64> {
        (0..self.len).into_par_iter().map(|i| f(self.point(i))).collect()
    }

    /// First-derivative symbol (without the factor i) per axis.
    pub fn dk(&self, axis: usize) -> &[f64] {
        &self.dk[axis]
    }

    /// Symbol of the flat Laplacian `-sum d_a d_a` at each spectral index.
    pub fn laplace_symbol(&self, m: [usize; 4]) -> f64 {
        (0..4).map(|a| self.dk[a][m[a]].powi(2)).sum()
    }

    /// True for spectral indices that touch a Nyquist frequency on any axis.
    pub fn is_nyquist(&self, m: [usize; 4]) -> bool {
        (0..4).any(|a| 2 * m[a] == self.spec.dims[a])
    }

    /// Smallest non-zero eigenvalue of the flat Laplacian.
    pub fn laplace_gap(&self) -> f64 {
        (0..4)
            .map(|a| (2.0 * PI / self.spec.periods[a]).powi(2))
            .fold(f64::INFINITY, f64::min)
    }

    fn fft_axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let n = self.spec.dims[axis];
        let fft = if inverse {
            &self.backward[axis]
        } else {
            &self.forward[axis]
        };
        let stride = self.strides[axis];
        if stride == 1 {
            data.par_chunks_mut(n * 64).for_each(|chunk| {
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(chunk, &mut scratch);
            });
            return;
        }
        data.par_chunks_mut(n * stride).for_each(|block| {
            let mut lines = vec![Complex64::default(); n * stride];
            for j in 0..n {
                let row = &block[j * stride..(j + 1) * stride];
                for (r, v) in row.iter().enumerate() {
                    lines[r * n + j] = *v;
                }
            }
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(&mut lines, &mut scratch);
            for j in 0..n {
                let row = &mut block[j * stride..(j + 1) * stride];
                for (r, v) in row.iter_mut().enumerate() {
                    *v = lines[r * n + j];
                }
            }
        });
    }

    fn fft4(&self, data: &mut [Complex64], inverse: bool) {
        for axis in (0..4).rev() {
            self.fft_axis(data, axis, inverse);
        }
        if inverse {
            let s = 1.0 / self.len as f64;
            data.par_iter_mut().for_each(|v| *v *= s);
        }
    }

    fn neg_index(&self, idx: usize) -> usize {
        let m = self.unravel(idx);
        let mut out = 0;
        for a in 0..4 {
            let n = self.spec.dims[a];
            out += ((n - m[a]) % n) * self.strides[a];
        }
        out
    }

    /// Spectra of several real fields (two complex transforms per pair).
    pub fn forward_real(&self, fields: &[&[f64]]) -> Vec<Vec<Complex64>> {
        let mut out = Vec::with_capacity(fields.len());
        for pair in fields.chunks(2) {
            let mut z: Vec<Complex64> = match pair {
                [u, v] => u.iter().zip(v.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect(),
                [u] => u.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
                _ => unreachable!(),
            };
            self.fft4(&mut z, false);
            if pair.len() == 1 {
                out.push(z);
                continue;
            }
            let (mut a, mut b) = (vec![Complex64::default(); self.len], vec![Complex64::default(); self.len]);
            a.par_iter_mut().zip(b.par_iter_mut()).enumerate().for_each(|(i, (ai, bi))| {
                let zc = z[self.neg_index(i)].conj();
                *ai = 0.5 * (z[i] + zc);
                *bi = Complex64::new(0.0, -0.5) * (z[i] - zc);
            });
            out.push(a);
            out.push(b);
        }
        out
    }

    /// Real fields back from spectra produced by real-preserving multipliers.
    pub fn inverse_real(&self, spectra: Vec<Vec<Complex64>>) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spectra.len());
        let mut iter = spectra.into_iter();
        while let Some(mut a) = iter.next() {
            match iter.next() {
                Some(b) => {
                    a.par_iter_mut()
                        .zip(b.par_iter())
                        .for_each(|(x, y)| *x += Complex64::new(0.0, 1.0) * y);
                    self.fft4(&mut a, true);
                    out.push(a.iter().map(|z| z.re).collect());
                    out.push(a.iter().map(|z| z.im).collect());
                }
                None => {
                    self.fft4(&mut a, true);
                    out.push(a.iter().map(|z| z.re).collect());
                }
            }
        }
        out
    }

    /// Applies a pointwise-in-frequency linear map to real fields.
    ///
    /// `kernel(m, input, output)` receives the spectral multi-index, the
    /// input coefficients at that index and writes the output coefficients.
    /// The map must send real fields to real fields.
    pub fn spectral_map<K>(&self, inputs: &[&[f64]], n_out: usize, kernel: K) -> Vec<Vec<f64>>
    where
        K: Fn([usize; 4], &[Complex64], &mut [Complex64]) + Sync,
    {
        let spectra = self.forward_real(inputs);
        let n_in = spectra.len();
        let mut outs = vec![vec![Complex64::default(); self.len]; n_out];
        let chunk = self.strides[0].max(1);
        // Work slab by slab on axis 0 so each task owns contiguous output ranges.
        let mut slabs: Vec<Vec<&mut [Complex64]>> = (0..self.spec.dims[0]).map(|_| Vec::new()).collect();
        for out in outs.iter_mut() {
            for (s, piece) in out.chunks_mut(chunk).enumerate() {
                slabs[s].push(piece);
            }
        }
        slabs.into_par_iter().enumerate().for_each(|(s, mut pieces)| {
            let mut inp = vec![Complex64::default(); n_in];
            let mut res = vec![Complex64::default(); n_out];
            for off in 0..chunk {
                let idx = s * chunk + off;
                for (k, sp) in spectra.iter().enumerate() {
                    inp[k] = sp[idx];
                }
                kernel(self.unravel(idx), &inp, &mut res);
                for (k, piece) in pieces.iter_mut().enumerate() {
                    piece[off] = res[k];
                }
            }
        });
        self.inverse_real(outs)
    }

    /// Derivative of one field along `axis`.
    pub fn derivative(&self, u: &[f64], axis: usize) -> Vec<f64> {
        let dk = &self.dk[axis];
        self.spectral_map(&[u], 1, |m, i, o| {
            o[0] = Complex64::new(0.0, dk[m[axis]]) * i[0];
        })
        .pop()
        .unwrap()
    }

    /// Zero-padded product: both factors interpolated to a grid of about
    /// 3/2 the resolution, multiplied there and truncated back.
    pub fn dealiased_product(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let fine_dims = self.spec.dims.map(|n| {
            let m = (3 * n).div_ceil(2);
            m + m % 2
        });
        let fine = Grid::new(GridSpec {
            dims: fine_dims,
            periods: self.spec.periods,
        })
        .expect("refined grid is valid");
        let spectra = self.forward_real(&[u, v]);
        let mut padded: Vec<Vec<Complex64>> = spectra
            .iter()
            .map(|s| {
                let mut p = vec![Complex64::default(); fine.len];
                for (idx, val) in s.iter().enumerate() {
                    let m = self.unravel(idx);
                    if self.is_nyquist(m) {
                        continue;
                    }
                    let mut fidx = 0;
                    for a in 0..4 {
                        let k = signed_index(m[a], self.spec.dims[a]);
                        let fm = k.rem_euclid(fine_dims[a] as i64) as usize;
                        fidx += fm * fine.strides[a];
                    }
                    p[fidx] = *val * (fine.len as f64 / self.len as f64);
                }
                p
            })
            .collect();
        let b = padded.pop().unwrap();
        let a = padded.pop().unwrap();
        let mut phys = fine.inverse_real(vec![a, b]);
        let vb = phys.pop().unwrap();
        let va = phys.pop().unwrap();
        let prod: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x * y).collect();
        let spec = fine.forward_real(&[&prod]).pop().unwrap();
        let mut coarse = vec![Complex64::default(); self.len];
        for (idx, c) in coarse.iter_mut().enumerate() {
            let m = self.unravel(idx);
            if self.is_nyquist(m) {
                continue;
            }
            let mut fidx = 0;
            for a in 0..4 {
                let k = signed_index(m[a], self.spec.dims[a]);
                fidx += (k.rem_euclid(fine_dims[a] as i64) as usize) * fine.strides[a];
            }
            *c = spec[fidx] * (self.len as f64 / fine.len as f64);
        }
        self.inverse_real(vec![coarse]).pop().unwrap()
    }

    /// True for the non-constant modes on which every first derivative
    /// vanishes: each index is 0 or the Nyquist index.
    pub fn is_pure_nyquist(&self, m: [usize; 4]) -> bool {
        (0..4).all(|a| m[a] == 0 || 2 * m[a] == self.spec.dims[a]) && m.iter().any(|&v| v != 0)
    }

    /// Removes the pure-Nyquist modes (see [`Grid::is_pure_nyquist`]).
    pub fn filter_pure_nyquist(&self, u: &[f64]) -> Vec<f64> {
        self.spectral_map(&[u], 1, |m, i, o| {
            o[0] = if self.is_pure_nyquist(m) { Complex64::default() } else { i[0] };
        })
        .pop()
        .unwrap()
    }

    /// Removes every Fourier mode touching a Nyquist frequency.
    pub fn filter_nyquist(&self, u: &[f64]) -> Vec<f64> {
        self.spectral_map(&[u], 1, |m, i, o| {
            o[0] = if self.is_nyquist(m) { Complex64::default() } else { i[0] };
        })
        .pop()
        .unwrap()
    }
}

/// Signed frequency of FFT slot `i` for length `n`.
pub fn signed_index(i: usize, n: usize) -> i64 {
    if 2 * i <= n {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_small_dims() {
        assert!(GridSpec::new([8, 8, 7, 8], [1.0; 4]).is_err());
        assert!(GridSpec::new([2, 8, 8, 8], [1.0; 4]).is_err());
        assert!(GridSpec::new([8; 4], [1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(GridSpec::new([8; 4], [1.0, f64::NAN, 1.0, 1.0]).is_err());
        assert!(GridSpec::new([usize::MAX / 2 + 1, 4, 4, 4], [1.0; 4]).is_err());
        assert!(GridSpec::cube(8).is_ok());
    }

    #[test]
    fn packed_transforms_round_trip() {
        let grid = Grid::new(GridSpec::new([4, 6, 8, 4], [1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let u = grid.sample(|x| (x[0] * 3.0).sin() + x[3] * x[1]);
        let v = grid.sample(|x| (x[2]).cos() * x[0]);
        let w = grid.sample(|x| x[1] - x[2]);
        let spectra = grid.forward_real(&[&u, &v, &w]);
        let back = grid.inverse_real(spectra);
        for (a, b) in [&u, &v, &w].iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_of_single_mode() {
        let spec = GridSpec::new([8, 4, 4, 6], [3.0, 1.0, 1.0, 2.0]).unwrap();
        let grid = Grid::new(spec).unwrap();
        for axis in 0..4 {
            let l = spec.periods[axis];
            let u = grid.sample(|x| (2.0 * PI * x[axis] / l).sin());
            let du = grid.derivative(&u, axis);
            for (i, d) in du.iter().enumerate() {
                let x = grid.point(i);
                let want = 2.0 * PI / l * (2.0 * PI * x[axis] / l).cos();
                assert!((d - want).abs() < 1e-12, "axis {axis}");
            }
        }
    }

    #[test]
    fn dealiased_product_is_exact_for_resolved_modes() {
        let grid = Grid::new(GridSpec::cube(8).unwrap()).unwrap();
        let u = grid.sample(|x| (2.0 * x[0]).sin());
        let v = grid.sample(|x| (x[0]).cos() + (x[1]).sin());
        let p = grid.dealiased_product(&u, &v);
        for (i, val) in p.iter().enumerate() {
            let x = grid.point(i);
            let want = (2.0 * x[0]).sin() * ((x[0]).cos() + (x[1]).sin());
            assert!((val - want).abs() < 1e-12);
        }
        // 3 + 2 = 5 aliases onto -3 on 8 points; the padded product drops it.
        let a = grid.sample(|x| (3.0 * x[0]).cos());
        let b = grid.sample(|x| (2.0 * x[0]).cos());
        let p = grid.dealiased_product(&a, &b);
        for (i, val) in p.iter().enumerate() {
            let x = grid.point(i);
            assert!((val - 0.5 * x[0].cos()).abs() < 1e-12);
        }
    }
}
