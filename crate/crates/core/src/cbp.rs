//! Count sketches and compact bilinear pooling.
//!
//! The pooled vector of `u` and `w` is the circular convolution of their count
//! sketches, which equals the count sketch of the outer product `u (x) w` under the
//! induced hash `(hu[i] + hw[j]) mod d_out` and sign `su[i] * sw[j]`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Mat, Real};

/// Random hash and sign vectors for one count sketch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchParams {
    /// Output slot of each input coordinate, in `0..d_out`.
    pub hash: Vec<u32>,
    /// `+1` or `-1` per input coordinate.
    pub sign: Vec<i8>,
    pub d_out: usize,
}

impl SketchParams {
    pub fn new(hash: Vec<u32>, sign: Vec<i8>, d_out: usize) -> Result<Self> {
        if d_out == 0 || hash.is_empty() {
            return Err(Error::config("sketch dimensions must be at least 1"));
        }
        if hash.len() != sign.len() {
            return Err(Error::shape(format!(
                "sketch hash has {} entries but sign has {}",
                hash.len(),
                sign.len()
            )));
        }
        if hash.iter().any(|&h| h as usize >= d_out) {
            return Err(Error::config(format!("sketch hash entry outside 0..{d_out}")));
        }
        if sign.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::config("sketch signs must be +1 or -1"));
        }
        Ok(Self { hash, sign, d_out })
    }

    pub fn d_in(&self) -> usize {
        self.hash.len()
    }
}

pub fn make_sketch_params(d_in: usize, d_out: usize, seed: u64) -> Result<SketchParams> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::config("sketch dimensions must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hash = (0..d_in).map(|_| rng.random_range(0..d_out as u32)).collect();
    let sign = (0..d_in).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    Ok(SketchParams { hash, sign, d_out })
}

/// `out[k] = sum over i with hash[i] == k of sign[i] * v[i]`.
pub fn count_sketch<T: Real>(v: &[T], p: &SketchParams) -> Result<Vec<T>> {
    if v.len() != p.d_in() {
        return Err(Error::shape(format!(
            "vector of length {} for a sketch of input size {}",
            v.len(),
            p.d_in()
        )));
    }
    let mut out = vec![T::zero(); p.d_out];
    for ((&x, &h), &s) in v.iter().zip(&p.hash).zip(&p.sign) {
        let o = &mut out[h as usize];
        *o = if s > 0 { *o + x } else { *o - x };
    }
    Ok(out)
}

/// Compact bilinear pooling of two vectors.
pub fn compact_bilinear<T: Real>(u: &[T], w: &[T], pu: &SketchParams, pw: &SketchParams) -> Result<Vec<T>> {
    let cbp = CompactBilinear::new(pu.clone(), pw.clone())?;
    let a = Mat::from_vec(u.len(), 1, u.to_vec())?;
    let b = Mat::from_vec(w.len(), 1, w.to_vec())?;
    Ok(cbp.forward(&a, &b)?.0.into_vec())
}

/// Frame-wise pooling operator with cached FFT plans.
pub struct CompactBilinear<T: Real> {
    pu: SketchParams,
    pw: SketchParams,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for CompactBilinear<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompactBilinear")
            .field("pu", &self.pu)
            .field("pw", &self.pw)
            .finish()
    }
}

impl<T: Real> Clone for CompactBilinear<T> {
    fn clone(&self) -> Self {
        Self {
            pu: self.pu.clone(),
            pw: self.pw.clone(),
            fwd: Arc::clone(&self.fwd),
            inv: Arc::clone(&self.inv),
        }
    }
}

/// Sketch spectra saved by the forward pass, one row of `d_out` bins per column.
#[derive(Debug, Clone)]
pub struct CbpCache<T> {
    cols: usize,
    spec_a: Vec<Complex<T>>,
    spec_b: Vec<Complex<T>>,
}

impl<T: Real> CompactBilinear<T> {
    pub fn new(pu: SketchParams, pw: SketchParams) -> Result<Self> {
        if pu.d_out != pw.d_out {
            return Err(Error::shape(format!(
                "sketch output sizes differ: {} vs {}",
                pu.d_out, pw.d_out
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(pu.d_out);
        let inv = planner.plan_fft_inverse(pu.d_out);
        Ok(Self { pu, pw, fwd, inv })
    }

    pub fn params(&self) -> (&SketchParams, &SketchParams) {
        (&self.pu, &self.pw)
    }

    pub fn d_out(&self) -> usize {
        self.pu.d_out
    }

    /// Pools column `f` of `a` with column `f` of `b` for every `f`.
    pub fn forward(&self, a: &Mat<T>, b: &Mat<T>) -> Result<(Mat<T>, CbpCache<T>)> {
        if a.rows() != self.pu.d_in() || b.rows() != self.pw.d_in() {
            return Err(Error::shape(format!(
                "pooling inputs have {} and {} rows, sketches expect {} and {}",
                a.rows(),
                b.rows(),
                self.pu.d_in(),
                self.pw.d_in()
            )));
        }
        if a.cols() != b.cols() {
            return Err(Error::shape(format!(
                "pooling inputs have {} and {} frames",
                a.cols(),
                b.cols()
            )));
        }
        let n = self.d_out();
        let cols = a.cols();
        let scale = T::one() / T::of(n as f64);
        let mut spec_a = vec![Complex::default(); cols * n];
        let mut spec_b = vec![Complex::default(); cols * n];
        let mut out = Mat::zeros(n, cols);
        let mut buf = vec![Complex::default(); n];
        let mut scratch = vec![Complex::default(); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];

        for f in 0..cols {
            // Both real sketches go through one complex transform as re + i*im.
            buf.fill(Complex::default());
            for (i, (&h, &s)) in self.pu.hash.iter().zip(&self.pu.sign).enumerate() {
                let x = a.get(i, f);
                buf[h as usize].re = if s > 0 { buf[h as usize].re + x } else { buf[h as usize].re - x };
            }
            for (i, (&h, &s)) in self.pw.hash.iter().zip(&self.pw.sign).enumerate() {
                let x = b.get(i, f);
                buf[h as usize].im = if s > 0 { buf[h as usize].im + x } else { buf[h as usize].im - x };
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            let sa = &mut spec_a[f * n..(f + 1) * n];
            let sb = &mut spec_b[f * n..(f + 1) * n];
            split_packed(&buf, sa, sb);
            for k in 0..n {
                buf[k] = sa[k] * sb[k];
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for (k, z) in buf.iter().enumerate() {
                out.set(k, f, z.re * scale);
            }
        }
        Ok((out, CbpCache { cols, spec_a, spec_b }))
    }

    /// Gradients of the pooled map with respect to both inputs.
    pub fn backward(&self, grad_out: &Mat<T>, cache: &CbpCache<T>) -> Result<(Mat<T>, Mat<T>)> {
        let n = self.d_out();
        if grad_out.rows() != n || grad_out.cols() != cache.cols {
            return Err(Error::shape(format!(
                "pooling gradient is {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                n,
                cache.cols
            )));
        }
        let cols = cache.cols;
        let scale = T::one() / T::of(n as f64);
        let mut ga = Mat::zeros(self.pu.d_in(), cols);
        let mut gb = Mat::zeros(self.pw.d_in(), cols);
        let mut buf = vec![Complex::default(); n];
        let mut scratch = vec![Complex::default(); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];
        let mut da = vec![T::zero(); n];
        let mut db = vec![T::zero(); n];

        for f in 0..cols {
            for (k, z) in buf.iter_mut().enumerate() {
                *z = Complex::new(grad_out.get(k, f), T::zero());
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            let sa = &cache.spec_a[f * n..(f + 1) * n];
            let sb = &cache.spec_b[f * n..(f + 1) * n];
            // Correlations with each sketch; both are spectra of real signals,
            // so one inverse transform of X + iY recovers them as re and im.
            let i = Complex::new(T::zero(), T::one());
            for k in 0..n {
                let g = buf[k];
                buf[k] = g * sb[k].conj() + i * (g * sa[k].conj());
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..n {
                da[k] = buf[k].re * scale;
                db[k] = buf[k].im * scale;
            }
            for (r, (&h, &s)) in self.pu.hash.iter().zip(&self.pu.sign).enumerate() {
                let v = da[h as usize];
                ga.set(r, f, if s > 0 { v } else { -v });
            }
            for (r, (&h, &s)) in self.pw.hash.iter().zip(&self.pw.sign).enumerate() {
                let v = db[h as usize];
                gb.set(r, f, if s > 0 { v } else { -v });
            }
        }
        Ok((ga, gb))
    }
}

/// Separates the spectra of two real signals packed as `x + i*y` using
/// `X[k] = (Z[k] + conj Z[n-k]) / 2` and `Y[k] = (Z[k] - conj Z[n-k]) / 2i`.
fn split_packed<T: Real>(z: &[Complex<T>], x: &mut [Complex<T>], y: &mut [Complex<T>]) {
    let n = z.len();
    let half = T::of(0.5);
    for k in 0..n {
        let zk = z[k];
        let zr = z[(n - k) % n].conj();
        x[k] = (zk + zr) * half;
        let d = (zk - zr) * half;
        // Division by i.
        y[k] = Complex::new(d.im, -d.re);
    }
    // Bins that are their own mirror must be exactly real.
    x[0].im = T::zero();
    y[0].im = T::zero();
    if n % 2 == 0 {
        x[n / 2].im = T::zero();
        y[n / 2].im = T::zero();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Sketch of the explicit outer product under the induced pair hash.
    fn outer_product_sketch(u: &[f64], w: &[f64], pu: &SketchParams, pw: &SketchParams) -> Vec<f64> {
        let n = pu.d_out;
        let mut out = vec![0.0; n];
        for i in 0..u.len() {
            for j in 0..w.len() {
                let k = (pu.hash[i] as usize + pw.hash[j] as usize) % n;
                out[k] += (pu.sign[i] * pw.sign[j]) as f64 * u[i] * w[j];
            }
        }
        out
    }

    #[test]
    fn params_are_seeded_and_in_range() {
        let a = make_sketch_params(257, 257, 9).unwrap();
        assert_eq!(a, make_sketch_params(257, 257, 9).unwrap());
        assert_ne!(a, make_sketch_params(257, 257, 10).unwrap());
        assert!(a.hash.iter().all(|&h| h < 257));
        assert!(a.sign.iter().all(|&s| s == 1 || s == -1));
        assert!(make_sketch_params(0, 4, 1).is_err());
    }

    #[test]
    fn hash_histogram_is_uniform() {
        let d_out = 257;
        let p = make_sketch_params(100_000, d_out, 3).unwrap();
        let mut counts = vec![0usize; d_out];
        for &h in &p.hash {
            counts[h as usize] += 1;
        }
        let expected = 100_000.0 / d_out as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of chi-square with 256 degrees of freedom.
        assert!(chi2 < 310.5, "chi2 {chi2}");
        let plus = p.sign.iter().filter(|&&s| s > 0).count() as f64;
        assert!((plus / 100_000.0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn hand_sketch() {
        let p = SketchParams::new(vec![0, 1], vec![1, -1], 2).unwrap();
        assert_eq!(count_sketch(&[3.0, 4.0], &p).unwrap(), vec![3.0, -4.0]);
        assert_eq!(count_sketch(&[0.0, 0.0], &p).unwrap(), vec![0.0, 0.0]);
        assert!(count_sketch(&[1.0], &p).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SketchParams::new(vec![0, 2], vec![1, 1], 2).is_err());
        assert!(SketchParams::new(vec![0, 1], vec![1, 0], 2).is_err());
        assert!(SketchParams::new(vec![0], vec![1, 1], 2).is_err());
        let pu = make_sketch_params(3, 4, 1).unwrap();
        let pw = make_sketch_params(3, 5, 2).unwrap();
        assert!(CompactBilinear::<f64>::new(pu, pw).is_err());
    }

    #[test]
    fn sketch_inner_product_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = gaussian(&mut rng, 16);
        let w: Vec<f64> = u.iter().zip(gaussian(&mut rng, 16)).map(|(a, b)| a + 0.3 * b).collect();
        let trials = 10_000;
        let mut acc = 0.0;
        for t in 0..trials {
            let p = make_sketch_params(16, 16, 1000 + t).unwrap();
            acc += dot(&count_sketch(&u, &p).unwrap(), &count_sketch(&w, &p).unwrap());
        }
        let mean = acc / trials as f64;
        let truth = dot(&u, &w);
        assert!((mean / truth - 1.0).abs() < 0.05, "{mean} vs {truth}");
    }

    #[test]
    fn pooling_equals_outer_product_sketch() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 1..=8 {
            for d_out in [1, 2, 3, 4, 7, 8, 16] {
                let pu = make_sketch_params(d, d_out, rng.random()).unwrap();
                let pw = make_sketch_params(d, d_out, rng.random()).unwrap();
                let u = gaussian(&mut rng, d);
                let w = gaussian(&mut rng, d);
                let got = compact_bilinear(&u, &w, &pu, &pw).unwrap();
                let want = outer_product_sketch(&u, &w, &pu, &pw);
                for (g, e) in got.iter().zip(&want) {
                    assert!((g - e).abs() < 1e-10, "d={d} d_out={d_out}: {g} vs {e}");
                }
            }
        }
    }

    #[test]
    fn framewise_columns_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pu = make_sketch_params(257, 257, 1).unwrap();
        let pw = make_sketch_params(257, 257, 2).unwrap();
        let a = Mat::from_vec(257, 3, gaussian(&mut rng, 771)).unwrap();
        let b = Mat::from_vec(257, 3, gaussian(&mut rng, 771)).unwrap();
        let cbp = CompactBilinear::new(pu.clone(), pw.clone()).unwrap();
        let (out, _) = cbp.forward(&a, &b).unwrap();
        assert_eq!(out.shape(), (257, 3));
        for f in 0..3 {
            let col = |m: &Mat<f64>| (0..257).map(|r| m.get(r, f)).collect::<Vec<_>>();
            let want = outer_product_sketch(&col(&a), &col(&b), &pu, &pw);
            for (k, e) in want.iter().enumerate() {
                assert!((out.get(k, f) - e).abs() < 1e-9);
            }
        }
        // Permuting frames permutes the output columns.
        let perm = [2, 0, 1];
        let pa = Mat::from_fn(257, 3, |r, c| a.get(r, perm[c]));
        let pb = Mat::from_fn(257, 3, |r, c| b.get(r, perm[c]));
        let (pout, _) = cbp.forward(&pa, &pb).unwrap();
        for r in 0..257 {
            for c in 0..3 {
                assert!((pout.get(r, c) - out.get(r, perm[c])).abs() < 1e-12);
            }
        }
        assert!(cbp.forward(&a, &b.cols_range(0, 2)).is_err());
    }

    #[test]
    fn kernel_estimate_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 8;
        let u = gaussian(&mut rng, d);
        let w = gaussian(&mut rng, d);
        let u2: Vec<f64> = u.iter().zip(gaussian(&mut rng, d)).map(|(a, b)| a + 0.5 * b).collect();
        let w2: Vec<f64> = w.iter().zip(gaussian(&mut rng, d)).map(|(a, b)| a + 0.5 * b).collect();
        let truth = dot(&u, &u2) * dot(&w, &w2);
        let trials = 10_000u64;
        let mut acc = 0.0;
        for t in 0..trials {
            let pu = make_sketch_params(d, 32, 2 * t).unwrap();
            let pw = make_sketch_params(d, 32, 2 * t + 1).unwrap();
            let x = compact_bilinear(&u, &w, &pu, &pw).unwrap();
            let y = compact_bilinear(&u2, &w2, &pu, &pw).unwrap();
            acc += dot(&x, &y);
        }
        let mean = acc / trials as f64;
        assert!((mean / truth - 1.0).abs() < 0.1, "{mean} vs {truth}");
    }

    #[test]
    fn estimate_variance_shrinks_with_sketch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 64;
        let u = gaussian(&mut rng, d);
        let w = gaussian(&mut rng, d);
        let mut variances = Vec::new();
        for d_out in [16, 64, 256] {
            let est: Vec<f64> = (0..2000u64)
                .map(|t| {
                    let pu = make_sketch_params(d, d_out, 7 * t).unwrap();
                    let pw = make_sketch_params(d, d_out, 7 * t + 3).unwrap();
                    let x = compact_bilinear(&u, &w, &pu, &pw).unwrap();
                    dot(&x, &x)
                })
                .collect();
            let m = est.iter().sum::<f64>() / est.len() as f64;
            variances.push(est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / est.len() as f64);
        }
        assert!(variances[0] > variances[1] && variances[1] > variances[2], "{variances:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pu = make_sketch_params(4, 4, 11).unwrap();
        let pw = make_sketch_params(4, 4, 12).unwrap();
        let cbp = CompactBilinear::new(pu, pw).unwrap();
        let a = Mat::from_vec(4, 2, gaussian(&mut rng, 8)).unwrap();
        let b = Mat::from_vec(4, 2, gaussian(&mut rng, 8)).unwrap();
        let g = Mat::from_vec(4, 2, gaussian(&mut rng, 8)).unwrap();
        let loss = |a: &Mat<f64>, b: &Mat<f64>| dot(cbp.forward(a, b).unwrap().0.as_slice(), g.as_slice());
        let (out, cache) = cbp.forward(&a, &b).unwrap();
        assert_eq!(out.shape(), (4, 2));
        let (ga, gb) = cbp.backward(&g, &cache).unwrap();
        let h = 1e-5;
        for (which, grad) in [(0, &ga), (1, &gb)] {
            for idx in 0..8 {
                let bump = |delta: f64| {
                    let (mut a2, mut b2) = (a.clone(), b.clone());
                    let m = if which == 0 { &mut a2 } else { &mut b2 };
                    m.as_mut_slice()[idx] += delta;
                    loss(&a2, &b2)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = grad.as_slice()[idx];
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cbp = CompactBilinear::new(make_sketch_params(5, 6, 1).unwrap(), make_sketch_params(5, 6, 2).unwrap()).unwrap();
        let a = Mat::from_vec(5, 3, gaussian(&mut rng, 15)).unwrap();
        let b = Mat::from_vec(5, 3, gaussian(&mut rng, 15)).unwrap();
        let (_, cache) = cbp.forward(&a, &b).unwrap();
        let (ga, gb) = cbp.backward(&Mat::zeros(6, 3), &cache).unwrap();
        assert!(ga.as_slice().iter().chain(gb.as_slice()).all(|&x| x == 0.0));
        assert!(cbp.backward(&Mat::zeros(6, 2), &cache).is_err());
    }

    #[test]
    fn gradient_in_u_does_not_depend_on_u() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cbp = CompactBilinear::new(make_sketch_params(5, 7, 1).unwrap(), make_sketch_params(5, 7, 2).unwrap()).unwrap();
        let b = Mat::from_vec(5, 1, gaussian(&mut rng, 5)).unwrap();
        let g = Mat::from_vec(7, 1, gaussian(&mut rng, 7)).unwrap();
        let (_, c0) = cbp.forward(&Mat::zeros(5, 1), &b).unwrap();
        let (_, c1) = cbp.forward(&Mat::from_vec(5, 1, gaussian(&mut rng, 5)).unwrap(), &b).unwrap();
        let (g0, _) = cbp.backward(&g, &c0).unwrap();
        let (g1, _) = cbp.backward(&g, &c1).unwrap();
        for (x, y) in g0.as_slice().iter().zip(g1.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_path_agrees_with_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let pu = make_sketch_params(257, 257, 1).unwrap();
        let pw = make_sketch_params(257, 257, 2).unwrap();
        let u = gaussian(&mut rng, 257);
        let w = gaussian(&mut rng, 257);
        let hi = compact_bilinear(&u, &w, &pu, &pw).unwrap();
        let uf: Vec<f32> = u.iter().map(|&x| x as f32).collect();
        let wf: Vec<f32> = w.iter().map(|&x| x as f32).collect();
        let lo = compact_bilinear(&uf, &wf, &pu, &pw).unwrap();
        for (a, b) in hi.iter().zip(&lo) {
            assert!((a - *b as f64).abs() < 1e-3);
        }
    }

    proptest! {
        #[test]
        fn bilinear_in_each_argument(
            seed in 0u64..1000,
            alpha in -3.0f64..3.0,
            d in 1usize..10,
            d_out in 1usize..12,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pu = make_sketch_params(d, d_out, seed).unwrap();
            let pw = make_sketch_params(d, d_out, seed + 1).unwrap();
            let (u, u2, w) = (gaussian(&mut rng, d), gaussian(&mut rng, d), gaussian(&mut rng, d));
            let f = |u: &[f64], w: &[f64]| compact_bilinear(u, w, &pu, &pw).unwrap();
            let base = f(&u, &w);
            let scaled = f(&u.iter().map(|x| alpha * x).collect::<Vec<_>>(), &w);
            let sum = f(&u.iter().zip(&u2).map(|(a, b)| a + b).collect::<Vec<_>>(), &w);
            let other = f(&u2, &w);
            let wscaled = f(&u, &w.iter().map(|x| alpha * x).collect::<Vec<_>>());
            for k in 0..d_out {
                prop_assert!((scaled[k] - alpha * base[k]).abs() < 1e-10);
                prop_assert!((wscaled[k] - alpha * base[k]).abs() < 1e-10);
                prop_assert!((sum[k] - base[k] - other[k]).abs() < 1e-10);
            }
            let zero = f(&vec![0.0; d], &w);
            prop_assert!(zero.iter().all(|&x| x.abs() < 1e-12));
        }
    }
}
