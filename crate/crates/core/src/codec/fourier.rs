//! Per-channel 2-D discrete Fourier transform codec.
//!
//! Coefficients use the orthonormal convention (`1/√(HW)` in both
//! directions) and are stored in `(mode_row, mode_col, channel)` row-major
//! order, matching the image layout. A mode `k` and its conjugate partner
//! `−k mod (H, W)` always belong to the same feature, and so do all channels
//! of a mode.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::{Codec, FeatureGrouping, FeatureKind, LatentVector, Scalar};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};

struct Plans {
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Plans {
            row_fwd: planner.plan_fft_forward(width),
            col_fwd: planner.plan_fft_forward(height),
            row_inv: planner.plan_fft_inverse(width),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    /// In-place 2-D transform of one `height × width` plane.
    fn transform(&self, plane: &mut [Scalar], height: usize, width: usize, inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(plane);
        let mut column = vec![Scalar::new(0.0, 0.0); height];
        for c in 0..width {
            for r in 0..height {
                column[r] = plane[r * width + c];
            }
            col.process(&mut column);
            for r in 0..height {
                plane[r * width + c] = column[r];
            }
        }
        let norm = 1.0 / ((height * width) as f64).sqrt();
        for v in plane.iter_mut() {
            *v *= norm;
        }
    }

    fn apply(&self, input: &[Scalar], shape: Shape, inverse: bool) -> Vec<Scalar> {
        let (h, w, ch) = (shape.height, shape.width, shape.channels);
        let mut out = vec![Scalar::new(0.0, 0.0); shape.len()];
        let mut plane = vec![Scalar::new(0.0, 0.0); h * w];
        for c in 0..ch {
            for p in 0..h * w {
                plane[p] = input[p * ch + c];
            }
            self.transform(&mut plane, h, w, inverse);
            for p in 0..h * w {
                out[p * ch + c] = plane[p];
            }
        }
        out
    }
}

fn partner(row: usize, col: usize, height: usize, width: usize) -> (usize, usize) {
    ((height - row) % height, (width - col) % width)
}

/// Bin of mode `(row, col)` among `num_bins` equal-width bins of the
/// normalized-frequency norm over `[0, √2/2]`; the last bin is right-closed.
///
/// Computed in integer arithmetic so modes lying exactly on an edge are
/// assigned consistently to the upper bin.
pub fn mode_bin(row: usize, col: usize, height: usize, width: usize, num_bins: usize) -> usize {
    let a = row.min(height - row) as u128;
    let b = col.min(width - col) as u128;
    let (h, w, nb) = (height as u128, width as u128, num_bins as u128);
    // k ≤ B·|f|/(√2/2)  ⇔  k²·H²W² ≤ 2B²(a²W² + b²H²)
    let target = 2 * nb * nb * (a * a * w * w + b * b * h * h);
    let denom = h * h * w * w;
    let mut k = ((target as f64 / denom as f64).sqrt()) as u128;
    while k > 0 && k * k * denom > target {
        k -= 1;
    }
    while (k + 1) * (k + 1) * denom <= target {
        k += 1;
    }
    (k as usize).min(num_bins - 1)
}

/// Center of bin `k` in normalized-frequency norm.
pub fn bin_center(k: usize, num_bins: usize) -> f64 {
    (k as f64 + 0.5) * FRAC_1_SQRT_2 / num_bins as f64
}

/// Feature grouping over Fourier modes, per conjugate pair or per norm bin.
pub fn fourier_grouping(
    height: usize,
    width: usize,
    channels: usize,
    num_bins: Option<usize>,
) -> Result<FeatureGrouping> {
    let shape = Shape::new(height, width, channels);
    if shape.is_empty() {
        return Err(Error::config(format!("image shape {shape} is empty")));
    }
    let modes = height * width;
    let mut mode_feature = vec![usize::MAX; modes];
    let mut names = Vec::new();
    let kind = match num_bins {
        None => {
            for r in 0..height {
                for c in 0..width {
                    if mode_feature[r * width + c] != usize::MAX {
                        continue;
                    }
                    let (pr, pc) = partner(r, c, height, width);
                    let f = names.len();
                    mode_feature[r * width + c] = f;
                    mode_feature[pr * width + pc] = f;
                    names.push(if (pr, pc) == (r, c) {
                        format!("mode({r},{c})")
                    } else {
                        format!("mode({r},{c})+({pr},{pc})")
                    });
                }
            }
            FeatureKind::FourierMode
        }
        Some(bins) => {
            if bins == 0 || bins > crate::coalition::MAX_PLAYERS {
                return Err(Error::InvalidBinCount(format!("{bins} bins; expected 1..=64")));
            }
            for r in 0..height {
                for c in 0..width {
                    mode_feature[r * width + c] = mode_bin(r, c, height, width, bins);
                }
            }
            let mut occupied = vec![false; bins];
            for &f in &mode_feature {
                occupied[f] = true;
            }
            if let Some(k) = occupied.iter().position(|o| !o) {
                return Err(Error::InvalidBinCount(format!(
                    "bin {k} of {bins} contains no modes at {height}x{width}"
                )));
            }
            let width_f = FRAC_1_SQRT_2 / bins as f64;
            names = (0..bins)
                .map(|k| format!("freq[{:.4},{:.4}]", k as f64 * width_f, (k + 1) as f64 * width_f))
                .collect();
            FeatureKind::FourierBin
        }
    };
    if names.len() > crate::coalition::MAX_PLAYERS {
        return Err(Error::TooManyFeatures(names.len()));
    }
    let assignment = (0..shape.len()).map(|s| mode_feature[s / channels]).collect();
    FeatureGrouping::new(assignment, names, kind)
}

/// Orthonormal per-channel 2-D DFT, `(mode_row, mode_col, channel)` order.
pub fn fft2_encode(image: &Image) -> Vec<Scalar> {
    let shape = image.shape();
    let input: Vec<Scalar> = image.data().iter().map(|&v| Scalar::new(v, 0.0)).collect();
    Plans::new(shape.height, shape.width).apply(&input, shape, false)
}

/// Inverse transform without symmetrization, imaginary parts retained.
pub fn ifft2_raw(scalars: &[Scalar], shape: Shape) -> Result<Vec<Scalar>> {
    if scalars.len() != shape.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} coefficients for {shape}", shape.len()),
            actual: format!("{}", scalars.len()),
        });
    }
    Ok(Plans::new(shape.height, shape.width).apply(scalars, shape, true))
}

/// Enforces `z(−k) = conj(z(k))`, taking the lexicographically smaller mode of
/// each pair as canonical and the real part of self-conjugate modes.
fn symmetrize(scalars: &mut [Scalar], shape: Shape) {
    let (h, w, ch) = (shape.height, shape.width, shape.channels);
    for r in 0..h {
        for c in 0..w {
            let (pr, pc) = partner(r, c, h, w);
            let here = r * w + c;
            let there = pr * w + pc;
            if here == there {
                for k in 0..ch {
                    scalars[here * ch + k].im = 0.0;
                }
            } else if here < there {
                for k in 0..ch {
                    scalars[there * ch + k] = scalars[here * ch + k].conj();
                }
            }
        }
    }
}

/// Inverse transform after Hermitian repair; real part, clamped to `[0, 1]`.
pub fn ifft2_decode(scalars: &[Scalar], shape: Shape) -> Result<Image> {
    let mut data = ifft2_unclamped(scalars, shape)?;
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(shape, data)
}

fn ifft2_unclamped(scalars: &[Scalar], shape: Shape) -> Result<Vec<f64>> {
    if scalars.len() != shape.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} coefficients for {shape}", shape.len()),
            actual: format!("{}", scalars.len()),
        });
    }
    let mut repaired = scalars.to_vec();
    symmetrize(&mut repaired, shape);
    let out = Plans::new(shape.height, shape.width).apply(&repaired, shape, true);
    Ok(out.into_iter().map(|z| z.re).collect())
}

pub struct FourierCodec {
    shape: Shape,
    num_bins: Option<usize>,
    grouping: Arc<FeatureGrouping>,
    plans: Plans,
}

impl std::fmt::Debug for FourierCodec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierCodec")
            .field("shape", &self.shape)
            .field("num_bins", &self.num_bins)
            .finish()
    }
}

impl FourierCodec {
    pub fn new(shape: Shape, num_bins: Option<usize>) -> Result<Self> {
        let grouping = fourier_grouping(shape.height, shape.width, shape.channels, num_bins)?;
        Ok(FourierCodec {
            shape,
            num_bins,
            grouping: Arc::new(grouping),
            plans: Plans::new(shape.height, shape.width),
        })
    }

    pub fn num_bins(&self) -> Option<usize> {
        self.num_bins
    }

    /// Inverse transform of a spliced latent before clamping.
    pub fn decode_unclamped(&self, latent: &LatentVector) -> Result<Vec<f64>> {
        self.check_latent(latent)?;
        let mut repaired = latent.scalars().to_vec();
        symmetrize(&mut repaired, self.shape);
        let out = self.plans.apply(&repaired, self.shape, true);
        Ok(out.into_iter().map(|z| z.re).collect())
    }

    /// Largest imaginary magnitude of the inverse transform without repair.
    pub fn imaginary_residue(&self, latent: &LatentVector) -> Result<f64> {
        self.check_latent(latent)?;
        let out = self.plans.apply(latent.scalars(), self.shape, true);
        Ok(out.iter().map(|z| z.im.abs()).fold(0.0, f64::max))
    }
}

impl Codec for FourierCodec {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn grouping(&self) -> &Arc<FeatureGrouping> {
        &self.grouping
    }

    fn encode(&self, image: &Image) -> Result<LatentVector> {
        image.ensure_shape(self.shape)?;
        let input: Vec<Scalar> = image.data().iter().map(|&v| Scalar::new(v, 0.0)).collect();
        LatentVector::new(self.plans.apply(&input, self.shape, false), self.grouping.clone())
    }

    fn decode(&self, latent: &LatentVector) -> Result<Image> {
        let mut data = self.decode_unclamped(latent)?;
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Image::new(self.shape, data)
    }

    fn as_fourier(&self) -> Option<&FourierCodec> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Direct evaluation of the DFT sum, used as an oracle.
    fn naive_dft(image: &Image) -> Vec<Scalar> {
        let s = image.shape();
        let norm = 1.0 / ((s.height * s.width) as f64).sqrt();
        let mut out = vec![Scalar::new(0.0, 0.0); s.len()];
        for k in 0..s.height {
            for l in 0..s.width {
                for ch in 0..s.channels {
                    let mut acc = Scalar::new(0.0, 0.0);
                    for r in 0..s.height {
                        for c in 0..s.width {
                            let phase =
                                -2.0 * PI * ((k * r) as f64 / s.height as f64 + (l * c) as f64 / s.width as f64);
                            acc += Scalar::from_polar(image.get(r, c, ch), phase);
                        }
                    }
                    out[(k * s.width + l) * s.channels + ch] = acc * norm;
                }
            }
        }
        out
    }

    fn pseudo_random_image(shape: Shape, seed: u64) -> Image {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, crate::rng::Domain::GAME, 0);
        Image::new(shape, (0..shape.len()).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn constant_image_has_only_dc() {
        let shape = Shape::new(6, 4, 2);
        let z = fft2_encode(&Image::filled(shape, 0.3));
        for (i, v) in z.iter().enumerate() {
            if i / 2 == 0 {
                assert!((v.re - 0.3 * 24f64.sqrt()).abs() < 1e-12);
                assert!(v.im.abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12, "mode {} = {v}", i / 2);
            }
        }
    }

    #[test]
    fn horizontal_grating_excites_one_conjugate_pair() {
        let shape = Shape::new(8, 8, 1);
        let mut x = Image::filled(shape, 0.0);
        for r in 0..8 {
            for c in 0..8 {
                x.set(r, c, 0, (2.0 * PI * c as f64 * 3.0 / 8.0).cos());
            }
        }
        let oracle = naive_dft(&x);
        let z = fft2_encode(&x);
        let nonzero: Vec<usize> = oracle
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > 1e-9)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![3, 5]);
        for (a, b) in z.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!((z[3] - z[5].conj()).norm() < 1e-12);
    }

    #[test]
    fn fft_matches_direct_summation() {
        let x = pseudo_random_image(Shape::new(5, 6, 3), 4);
        for (a, b) in fft2_encode(&x).iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn round_trip_recovers_image() {
        let x = pseudo_random_image(Shape::new(8, 8, 3), 1);
        let codec = FourierCodec::new(x.shape(), None).unwrap();
        let z = codec.encode(&x).unwrap();
        let back = codec.decode_unclamped(&z).unwrap();
        let err = back
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6);
    }

    #[test]
    fn zero_latent_decodes_to_black() {
        let shape = Shape::new(4, 4, 1);
        let img = ifft2_decode(&vec![Scalar::new(0.0, 0.0); 16], shape).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            ifft2_decode(&[Scalar::new(0.0, 0.0)], shape),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn grouping_counts() {
        assert_eq!(fourier_grouping(2, 2, 1, None).unwrap().num_features(), 4);
        assert_eq!(fourier_grouping(224, 224, 3, Some(25)).unwrap().num_features(), 25);
        assert!(matches!(
            fourier_grouping(4, 4, 1, Some(0)),
            Err(Error::InvalidBinCount(_))
        ));
        assert!(matches!(
            fourier_grouping(2, 2, 1, Some(10)),
            Err(Error::InvalidBinCount(_))
        ));
        assert!(matches!(
            fourier_grouping(16, 16, 1, None),
            Err(Error::TooManyFeatures(_))
        ));
    }

    #[test]
    fn four_by_four_per_mode_grouping_by_brute_force() {
        // Pair every mode with its negation by scanning all 16 modes.
        let mut classes: Vec<Vec<(usize, usize)>> = Vec::new();
        for r in 0..4 {
            for c in 0..4 {
                let neg = ((4 - r) % 4, (4 - c) % 4);
                if let Some(cls) = classes.iter_mut().find(|cls| cls.contains(&neg)) {
                    cls.push((r, c));
                } else {
                    classes.push(vec![(r, c)]);
                }
            }
        }
        let singles = classes.iter().filter(|c| c.len() == 1).count();
        assert_eq!((classes.len(), singles), (10, 4));
        let g = fourier_grouping(4, 4, 1, None).unwrap();
        assert_eq!(g.num_features(), 10);
        for cls in &classes {
            let f = g.feature_of(cls[0].0 * 4 + cls[0].1);
            assert_eq!(g.scalars_of(f).len(), cls.len());
        }
    }

    #[test]
    fn channels_share_a_feature() {
        let g = fourier_grouping(4, 4, 3, Some(3)).unwrap();
        for m in 0..16 {
            assert_eq!(g.feature_of(3 * m), g.feature_of(3 * m + 1));
            assert_eq!(g.feature_of(3 * m), g.feature_of(3 * m + 2));
        }
    }

    #[test]
    fn edge_modes_fall_in_the_upper_bin() {
        // |(1/8, 1/8)| = √2/8 is exactly the first edge for 4 bins.
        assert_eq!(mode_bin(1, 1, 8, 8, 4), 1);
        assert_eq!(mode_bin(0, 0, 8, 8, 4), 0);
        assert_eq!(mode_bin(4, 4, 8, 8, 4), 3);
        assert_eq!(mode_bin(1, 0, 8, 8, 4), 0);
    }

    proptest! {
        #[test]
        fn bins_are_monotone_in_frequency_norm(h in 1usize..24, w in 1usize..24, bins in 1usize..12) {
            let mut modes: Vec<(f64, usize)> = Vec::new();
            for r in 0..h {
                for c in 0..w {
                    let fv = r.min(h - r) as f64 / h as f64;
                    let fu = c.min(w - c) as f64 / w as f64;
                    modes.push(((fu * fu + fv * fv).sqrt(), mode_bin(r, c, h, w, bins)));
                }
            }
            modes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in modes.windows(2) {
                prop_assert!(pair[0].1 <= pair[1].1);
            }
            for (norm, bin) in modes {
                let lo = bin as f64 * FRAC_1_SQRT_2 / bins as f64;
                prop_assert!(norm >= lo - 1e-12);
            }
        }

        #[test]
        fn grouped_splices_decode_to_real_images(seed in 0u64..1000, mask: u64) {
            let shape = Shape::new(6, 5, 2);
            let codec = FourierCodec::new(shape, None).unwrap();
            let a = codec.encode(&pseudo_random_image(shape, seed)).unwrap();
            let b = codec.encode(&pseudo_random_image(shape, seed + 7919)).unwrap();
            let g = codec.grouping().clone();
            let scalars = (0..shape.len())
                .map(|s| if mask >> g.feature_of(s) & 1 == 1 { a.scalars()[s] } else { b.scalars()[s] })
                .collect();
            let spliced = LatentVector::new(scalars, g).unwrap();
            prop_assert!(codec.imaginary_residue(&spliced).unwrap() < 1e-9);
        }
    }
}
