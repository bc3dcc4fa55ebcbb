#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use latent_shap::{Image, Shape};

pub const BIN: &str = env!("CARGO_BIN_EXE_latent-shap");

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_table(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..1usize << n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Shapley values by summing weighted marginals over every subset without `i`.
pub fn direct_shapley(n: usize, v: &dyn Fn(u64) -> f64) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|j| j as f64).product::<f64>();
    let total = fact(n);
    (0..n)
        .map(|i| {
            let mut phi = 0.0;
            for s in 0u64..1 << n {
                if s >> i & 1 == 1 {
                    continue;
                }
                let k = s.count_ones() as usize;
                let w = fact(k) * fact(n - k - 1) / total;
                phi += w * (v(s | 1 << i) - v(s));
            }
            phi
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_image(shape: Shape, rng: &mut ChaCha8Rng) -> Image {
    Image::new(shape, (0..shape.len()).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

/// Orthonormal 2-D DFT of a `h × w` complex plane, summed term by term.
pub fn naive_dft(plane: &[(f64, f64)], h: usize, w: usize, inverse: bool) -> Vec<(f64, f64)> {
    let sign = if inverse { 1.0 } else { -1.0 };
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![(0.0, 0.0); h * w];
    for k in 0..h {
        for l in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let theta = sign * 2.0 * PI * ((k * r) as f64 / h as f64 + (l * c) as f64 / w as f64);
                    let (a, b) = plane[r * w + c];
                    re += a * theta.cos() - b * theta.sin();
                    im += a * theta.sin() + b * theta.cos();
                }
            }
            out[k * w + l] = (re * norm, im * norm);
        }
    }
    out
}

/// Frequency bin of mode `(k, l)`: the number of bin edges `j/(B√2)`,
/// `j = 1..B-1`, lying at or below the folded normalized frequency norm.
pub fn oracle_bin(k: usize, l: usize, h: usize, w: usize, bins: usize) -> usize {
    let a = k.min(h - k) as u128;
    let b = l.min(w - l) as u128;
    let (h, w, nb) = (h as u128, w as u128, bins as u128);
    // (j/(B√2))² ≤ (a/h)² + (b/w)²
    (1..nb)
        .filter(|&j| j * j * h * h * w * w <= 2 * nb * nb * (a * a * w * w + b * b * h * h))
        .count()
}

/// Whether some black pixel has no 4-neighbour path of black pixels to the
/// border, searched separately from every black pixel.
pub fn oracle_has_hole(black: &[bool], h: usize, w: usize) -> bool {
    let escapes = |start: usize| {
        let mut seen = vec![false; h * w];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            let (r, c) = (p / w, p % w);
            if r == 0 || c == 0 || r == h - 1 || c == w - 1 {
                return true;
            }
            for q in [p - w, p + w, p - 1, p + 1] {
                if black[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        false
    };
    (0..h * w).any(|p| black[p] && !escapes(p))
}

/// White strokes on black: pixels with `inner ≤ d ≤ outer` from the centre are
/// white, except those within `gap` of the ray at angle `gap_angle`.
pub fn ring_image(size: usize, center: (f64, f64), inner: f64, outer: f64, gap: Option<(f64, f64)>) -> Image {
    let mut img = Image::filled(Shape::new(size, size, 1), 0.0);
    for r in 0..size {
        for c in 0..size {
            let (dy, dx) = (r as f64 - center.0, c as f64 - center.1);
            let d = dy.hypot(dx);
            if d < inner || d > outer {
                continue;
            }
            if let Some((angle, half_width)) = gap {
                let (uy, ux) = (angle.sin(), angle.cos());
                let along = dy * uy + dx * ux;
                let across = (dx * uy - dy * ux).abs();
                if along > 0.0 && across <= half_width {
                    continue;
                }
            }
            img.set(r, c, 0, 1.0);
        }
    }
    img
}

pub fn black_mask(img: &Image) -> Vec<bool> {
    img.data().iter().map(|&v| v < 0.5).collect()
}

pub fn cli(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("LATENT_SHAP_THREADS", t.to_string()),
        None => cmd.env_remove("LATENT_SHAP_THREADS"),
    };
    cmd.output().expect("run latent-shap")
}

pub fn gen_sprites(dir: &Path, n: usize, seed: u64, grid: usize) {
    let out = cli(
        &[
            "gen-sprites",
            "--n",
            &n.to_string(),
            "--seed",
            &seed.to_string(),
            "--grid",
            &grid.to_string(),
            "--out",
            dir.to_str().unwrap(),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "gen-sprites: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// `exec:` spec running one of the binary's hidden test doubles.
pub fn double(args: &str) -> String {
    format!("exec:'{BIN}' {args}")
}
