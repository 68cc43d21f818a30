//! Spatial smoothing kernels, 1D convolution and separable spatial-semantic
//! smoothing of 2D signals.
//!
//! Convolution follows the textbook orientation:
//! `out[x] = sum_n k(n) * f(x - n)`, so a kernel with taps only at `n >= 0`
//! never reads positions after `x`.

use ndarray::{Array2, Zip};

use crate::semgraph::SemanticOperator;
use crate::signals::Signal2D;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    SampledGaussian,
    DiscreteGaussian,
    Poisson,
    GaussianDerivative(u32),
}

impl KernelFamily {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sampled-gaussian" => Ok(KernelFamily::SampledGaussian),
            "discrete-gaussian" => Ok(KernelFamily::DiscreteGaussian),
            "poisson" => Ok(KernelFamily::Poisson),
            other => Err(Error::param(format!("unknown kernel family '{other}'"))),
        }
    }

    pub fn is_smoothing(self) -> bool {
        !matches!(self, KernelFamily::GaussianDerivative(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    taps: Vec<f64>,
    center: usize,
    scale: f64,
    family: KernelFamily,
}

impl Kernel1D {
    pub fn impulse(family: KernelFamily) -> Self {
        Kernel1D {
            taps: vec![1.0],
            center: 0,
            scale: 0.0,
            family,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Index into [`taps`](Self::taps) of the zero-displacement tap.
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn min_offset(&self) -> isize {
        -(self.center as isize)
    }

    pub fn max_offset(&self) -> isize {
        (self.taps.len() - 1 - self.center) as isize
    }

    /// Tap at displacement `n`, zero outside the support.
    pub fn tap(&self, n: isize) -> f64 {
        let i = n + self.center as isize;
        if i < 0 || i as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[i as usize]
        }
    }

    /// `(displacement, tap)` pairs over the support.
    pub fn iter(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        let c = self.center as isize;
        self.taps.iter().enumerate().map(move |(i, &t)| (i as isize - c, t))
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Subtracts the tap mean so the kernel sums to zero. Intended for
    /// even-order derivative kernels.
    pub fn zero_mean(mut self) -> Self {
        let mean = self.sum() / self.taps.len() as f64;
        self.taps.iter_mut().for_each(|t| *t -= mean);
        self
    }

    fn symmetric(half: &[f64], scale: f64, family: KernelFamily) -> Self {
        let r = half.len() - 1;
        let mut taps = Vec::with_capacity(2 * r + 1);
        taps.extend(half.iter().rev());
        taps.extend(&half[1..]);
        Kernel1D {
            taps,
            center: r,
            scale,
            family,
        }
    }

    fn renormalized(mut self) -> Self {
        let sum = self.sum();
        self.taps.iter_mut().for_each(|t| *t /= sum);
        self
    }
}

fn check_trunc(trunc_mass: f64) -> Result<()> {
    if !(trunc_mass > 0.0 && trunc_mass <= 1e-3) {
        return Err(Error::param(format!(
            "truncation mass must lie in (0, 1e-3], got {trunc_mass}"
        )));
    }
    Ok(())
}

fn base_radius(s: f64) -> usize {
    (4.0 * s.sqrt()).ceil() as usize
}

/// Generous upper bound on the support needed for any truncation mass.
fn max_radius(s: f64) -> usize {
    (12.0 * s.sqrt()).ceil() as usize + 20
}

/// Smallest radius `r >= base` such that the two-sided tail beyond `r` is
/// below `trunc_mass` of the total. `half[n]` is the magnitude at `|n|`.
fn truncation_radius(half: &[f64], base: usize, trunc_mass: f64) -> usize {
    let total: f64 = half[0] + 2.0 * half[1..].iter().sum::<f64>();
    let mut tail: f64 = 2.0 * half[base.min(half.len() - 1) + 1..].iter().sum::<f64>();
    let mut r = base.min(half.len() - 1);
    while r + 1 < half.len() && tail >= trunc_mass * total {
        r += 1;
        tail -= 2.0 * half[r];
    }
    r
}

/// Gaussian density sampled at integer displacements, truncated and
/// renormalized to unit sum.
pub fn sampled_gaussian_kernel(s: f64, trunc_mass: f64) -> Result<Kernel1D> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidScale(s));
    }
    check_trunc(trunc_mass)?;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s).sqrt();
    let half: Vec<f64> = (0..=max_radius(s))
        .map(|n| norm * (-((n * n) as f64) / (2.0 * s)).exp())
        .collect();
    let r = truncation_radius(&half, base_radius(s), trunc_mass);
    Ok(Kernel1D::symmetric(&half[..=r], s, KernelFamily::SampledGaussian).renormalized())
}

/// `exp(-x) * I_n(x)` for `n = 0..=n_max`.
///
/// Uses the ascending series up to `x = 20` and Miller's downward recurrence
/// above, normalized with `sum_{n in Z} exp(-x) I_n(x) = 1`.
pub fn scaled_bessel_i(n_max: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; n_max + 1];
        out[0] = 1.0;
        return out;
    }
    if x <= 20.0 {
        (0..=n_max).map(|n| scaled_bessel_series(n, x)).collect()
    } else {
        scaled_bessel_miller(n_max, x)
    }
}

fn scaled_bessel_series(n: usize, x: f64) -> f64 {
    let half = x / 2.0;
    // Leading term exp(-x) (x/2)^n / n!, built in log space to avoid overflow.
    let mut log_lead = -x + n as f64 * half.ln();
    for k in 2..=n {
        log_lead -= (k as f64).ln();
    }
    let lead = log_lead.exp();
    if lead == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    lead * sum
}

fn scaled_bessel_miller(n_max: usize, x: f64) -> Vec<f64> {
    let needed = n_max.max(x.ceil() as usize + (25.0 * x.sqrt()).ceil() as usize + 20);
    let start = needed + 2 * (40.0 * needed as f64).sqrt().ceil() as usize + 10;
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-280;
    let two_over_x = 2.0 / x;
    for n in (1..=start).rev() {
        vals[n - 1] = vals[n + 1] + n as f64 * two_over_x * vals[n];
        if vals[n - 1] > 1e250 {
            for v in vals[n - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let total = vals[0] + 2.0 * vals[1..].iter().sum::<f64>();
    vals.truncate(n_max + 1);
    vals.iter_mut().for_each(|v| *v /= total);
    vals
}

/// The discrete analogue of the Gaussian, `exp(-s) I_n(s)`. At `s = 0` this
/// is the unit impulse.
pub fn discrete_gaussian_kernel(s: f64, trunc_mass: f64) -> Result<Kernel1D> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidScale(s));
    }
    check_trunc(trunc_mass)?;
    if s == 0.0 {
        return Ok(Kernel1D::impulse(KernelFamily::DiscreteGaussian));
    }
    let half = scaled_bessel_i(max_radius(s), s);
    let r = truncation_radius(&half, base_radius(s), trunc_mass);
    let mut k = Kernel1D::symmetric(&half[..=r], s, KernelFamily::DiscreteGaussian).renormalized();
    k.scale = s;
    Ok(k)
}

/// Causal kernel `exp(-s) s^n / n!` for `n >= 0`, cut once the mass left
/// out is at most `trunc_mass`.
pub fn poisson_kernel(s: f64, trunc_mass: f64) -> Result<Kernel1D> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidScale(s));
    }
    check_trunc(trunc_mass)?;
    if s == 0.0 {
        return Ok(Kernel1D::impulse(KernelFamily::Poisson));
    }
    let ln_s = s.ln();
    let mut log_term = -s;
    let mut taps = Vec::new();
    let mut cumulative = 0.0;
    let mut n = 0usize;
    loop {
        let t = log_term.exp();
        taps.push(t);
        cumulative += t;
        if n as f64 >= s {
            // Beyond the mode the terms shrink at least geometrically with
            // ratio q, which bounds the tail even when rounding keeps the
            // running sum just short of its target.
            let q = s / (n + 1) as f64;
            if cumulative >= 1.0 - trunc_mass || t * q / (1.0 - q) <= trunc_mass {
                break;
            }
        }
        n += 1;
        log_term += ln_s - (n as f64).ln();
    }
    Ok(Kernel1D {
        taps,
        center: 0,
        scale: s,
        family: KernelFamily::Poisson,
    }
    .renormalized())
}

/// `order`-th derivative of the Gaussian density, sampled at integer
/// displacements. Odd orders are antisymmetric and sum to zero; even orders
/// are raw samples (see [`Kernel1D::zero_mean`]).
pub fn gaussian_derivative_kernel(s: f64, order: u32, trunc_mass: f64) -> Result<Kernel1D> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidScale(s));
    }
    if !(1..=3).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    check_trunc(trunc_mass)?;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s).sqrt();
    let value = |n: usize| {
        let x = n as f64;
        let g = norm * (-(x * x) / (2.0 * s)).exp();
        match order {
            1 => -x / s * g,
            2 => (x * x / (s * s) - 1.0 / s) * g,
            _ => (3.0 * x / (s * s) - x * x * x / (s * s * s)) * g,
        }
    };
    let half: Vec<f64> = (0..=max_radius(s) + order as usize).map(value).collect();
    let magnitude: Vec<f64> = half.iter().map(|v| v.abs()).collect();
    let r = truncation_radius(&magnitude, base_radius(s) + order as usize, trunc_mass);
    let mut taps = Vec::with_capacity(2 * r + 1);
    let sign = if order % 2 == 1 { -1.0 } else { 1.0 };
    taps.extend(half[1..=r].iter().rev().map(|v| sign * v));
    taps.extend(&half[..=r]);
    Ok(Kernel1D {
        taps,
        center: r,
        scale: s,
        family: KernelFamily::GaussianDerivative(order),
    })
}

/// Kernel of the given smoothing family; every family yields the unit
/// impulse at `s = 0`.
pub fn smoothing_kernel(family: KernelFamily, s: f64, trunc_mass: f64) -> Result<Kernel1D> {
    if s == 0.0 && family.is_smoothing() {
        check_trunc(trunc_mass)?;
        return Ok(Kernel1D::impulse(family));
    }
    match family {
        KernelFamily::SampledGaussian => sampled_gaussian_kernel(s, trunc_mass),
        KernelFamily::DiscreteGaussian => discrete_gaussian_kernel(s, trunc_mass),
        KernelFamily::Poisson => poisson_kernel(s, trunc_mass),
        KernelFamily::GaussianDerivative(order) => gaussian_derivative_kernel(s, order, trunc_mass),
    }
}

/// How a convolution treats positions outside the document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Each input sample spreads its mass only over in-range outputs, with
    /// the overlapping taps rescaled to sum 1. Conserves total mass for any
    /// non-negative kernel (including the causal Poisson kernel) and keeps
    /// constants exact away from the ends. Signed kernels fall back to
    /// `Mirror`.
    Renormalize,
    /// Half-sample symmetric reflection (`c b a | a b c`). Conserves mass for
    /// symmetric kernels and reproduces constants everywhere. One-sided
    /// kernels use `Renormalize` instead so they stay causal.
    #[default]
    Mirror,
    /// Positions outside the signal read as zero.
    ZeroPad,
}

impl BoundaryPolicy {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "renormalize" => Ok(BoundaryPolicy::Renormalize),
            "mirror" => Ok(BoundaryPolicy::Mirror),
            "zero-pad" | "zero" => Ok(BoundaryPolicy::ZeroPad),
            other => Err(Error::param(format!("unknown boundary policy '{other}'"))),
        }
    }
}

fn mirror_index(j: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = j.rem_euclid(period);
    if m >= n as isize {
        (period - 1 - m) as usize
    } else {
        m as usize
    }
}

fn effective_boundary(kernel: &Kernel1D, boundary: BoundaryPolicy) -> BoundaryPolicy {
    let signed = kernel.taps.iter().any(|t| *t < 0.0);
    match boundary {
        BoundaryPolicy::Renormalize if signed => BoundaryPolicy::Mirror,
        // Reflection would let a one-sided kernel read past the current
        // position; renormalizing keeps it causal.
        BoundaryPolicy::Mirror if !signed && kernel.min_offset() >= 0 && kernel.max_offset() > 0 => {
            BoundaryPolicy::Renormalize
        }
        other => other,
    }
}

pub fn convolve_1d(signal: &[f64], kernel: &Kernel1D, boundary: BoundaryPolicy) -> Vec<f64> {
    let n = signal.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    match effective_boundary(kernel, boundary) {
        BoundaryPolicy::ZeroPad => {
            for (x, o) in out.iter_mut().enumerate() {
                for (d, t) in kernel.iter() {
                    let j = x as isize - d;
                    if j >= 0 && (j as usize) < n {
                        *o += t * signal[j as usize];
                    }
                }
            }
        }
        BoundaryPolicy::Mirror => {
            for (x, o) in out.iter_mut().enumerate() {
                for (d, t) in kernel.iter() {
                    *o += t * signal[mirror_index(x as isize - d, n)];
                }
            }
        }
        BoundaryPolicy::Renormalize => {
            for (i, &f) in signal.iter().enumerate() {
                let (lo, hi) = scatter_range(kernel, i, n);
                let z: f64 = (lo..=hi).map(|d| kernel.tap(d)).sum();
                if z <= 0.0 {
                    continue;
                }
                for d in lo..=hi {
                    out[(i as isize + d) as usize] += f * kernel.tap(d) / z;
                }
            }
        }
    }
    out
}

/// Displacements `d` for which input `i` lands inside `[0, n)`.
fn scatter_range(kernel: &Kernel1D, i: usize, n: usize) -> (isize, isize) {
    let lo = kernel.min_offset().max(-(i as isize));
    let hi = kernel.max_offset().min(n as isize - 1 - i as isize);
    (lo, hi)
}

/// Convolves every column of `values` (the spatial axis) with `kernel`.
pub fn convolve_columns(values: &Array2<f64>, kernel: &Kernel1D, boundary: BoundaryPolicy) -> Array2<f64> {
    let (n, m) = values.dim();
    let mut out = Array2::zeros((n, m));
    if n == 0 {
        return out;
    }
    match effective_boundary(kernel, boundary) {
        BoundaryPolicy::ZeroPad => {
            for x in 0..n {
                let mut row = out.row_mut(x);
                for (d, t) in kernel.iter() {
                    let j = x as isize - d;
                    if j >= 0 && (j as usize) < n {
                        row.scaled_add(t, &values.row(j as usize));
                    }
                }
            }
        }
        BoundaryPolicy::Mirror => {
            for x in 0..n {
                let mut row = out.row_mut(x);
                for (d, t) in kernel.iter() {
                    row.scaled_add(t, &values.row(mirror_index(x as isize - d, n)));
                }
            }
        }
        BoundaryPolicy::Renormalize => {
            for i in 0..n {
                let (lo, hi) = scatter_range(kernel, i, n);
                let z: f64 = (lo..=hi).map(|d| kernel.tap(d)).sum();
                if z <= 0.0 {
                    continue;
                }
                for d in lo..=hi {
                    let target = (i as isize + d) as usize;
                    out.row_mut(target).scaled_add(kernel.tap(d) / z, &values.row(i));
                }
            }
        }
    }
    out
}

/// Central finite-difference kernel of order 1 to 3, the zero-scale limit
/// of [`gaussian_derivative_kernel`].
pub fn finite_difference_kernel(order: u32) -> Result<Kernel1D> {
    let taps = match order {
        1 => vec![0.5, 0.0, -0.5],
        2 => vec![1.0, -2.0, 1.0],
        3 => vec![0.5, -1.0, 0.0, 1.0, -0.5],
        other => return Err(Error::UnsupportedOrder(other)),
    };
    let center = taps.len() / 2;
    Ok(Kernel1D {
        taps,
        center,
        scale: 0.0,
        family: KernelFamily::GaussianDerivative(order),
    })
}

/// Derivative kernel at scale `s`, falling back to finite differences at
/// `s = 0`. Even orders are shifted to zero mean so constants map to zero.
pub fn derivative_kernel(s: f64, order: u32, trunc_mass: f64) -> Result<Kernel1D> {
    if s == 0.0 {
        finite_difference_kernel(order)
    } else {
        let kernel = gaussian_derivative_kernel(s, order, trunc_mass)?;
        Ok(if order == 2 { kernel.zero_mean() } else { kernel })
    }
}

/// Spatial smoothing along every column followed by the semantic operator
/// along every row.
pub fn smooth_separable_2d(
    signal: &Signal2D,
    s_x: f64,
    family: KernelFamily,
    semantic: &SemanticOperator,
    boundary: BoundaryPolicy,
    trunc_mass: f64,
) -> Result<Signal2D> {
    if !(s_x >= 0.0) {
        return Err(Error::InvalidScale(s_x));
    }
    if semantic.size() != signal.semantic_len() {
        return Err(Error::DimensionMismatch(format!(
            "semantic operator over {} words, signal has {}",
            semantic.size(),
            signal.semantic_len()
        )));
    }
    let kernel = smoothing_kernel(family, s_x, trunc_mass)?;
    let spatial = convolve_columns(signal.values(), &kernel, boundary);
    let smoothed = semantic.apply_rows(&spatial)?;
    Ok(signal.derived(smoothed))
}

/// Explicit finite-difference integration of `d/ds u = 1/2 u''` with
/// reflecting ends, from scale 0 to `s` in steps no larger than `dt`. Test
/// oracle for Gaussian smoothing.
pub fn diffusion_oracle(signal: &[f64], s: f64, dt: f64) -> Result<Vec<f64>> {
    if dt > 0.25 {
        return Err(Error::UnstableStep(dt));
    }
    if !(dt > 0.0) {
        return Err(Error::param(format!("diffusion step must be positive, got {dt}")));
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidScale(s));
    }
    let n = signal.len();
    let mut u = signal.to_vec();
    if s == 0.0 || n < 2 {
        return Ok(u);
    }
    let steps = (s / dt).ceil() as usize;
    let h = s / steps as f64;
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        for x in 0..n {
            let left = u[x.saturating_sub(1)];
            let right = u[(x + 1).min(n - 1)];
            next[x] = u[x] + 0.5 * h * (left - 2.0 * u[x] + right);
        }
        std::mem::swap(&mut u, &mut next);
    }
    Ok(u)
}

/// Elementwise `a - b` for equally shaped matrices.
pub(crate) fn difference(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    Zip::from(&mut out).and(b).for_each(|o, &v| *o -= v);
    out
}
