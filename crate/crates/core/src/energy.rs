//! Per-pixel free energy from class logits. Outlier pixels carry high
//! energy; inlier pixels with a confident class carry low energy.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("logits contain non-finite values")]
    NonFiniteLogits,
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("logits dimensions {0}x{1}x{2} do not match expectation")]
    IncompatibleDimensions(u32, u32, usize),
}

/// Per-pixel K-class scores, planar (class-major) layout: `classes`
/// image-sized planes back to back. Planar keeps every energy pass a
/// contiguous elementwise sweep, which the compiler vectorizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub width: u32,
    pub height: u32,
    pub classes: usize,
    pub data: Vec<f32>,
}

impl Logits {
    pub fn new(width: u32, height: u32, classes: usize) -> Self {
        Logits {
            width,
            height,
            classes,
            data: vec![0.0; width as usize * height as usize * classes],
        }
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn plane(&self, class: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[class * n..(class + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, class: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[class * n..(class + 1) * n]
    }

    /// Gathers one pixel's class scores (strided read across the planes).
    pub fn pixel(&self, col: u32, row: u32) -> Vec<f32> {
        let n = self.plane_len();
        let i = row as usize * self.width as usize + col as usize;
        (0..self.classes).map(|c| self.data[c * n + i]).collect()
    }

    /// Writes one pixel's class scores.
    pub fn set_pixel(&mut self, col: u32, row: u32, values: &[f32]) {
        assert_eq!(values.len(), self.classes);
        let n = self.plane_len();
        let i = row as usize * self.width as usize + col as usize;
        for (c, &v) in values.iter().enumerate() {
            self.data[c * n + i] = v;
        }
    }
}

/// Per-pixel free energy raster, float32, image-sized.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl EnergyMap {
    #[inline]
    pub fn get(&self, col: u32, row: u32) -> f32 {
        self.data[row as usize * self.width as usize + col as usize]
    }
}

/// Free energy of one logit vector: `-log sum_c exp(z_c)`, computed in f64
/// with max subtraction.
pub fn free_energy(logits: &[f32]) -> Result<f64, EnergyError> {
    if logits.len() < 2 {
        return Err(EnergyError::TooFewClasses(logits.len()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(EnergyError::NonFiniteLogits);
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = logits.iter().map(|&z| (z as f64 - max).exp()).sum();
    Ok(-(max + sum.ln()))
}

/// Free energy for every pixel. Uses a fast branch-free `exp` on the hot
/// path (relative error ~1e-7, well inside the thresholding margins);
/// finiteness of the inputs is checked in the same pass.
pub fn energy_from_logits(logits: &Logits) -> Result<EnergyMap, EnergyError> {
    if logits.classes < 2 {
        return Err(EnergyError::TooFewClasses(logits.classes));
    }
    let k = logits.classes;
    let n = logits.plane_len();

    // Process pixels in cache-sized strips so the scratch buffers stay
    // resident while the class planes stream past; every inner loop is a
    // contiguous elementwise sweep the compiler vectorizes.
    //
    // Log-sum-exp is shift-invariant, so any per-strip constant works as
    // the stabilizing bias. The hot path uses the previous strip's maximum
    // speculatively and folds the exp accumulation, the per-pixel maximum
    // and the finiteness check into one sweep over the planes; if the strip
    // turns out to stray too far from that bias (risking overflow or the
    // -87 exp clamp), its result is discarded and recomputed with the exact
    // per-pixel-max two-pass route. The first strip always takes the exact
    // route to seed the bias.
    const STRIP: usize = 4 * 1024;
    const BIAS_SLACK: f32 = 60.0;
    let mut data = vec![0.0f32; n];
    let mut maxes = vec![0.0f32; STRIP];
    let mut sums = vec![0.0f32; STRIP];
    let mut ebits = vec![0u32; STRIP];
    let mut bias: Option<f32> = None;
    let mut start = 0;
    while start < n {
        let len = STRIP.min(n - start);
        let mut done = false;
        if let Some(b) = bias {
            maxes[..len].fill(f32::NEG_INFINITY);
            sums[..len].fill(0.0);
            ebits[..len].fill(0);
            // several classes per sweep: the exp polynomial is a serial FMA
            // chain, so independent chains keep the FMA units busy
            let mut c = 0;
            while c + 3 < k {
                let p0 = &logits.plane(c)[start..start + len];
                let p1 = &logits.plane(c + 1)[start..start + len];
                let p2 = &logits.plane(c + 2)[start..start + len];
                let p3 = &logits.plane(c + 3)[start..start + len];
                for i in 0..len {
                    let (z0, z1, z2, z3) = (p0[i], p1[i], p2[i], p3[i]);
                    sums[i] += (exp_clamped(z0 - b) + exp_clamped(z1 - b))
                        + (exp_clamped(z2 - b) + exp_clamped(z3 - b));
                    maxes[i] = maxes[i].max(z0.max(z1)).max(z2.max(z3));
                    // exponent bits all-ones => the value was Inf/NaN
                    ebits[i] = ebits[i]
                        .max((z0.to_bits() & 0x7f80_0000).max(z1.to_bits() & 0x7f80_0000))
                        .max((z2.to_bits() & 0x7f80_0000).max(z3.to_bits() & 0x7f80_0000));
                }
                c += 4;
            }
            while c + 1 < k {
                let pa = &logits.plane(c)[start..start + len];
                let pb = &logits.plane(c + 1)[start..start + len];
                for ((((s, m), e), &za), &zb) in sums[..len]
                    .iter_mut()
                    .zip(&mut maxes)
                    .zip(&mut ebits)
                    .zip(pa)
                    .zip(pb)
                {
                    *s += exp_clamped(za - b) + exp_clamped(zb - b);
                    *m = m.max(za).max(zb);
                    // exponent bits all-ones => the value was Inf/NaN
                    *e = (*e).max(za.to_bits() & 0x7f80_0000).max(zb.to_bits() & 0x7f80_0000);
                }
                c += 2;
            }
            if c < k {
                let plane = &logits.plane(c)[start..start + len];
                for (((s, m), e), &z) in sums[..len]
                    .iter_mut()
                    .zip(&mut maxes)
                    .zip(&mut ebits)
                    .zip(plane)
                {
                    *s += exp_clamped(z - b);
                    *m = m.max(z);
                    *e = (*e).max(z.to_bits() & 0x7f80_0000);
                }
            }
            if ebits[..len].iter().any(|&e| e == 0x7f80_0000) {
                return Err(EnergyError::NonFiniteLogits);
            }
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for &m in &maxes[..len] {
                lo = lo.min(m);
                hi = hi.max(m);
            }
            if lo - b >= -BIAS_SLACK && hi - b <= BIAS_SLACK {
                for (d, &s) in data[start..start + len].iter_mut().zip(&sums[..len]) {
                    *d = -(b + ln_pos(s));
                }
                bias = Some(hi);
                done = true;
            }
        }
        if !done {
            maxes[..len].copy_from_slice(&logits.plane(0)[start..start + len]);
            for c in 1..k {
                let plane = &logits.plane(c)[start..start + len];
                for (m, &z) in maxes[..len].iter_mut().zip(plane) {
                    *m = m.max(z);
                }
            }
            sums[..len].fill(0.0);
            ebits[..len].fill(0);
            for c in 0..k {
                let plane = &logits.plane(c)[start..start + len];
                for (((s, &m), e), &z) in sums[..len]
                    .iter_mut()
                    .zip(&maxes)
                    .zip(&mut ebits)
                    .zip(plane)
                {
                    *s += exp_clamped(z - m);
                    *e = (*e).max(z.to_bits() & 0x7f80_0000);
                }
            }
            if ebits[..len].iter().any(|&e| e == 0x7f80_0000) {
                return Err(EnergyError::NonFiniteLogits);
            }
            let mut hi = f32::NEG_INFINITY;
            for ((d, &m), &s) in data[start..start + len].iter_mut().zip(&maxes).zip(&sums) {
                *d = -(m + ln_pos(s));
                hi = hi.max(m);
            }
            bias = Some(hi);
        }
        start += len;
    }
    Ok(EnergyMap {
        width: logits.width,
        height: logits.height,
        data,
    })
}

/// Binary outlier raster: pixel set iff its energy exceeds `t`.
pub fn threshold_outliers(energy: &EnergyMap, t: f32) -> crate::mask::Mask {
    let data = energy.data.iter().map(|&e| (e > t) as u8).collect();
    crate::mask::Mask::from_raw(energy.width, energy.height, data)
}

/// exp(x), Cephes-style range reduction + degree-5 polynomial, valid up to
/// x ~ 87 (beyond that the result is garbage; callers bound their inputs).
/// Branch-free with no float<->int casts or libm calls (the rounded
/// exponent is recovered from the mantissa bits of a magic-constant add),
/// so the bulk energy pass vectorizes. Inputs are clamped to -87, where
/// exp underflows to ~1.6e-38. Relative error is below 1e-7.
#[inline]
fn exp_clamped(x: f32) -> f32 {
    let x = x.max(-87.0);
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const C1: f32 = 0.693_359_4;
    const C2: f32 = -2.121_944_4e-4;
    // 1.5 * 2^23: adding it rounds to the nearest integer, which lands in
    // the low mantissa bits biased by 2^22
    const MAGIC: f32 = 12_582_912.0;
    let biased = LOG2E * x + MAGIC;
    let n = biased - MAGIC;
    let ni = (biased.to_bits() & 0x007f_ffff) as i32 - 0x0040_0000;
    let r = x - n * C1 - n * C2;
    let mut p = 1.987_569_1e-4f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_0e-1;
    let z = p * r * r + r + 1.0;
    // scale by 2^n
    f32::from_bits(((ni + 127) as u32) << 23) * z
}

/// ln(x) for finite x > 0, Cephes-style: exponent split via bit tricks plus
/// a degree-9 polynomial on the mantissa; branch-free and vectorizable.
/// Relative error is below 1e-7 on [1, 64] (the range the energy sum
/// occupies after max subtraction).
#[inline]
fn ln_pos(x: f32) -> f32 {
    const SQRTH: f32 = std::f32::consts::FRAC_1_SQRT_2;
    const C1: f32 = 0.693_359_4;
    const C2: f32 = -2.121_944_4e-4;
    let bits = x.to_bits();
    let mut e = ((bits >> 23) as i32) - 126;
    let mut m = f32::from_bits((bits & 0x007f_ffff) | 0x3f00_0000); // [0.5, 1)
    let low = m < SQRTH;
    m = if low { m + m } else { m };
    e -= low as i32;
    let f = m - 1.0;
    let mut p = 7.037_683_6e-2f32;
    p = p * f - 1.151_461_03e-1;
    p = p * f + 1.167_699_87e-1;
    p = p * f - 1.242_014_08e-1;
    p = p * f + 1.424_932_28e-1;
    p = p * f - 1.666_805_77e-1;
    p = p * f + 2.000_071_48e-1;
    p = p * f - 2.499_999_4e-1;
    p = p * f + 3.333_333_17e-1;
    let f2 = f * f;
    let ef = e as f32;
    let y = f * f2 * p + ef * C2 - 0.5 * f2;
    f + y + ef * C1
}
