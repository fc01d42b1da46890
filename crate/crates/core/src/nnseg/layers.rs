use rayon::prelude::*;

use super::{NnError, Tensor};

pub const BN_EPS: f32 = 1e-5;

/// 3×3 kernel bank `[out, in, 3, 3]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub out_channels: usize,
    pub in_channels: usize,
    pub data: Vec<f32>,
}

impl ConvKernel {
    pub fn new(out_channels: usize, in_channels: usize, data: Vec<f32>) -> Result<Self, NnError> {
        if data.len() != out_channels * in_channels * 9 {
            return Err(NnError::Shape(format!(
                "{} values for kernel [{out_channels}, {in_channels}, 3, 3]",
                data.len()
            )));
        }
        Ok(Self { out_channels, in_channels, data })
    }

    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            data: vec![0.0; out_channels * in_channels * 9],
        }
    }

    /// Centred delta on the diagonal: maps each channel to itself.
    pub fn identity(channels: usize) -> Self {
        let mut k = Self::zeros(channels, channels);
        for c in 0..channels {
            k.data[(c * channels + c) * 9 + 4] = 1.0;
        }
        k
    }

    fn taps(&self, o: usize, i: usize) -> &[f32] {
        let base = (o * self.in_channels + i) * 9;
        &self.data[base..base + 9]
    }
}

/// Adds `scale · (k ⋆ x)` with the given dilation and zero padding equal to
/// the dilation, so spatial size is preserved.
fn accumulate_conv(x: &Tensor, k: &ConvKernel, o: usize, dilation: usize, scale: f32, out: &mut [f32]) {
    let (h, w) = (x.height() as isize, x.width() as isize);
    let d = dilation as isize;
    for i in 0..k.in_channels {
        let plane = x.plane(i);
        for (t, &kv) in k.taps(o, i).iter().enumerate() {
            if kv == 0.0 {
                continue;
            }
            let kv = kv * scale;
            let dy = (t as isize / 3 - 1) * d;
            let dx = (t as isize % 3 - 1) * d;
            let x_lo = (-dx).max(0);
            let x_hi = (w - dx).min(w);
            if x_lo >= x_hi {
                continue;
            }
            for y in (-dy).max(0)..(h - dy).min(h) {
                let src = &plane[((y + dy) * w + x_lo + dx) as usize..((y + dy) * w + x_hi + dx) as usize];
                let dst = &mut out[(y * w + x_lo) as usize..(y * w + x_hi) as usize];
                for (a, &b) in dst.iter_mut().zip(src) {
                    *a += kv * b;
                }
            }
        }
    }
}

/// Mean of the standard (padding 1) and dilated (padding `dilation`)
/// convolutions of `x` with one shared 3×3 kernel.
pub fn shared_atrous_conv(x: &Tensor, kernel: &ConvKernel, dilation: usize) -> Result<Tensor, NnError> {
    if kernel.in_channels != x.channels() {
        return Err(NnError::Shape(format!(
            "kernel expects {} input channels, tensor has {} ({}x{}x{})",
            kernel.in_channels,
            x.channels(),
            x.channels(),
            x.height(),
            x.width()
        )));
    }
    if dilation == 0 {
        return Err(NnError::Config("dilation must be positive".into()));
    }
    let (h, w) = (x.height(), x.width());
    let planes: Vec<Vec<f32>> = (0..kernel.out_channels)
        .into_par_iter()
        .map(|o| {
            let mut out = vec![0.0f32; h * w];
            accumulate_conv(x, kernel, o, 1, 0.5, &mut out);
            accumulate_conv(x, kernel, o, dilation, 0.5, &mut out);
            out
        })
        .collect();
    Tensor::from_vec(kernel.out_channels, h, w, planes.concat())
}

/// Inference-mode batch norm parameters, one entry per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

pub fn batch_norm(mut x: Tensor, bn: &BatchNorm) -> Result<Tensor, NnError> {
    if bn.channels() != x.channels() {
        return Err(NnError::Shape(format!(
            "batch norm over {} channels applied to {}",
            bn.channels(),
            x.channels()
        )));
    }
    for c in 0..x.channels() {
        let s = bn.gamma[c] / (bn.var[c] + BN_EPS).sqrt();
        let b = bn.beta[c] - bn.mean[c] * s;
        x.plane_mut(c).iter_mut().for_each(|v| *v = *v * s + b);
    }
    Ok(x)
}

/// 1×1 convolution `[out, in + 1]`; the last column is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointwise {
    pub out_channels: usize,
    pub in_channels: usize,
    pub data: Vec<f32>,
}

impl Pointwise {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            data: vec![0.0; out_channels * (in_channels + 1)],
        }
    }
}

pub fn pointwise_conv(x: &Tensor, p: &Pointwise) -> Result<Tensor, NnError> {
    if p.in_channels != x.channels() {
        return Err(NnError::Shape(format!(
            "pointwise conv expects {} channels, tensor has {}",
            p.in_channels,
            x.channels()
        )));
    }
    let n = x.height() * x.width();
    let planes: Vec<Vec<f32>> = (0..p.out_channels)
        .into_par_iter()
        .map(|o| {
            let row = &p.data[o * (p.in_channels + 1)..(o + 1) * (p.in_channels + 1)];
            let mut out = vec![row[p.in_channels]; n];
            for (i, &wgt) in row[..p.in_channels].iter().enumerate() {
                if wgt != 0.0 {
                    for (a, &b) in out.iter_mut().zip(x.plane(i)) {
                        *a += wgt * b;
                    }
                }
            }
            out
        })
        .collect();
    Tensor::from_vec(p.out_channels, x.height(), x.width(), planes.concat())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub conv1: ConvKernel,
    pub bn1: BatchNorm,
    pub conv2: ConvKernel,
    pub bn2: BatchNorm,
    /// Present exactly when input and output channel counts differ.
    pub project: Option<Pointwise>,
}

impl ResBlock {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            conv1: ConvKernel::zeros(out_channels, in_channels),
            bn1: BatchNorm::identity(out_channels),
            conv2: ConvKernel::zeros(out_channels, out_channels),
            bn2: BatchNorm::identity(out_channels),
            project: (in_channels != out_channels).then(|| Pointwise::zeros(out_channels, in_channels)),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }
}

/// `ReLU(BN(conv2(ReLU(BN(conv1(x))))) + project(x))`.
pub fn res_block(x: &Tensor, p: &ResBlock, dilation: usize) -> Result<Tensor, NnError> {
    let y = batch_norm(shared_atrous_conv(x, &p.conv1, dilation)?, &p.bn1)?.relu();
    let mut y = batch_norm(shared_atrous_conv(&y, &p.conv2, dilation)?, &p.bn2)?;
    let skip = match &p.project {
        Some(proj) => pointwise_conv(x, proj)?,
        None if x.channels() == y.channels() => x.clone(),
        None => {
            return Err(NnError::Shape(format!(
                "residual needs a projection from {} to {} channels",
                x.channels(),
                y.channels()
            )))
        }
    };
    for (a, &b) in y.data_mut().iter_mut().zip(skip.data()) {
        *a += b;
    }
    Ok(y.relu())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation on an explicitly zero-padded single-channel grid.
    fn naive_conv(x: &[f32], h: usize, w: usize, k: &[f32; 9], d: usize) -> Vec<f32> {
        let mut out = vec![0.0; h * w];
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let mut s = 0.0;
                for ky in 0..3isize {
                    for kx in 0..3isize {
                        let sy = y + (ky - 1) * d as isize;
                        let sx = xx + (kx - 1) * d as isize;
                        if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                            s += k[(ky * 3 + kx) as usize] * x[(sy as usize) * w + sx as usize];
                        }
                    }
                }
                out[(y as usize) * w + xx as usize] = s;
            }
        }
        out
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = Tensor::from_vec(2, 5, 6, (0..60).map(|v| v as f32 * 0.5 - 7.0).collect()).unwrap();
        for d in [1, 2, 3, 7] {
            assert_eq!(shared_atrous_conv(&x, &ConvKernel::identity(2), d).unwrap(), x);
        }
    }

    #[test]
    fn hand_case_4x4_dilation_2() {
        let x: Vec<f32> = (1..=16).map(|v| v as f32).collect();
        let k = [1.0, 0.0, -1.0, 2.0, 0.5, 0.0, 0.0, 1.0, 0.0];
        // Standard branch at (0,0): taps inside the frame are k[4]·x(0,0),
        // k[5]·x(0,1), k[7]·x(1,0), k[8]·x(1,1) = 0.5 + 0 + 5 + 0 = 5.5.
        // Dilated branch at (0,0): k[4]·x(0,0) + k[5]·x(0,2) + k[7]·x(2,0)
        // + k[8]·x(2,2) = 0.5 + 0 + 9 + 0 = 9.5. Mean = 7.5.
        let t = Tensor::from_vec(1, 4, 4, x.clone()).unwrap();
        let out = shared_atrous_conv(&t, &ConvKernel::new(1, 1, k.to_vec()).unwrap(), 2).unwrap();
        assert!((out.get(0, 0, 0) - 7.5).abs() < 1e-6);
        let a = naive_conv(&x, 4, 4, &k, 1);
        let b = naive_conv(&x, 4, 4, &k, 2);
        for i in 0..16 {
            assert!((out.data()[i] - 0.5 * (a[i] + b[i])).abs() < 1e-6);
        }
    }

    #[test]
    fn shared_weight_affects_both_branches() {
        let x = Tensor::from_vec(1, 6, 6, (0..36).map(|v| (v % 7) as f32).collect()).unwrap();
        let mut k = ConvKernel::zeros(1, 1);
        let base = shared_atrous_conv(&x, &k, 2).unwrap();
        k.data[0] = 1.0;
        let out = shared_atrous_conv(&x, &k, 2).unwrap();
        // Top-left tap reads (y-1, x-1) in one branch and (y-2, x-2) in the
        // other; at (5,5) both are inside the frame.
        let expect = 0.5 * (x.get(0, 4, 4) + x.get(0, 3, 3));
        assert!((out.get(0, 5, 5) - base.get(0, 5, 5) - expect).abs() < 1e-6);
        // At (1,1) only the standard branch sees the frame.
        assert!((out.get(0, 1, 1) - 0.5 * x.get(0, 0, 0)).abs() < 1e-6);
    }

    #[test]
    fn channel_mismatch_named() {
        let x = Tensor::zeros(3, 4, 4);
        let err = shared_atrous_conv(&x, &ConvKernel::zeros(2, 2), 2).unwrap_err();
        assert!(err.to_string().contains("3x4x4"));
    }

    #[test]
    fn zero_block_is_relu() {
        let x = Tensor::from_vec(2, 3, 3, (0..18).map(|v| v as f32 - 9.0).collect()).unwrap();
        let y = res_block(&x, &ResBlock::zeros(2, 2), 2).unwrap();
        assert_eq!(y, x.clone().relu());
    }

    #[test]
    fn zero_input_zero_output() {
        let mut p = ResBlock::zeros(1, 4);
        p.conv1.data.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f32).sin());
        p.conv2.data.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f32).cos());
        let y = res_block(&Tensor::zeros(1, 8, 8), &p, 2).unwrap();
        assert_eq!(y.shape(), (4, 8, 8));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_norm_affine() {
        let x = Tensor::from_vec(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let bn = BatchNorm { gamma: vec![2.0], beta: vec![1.0], mean: vec![1.0], var: vec![4.0] };
        let y = batch_norm(x, &bn).unwrap();
        assert!((y.data()[1] - (2.0 * 2.0 / (4.0f32 + BN_EPS).sqrt() + 1.0)).abs() < 1e-6);
    }
}
