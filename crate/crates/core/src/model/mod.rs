//! The forecaster: Haar approximation, scaled DCT-II, then one linear head
//! shared by every channel.
//!
//! The head is either low-rank (`A·P·Q + b`) or dense (`A·W + b`). Transforms
//! carry no parameters, so [`FeaturePipeline`] can be applied once to a
//! dataset and the head trained on the cached features.

mod checkpoint;

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HadlError, Result};
use crate::tensor::{Matrix, Tensor3};
use crate::transforms::{haar_approx_into, DctPlan};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

/// Rank used for the main forecasting runs.
pub const DEFAULT_RANK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    LowRank(usize),
    Dense,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadKind::LowRank(r) => write!(f, "lowrank{r}"),
            HeadKind::Dense => f.write_str("dense"),
        }
    }
}

/// Structural switches used by the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub use_haar: bool,
    pub use_dct: bool,
    pub head: HeadKind,
    pub bias: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Self {
            use_haar: true,
            use_dct: true,
            head: HeadKind::LowRank(DEFAULT_RANK),
            bias: true,
        }
    }
}

impl Variant {
    /// Directory-safe label, e.g. `haar-dct-lowrank50-bias`.
    pub fn label(&self) -> String {
        format!(
            "{}-{}-{}-{}",
            if self.use_haar { "haar" } else { "nohaar" },
            if self.use_dct { "dct" } else { "nodct" },
            self.head,
            if self.bias { "bias" } else { "nobias" }
        )
    }

    pub fn input_dim(&self, lookback: usize) -> Result<usize> {
        input_dim(lookback, self.use_haar)
    }
}

fn input_dim(lookback: usize, use_haar: bool) -> Result<usize> {
    if lookback == 0 {
        return Err(HadlError::ShapeMismatch("lookback must be positive".into()));
    }
    if use_haar {
        if lookback < 2 {
            return Err(HadlError::TooShort(lookback));
        }
        if lookback % 2 != 0 {
            return Err(HadlError::OddLength(lookback));
        }
        Ok(lookback / 2)
    } else {
        Ok(lookback)
    }
}

/// The parameter-free part of the model: raw window → head input.
#[derive(Debug, Clone)]
pub struct FeaturePipeline {
    lookback: usize,
    use_haar: bool,
    dct: Option<DctPlan>,
    haar_buf_len: usize,
}

impl FeaturePipeline {
    pub fn new(lookback: usize, use_haar: bool, use_dct: bool) -> Result<Self> {
        let n = input_dim(lookback, use_haar)?;
        // The 2/L factor is kept even without Haar, where N = L.
        let dct = if use_dct {
            Some(DctPlan::new(n, 2.0 / lookback as f64)?)
        } else {
            None
        };
        Ok(Self {
            lookback,
            use_haar,
            dct,
            haar_buf_len: n,
        })
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn output_dim(&self) -> usize {
        self.haar_buf_len
    }

    pub fn transform_row(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.lookback);
        match (self.use_haar, &self.dct) {
            (true, Some(plan)) => {
                let mut buf = vec![0.0; self.haar_buf_len];
                haar_approx_into(x, &mut buf);
                plan.apply_into(&buf, out);
            }
            (true, None) => haar_approx_into(x, out),
            (false, Some(plan)) => plan.apply_into(x, out),
            (false, None) => out.copy_from_slice(x),
        }
    }

    /// Transforms every `(batch, channel)` row into a `(batch·channels) × d_in` matrix.
    pub fn transform(&self, x: &Tensor3) -> Result<Matrix> {
        if x.len() != self.lookback {
            return Err(HadlError::ShapeMismatch(format!(
                "input windows have length {}, model lookback is {}",
                x.len(),
                self.lookback
            )));
        }
        let mut out = Matrix::zeros(x.n_rows(), self.output_dim());
        for (i, row) in x.rows().enumerate() {
            self.transform_row(row, out.row_mut(i));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    LowRank { p: Matrix, q: Matrix },
    Dense { w: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HadlModel {
    lookback: usize,
    horizon: usize,
    use_haar: bool,
    use_dct: bool,
    head: Head,
    bias: Option<Vec<f64>>,
    seed: u64,
}

impl HadlModel {
    /// Assembles a model from explicit weights, checking every shape.
    pub fn from_parts(
        lookback: usize,
        horizon: usize,
        use_haar: bool,
        use_dct: bool,
        head: Head,
        bias: Option<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        let d_in = input_dim(lookback, use_haar)?;
        if horizon == 0 {
            return Err(HadlError::ShapeMismatch("horizon must be positive".into()));
        }
        let bad = |what: &str| Err(HadlError::ShapeMismatch(what.to_string()));
        match &head {
            Head::LowRank { p, q } => {
                if p.rows() != d_in || q.cols() != horizon || p.cols() != q.rows() {
                    return bad("P must be d_in x r and Q must be r x H");
                }
                if p.cols() == 0 {
                    return bad("rank must be at least 1");
                }
            }
            Head::Dense { w } => {
                if w.shape() != (d_in, horizon) {
                    return bad("dense weight must be d_in x H");
                }
            }
        }
        if let Some(b) = &bias {
            if b.len() != horizon {
                return bad("bias must have length H");
            }
        }
        Ok(Self {
            lookback,
            horizon,
            use_haar,
            use_dct,
            head,
            bias,
            seed,
        })
    }

    /// Fresh model with head weights drawn i.i.d. from `U[-1/√d_in, 1/√d_in]`
    /// and a zero bias.
    pub fn init(lookback: usize, horizon: usize, variant: Variant, seed: u64) -> Result<Self> {
        let d_in = variant.input_dim(lookback)?;
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows, cols| Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound));
        let head = match variant.head {
            HeadKind::LowRank(0) => {
                return Err(HadlError::ShapeMismatch("rank must be at least 1".into()))
            }
            HeadKind::LowRank(r) => {
                let p = draw(d_in, r);
                let q = draw(r, horizon);
                Head::LowRank { p, q }
            }
            HeadKind::Dense => Head::Dense {
                w: draw(d_in, horizon),
            },
        };
        let bias = variant.bias.then(|| vec![0.0; horizon]);
        Self::from_parts(
            lookback,
            horizon,
            variant.use_haar,
            variant.use_dct,
            head,
            bias,
            seed,
        )
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        if self.use_haar {
            self.lookback / 2
        } else {
            self.lookback
        }
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head {
        &mut self.head
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut Vec<f64>> {
        self.bias.as_mut()
    }

    pub fn head_kind(&self) -> HeadKind {
        match &self.head {
            Head::LowRank { p, .. } => HeadKind::LowRank(p.cols()),
            Head::Dense { .. } => HeadKind::Dense,
        }
    }

    pub fn variant(&self) -> Variant {
        Variant {
            use_haar: self.use_haar,
            use_dct: self.use_dct,
            head: self.head_kind(),
            bias: self.bias.is_some(),
        }
    }

    pub fn pipeline(&self) -> Result<FeaturePipeline> {
        FeaturePipeline::new(self.lookback, self.use_haar, self.use_dct)
    }

    /// Applies the head to already-transformed rows.
    pub fn predict_features(&self, a: &Matrix) -> Result<Matrix> {
        let mut out = match &self.head {
            Head::LowRank { p, q } => a.matmul(p)?.matmul(q)?,
            Head::Dense { w } => a.matmul(w)?,
        };
        if let Some(b) = &self.bias {
            for i in 0..out.rows() {
                for (o, bv) in out.row_mut(i).iter_mut().zip(b) {
                    *o += bv;
                }
            }
        }
        Ok(out)
    }

    /// `batch × channels × L` windows to `batch × channels × H` forecasts.
    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        let a = self.pipeline()?.transform(x)?;
        let y = self.predict_features(&a)?;
        Tensor3::from_matrix(y, x.batch(), x.channels())
    }

    /// `P·Q`, the `d_in × H` map learned by a low-rank head.
    pub fn effective_weight(&self) -> Result<Matrix> {
        match &self.head {
            Head::LowRank { p, q } => p.matmul(q),
            Head::Dense { .. } => Err(HadlError::WrongHead),
        }
    }

    /// The `d_in × H` map regardless of head kind.
    pub fn dense_equivalent(&self) -> Matrix {
        match &self.head {
            Head::LowRank { p, q } => p.matmul(q).expect("shapes checked at construction"),
            Head::Dense { w } => w.clone(),
        }
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(
            self.lookback,
            self.horizon,
            self.head_kind(),
            self.bias.is_some(),
            self.use_haar,
        )
        .expect("shapes checked at construction")
    }

    pub fn flop_estimate(&self, channels: usize, batch: usize) -> u64 {
        flop_estimate(&self.variant(), self.lookback, self.horizon, channels, batch)
    }

    /// Trainable tensors in a fixed order: `P, Q[, bias]` or `W[, bias]`.
    pub fn param_names(&self) -> Vec<&'static str> {
        let mut names = match self.head {
            Head::LowRank { .. } => vec!["P", "Q"],
            Head::Dense { .. } => vec!["W"],
        };
        if self.bias.is_some() {
            names.push("bias");
        }
        names
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = match &self.head {
            Head::LowRank { p, q } => vec![p.as_slice(), q.as_slice()],
            Head::Dense { w } => vec![w.as_slice()],
        };
        if let Some(b) = &self.bias {
            out.push(b);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = match &mut self.head {
            Head::LowRank { p, q } => vec![p.as_mut_slice(), q.as_mut_slice()],
            Head::Dense { w } => vec![w.as_mut_slice()],
        };
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
        out
    }

    /// `‖P‖₁ + ‖Q‖₁` (or `‖W‖₁`); the bias is not penalized.
    pub fn weight_l1(&self) -> f64 {
        match &self.head {
            Head::LowRank { p, q } => p.l1_norm() + q.l1_norm(),
            Head::Dense { w } => w.l1_norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: u64,
    pub breakdown: BTreeMap<String, u64>,
}

impl ParamCount {
    /// Total in thousands at the given number of decimals, e.g. `"17.70"`.
    pub fn thousands(&self, decimals: usize, rounding: Rounding) -> String {
        format_thousands(self.total, decimals, rounding)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    Nearest,
    Truncate,
}

pub fn format_thousands(count: u64, decimals: usize, rounding: Rounding) -> String {
    let k = count as f64 / 1000.0;
    let factor = 10f64.powi(decimals as i32);
    let v = match rounding {
        Rounding::Nearest => (k * factor).round() / factor,
        Rounding::Truncate => (k * factor + 1e-9).floor() / factor,
    };
    format!("{v:.decimals$}")
}

pub fn param_count(
    lookback: usize,
    horizon: usize,
    head: HeadKind,
    with_bias: bool,
    use_haar: bool,
) -> Result<ParamCount> {
    let d_in = input_dim(lookback, use_haar)? as u64;
    let h = horizon as u64;
    let mut breakdown = BTreeMap::new();
    match head {
        HeadKind::LowRank(r) => {
            breakdown.insert("P".to_string(), d_in * r as u64);
            breakdown.insert("Q".to_string(), r as u64 * h);
        }
        HeadKind::Dense => {
            breakdown.insert("W".to_string(), d_in * h);
        }
    }
    if with_bias {
        breakdown.insert("bias".to_string(), h);
    }
    Ok(ParamCount {
        total: breakdown.values().sum(),
        breakdown,
    })
}

/// Rough operation count, two FLOPs per multiply-add:
/// Haar `2·C·(L/2)·2`, DCT `2·C·N²`, head `2·C·(d_in·r + r·H)` (dense:
/// `2·C·d_in·H`), all times `batch`. Bias additions are not counted.
pub fn flop_estimate(
    variant: &Variant,
    lookback: usize,
    horizon: usize,
    channels: usize,
    batch: usize,
) -> u64 {
    let c = channels as u64;
    let l = lookback as u64;
    let h = horizon as u64;
    let d_in = if variant.use_haar { l / 2 } else { l };
    let haar = if variant.use_haar { 2 * c * (l / 2) * 2 } else { 0 };
    let dct = if variant.use_dct { 2 * c * d_in * d_in } else { 0 };
    let head = match variant.head {
        HeadKind::LowRank(r) => 2 * c * (d_in * r as u64 + r as u64 * h),
        HeadKind::Dense => 2 * c * d_in * h,
    };
    (haar + dct + head) * batch as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assume, proptest};
    use std::f64::consts::SQRT_2;

    fn lowrank(l: usize, h: usize, r: usize, seed: u64) -> HadlModel {
        let v = Variant {
            head: HeadKind::LowRank(r),
            ..Variant::default()
        };
        HadlModel::init(l, h, v, seed).unwrap()
    }

    fn random_input(b: usize, c: usize, l: usize, seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..b * c * l).map(|_| rng.random_range(-2.0..2.0)).collect();
        Tensor3::from_vec(b, c, l, data).unwrap()
    }

    fn with_weights(m: &HadlModel, p: Matrix, q: Matrix, bias: Option<Vec<f64>>) -> HadlModel {
        let v = m.variant();
        HadlModel::from_parts(
            m.lookback(),
            m.horizon(),
            v.use_haar,
            v.use_dct,
            Head::LowRank { p, q },
            bias,
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_expose_bias() {
        let m = lowrank(8, 3, 2, 1);
        let b = vec![0.5, -1.0, 2.0];
        let m = with_weights(&m, Matrix::zeros(4, 2), Matrix::from_fn(2, 3, |i, j| (i + j) as f64), Some(b.clone()));
        let y = m.forward(&random_input(3, 2, 8, 9)).unwrap();
        for r in y.rows() {
            assert_eq!(r, &b[..]);
        }
    }

    #[test]
    fn constant_input_closed_form() {
        // Haar of a constant c gives √2·c; the scaled DCT passes the DC term at
        // unit gain, so the head sees [√2·c, 0, …, 0].
        let m = lowrank(16, 4, 3, 5);
        let c = 1.3;
        let y = m.forward(&Tensor3::from_row(&[c; 16])).unwrap();
        let w = m.effective_weight().unwrap();
        let b = m.bias().unwrap();
        for j in 0..4 {
            let expect = SQRT_2 * c * w.get(0, j) + b[j];
            assert!((y.row(0, 0)[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_lookback() {
        let m = lowrank(8, 2, 1, 0);
        assert!(matches!(m.forward(&Tensor3::zeros(1, 1, 6)), Err(HadlError::ShapeMismatch(_))));
        let v = Variant::default();
        assert!(matches!(HadlModel::init(7, 2, v, 0), Err(HadlError::OddLength(7))));
    }

    #[test]
    fn effective_weight_examples() {
        let m = lowrank(6, 4, 1, 0);
        let mut p = Matrix::zeros(3, 1);
        p.set(0, 0, 1.0);
        let mut q = Matrix::zeros(1, 4);
        q.set(0, 0, 1.0);
        let w = with_weights(&m, p, q, None).effective_weight().unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(w.get(i, j), if (i, j) == (0, 0) { 1.0 } else { 0.0 });
            }
        }

        let m = lowrank(10, 3, 2, 4);
        let w = m.effective_weight().unwrap();
        let Head::LowRank { p, q } = m.head() else { unreachable!() };
        for i in 0..5 {
            for j in 0..3 {
                let outer = p.get(i, 0) * q.get(0, j) + p.get(i, 1) * q.get(1, j);
                assert!((w.get(i, j) - outer).abs() < 1e-15);
            }
        }

        let z = with_weights(&m, Matrix::zeros(5, 2), q.clone(), None);
        assert!(z.effective_weight().unwrap().as_slice().iter().all(|&v| v == 0.0));

        let dense = HadlModel::init(10, 3, Variant { head: HeadKind::Dense, ..Variant::default() }, 0).unwrap();
        assert!(matches!(dense.effective_weight(), Err(HadlError::WrongHead)));
    }

    #[test]
    fn param_count_table_cells() {
        let lr = |r| HeadKind::LowRank(r);
        assert_eq!(param_count(512, 96, lr(50), true, true).unwrap().total, 17_696);
        assert_eq!(param_count(512, 96, lr(40), true, true).unwrap().total, 14_176);
        assert_eq!(param_count(512, 96, lr(40), false, true).unwrap().total, 14_080);
        assert_eq!(param_count(512, 96, HeadKind::Dense, false, true).unwrap().total, 24_576);
        let pc = param_count(512, 96, lr(40), true, false).unwrap();
        assert_eq!(pc.total, 24_416);
        assert_eq!(pc.breakdown["P"], 512 * 40);
        assert_eq!(pc.total, pc.breakdown.values().sum::<u64>());
    }

    #[test]
    fn thousands_formatting() {
        assert_eq!(format_thousands(17_696, 1, Rounding::Truncate), "17.6");
        assert_eq!(format_thousands(17_696, 1, Rounding::Nearest), "17.7");
        assert_eq!(format_thousands(24_576, 2, Rounding::Nearest), "24.58");
        assert_eq!(format_thousands(50_000, 1, Rounding::Nearest), "50.0");
    }

    #[test]
    fn flop_examples() {
        let v = Variant { head: HeadKind::LowRank(1), ..Variant::default() };
        assert_eq!(flop_estimate(&v, 4, 2, 1, 1), 24);
        assert_eq!(flop_estimate(&v, 4, 2, 0, 1), 0);
        assert_eq!(flop_estimate(&v, 512, 96, 7, 2), 2 * flop_estimate(&v, 512, 96, 7, 1));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = lowrank(64, 16, 4, 11);
        assert_eq!(a, lowrank(64, 16, 4, 11));
        assert_ne!(a, lowrank(64, 16, 4, 12));
        let bound = 1.0 / (32f64).sqrt();
        assert!(a.params()[..2].iter().flat_map(|s| s.iter()).all(|v| v.abs() <= bound));
        assert!(a.bias().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transform_variants_have_expected_widths() {
        for (haar, dct, width) in [(true, true, 8), (true, false, 8), (false, true, 16), (false, false, 16)] {
            let p = FeaturePipeline::new(16, haar, dct).unwrap();
            assert_eq!(p.output_dim(), width);
        }
        // Without Haar the scale stays 2/L, i.e. 2/N.
        let p = FeaturePipeline::new(8, false, true).unwrap();
        let mut out = [0.0; 8];
        p.transform_row(&[1.0; 8], &mut out);
        assert!((out[0] - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lowrank_matches_dense_at_full_rank(
            half_l in 1usize..=8, h in 1usize..=8, seed in 0u64..1000, haar in any::<bool>(), dct in any::<bool>()
        ) {
            let l = 2 * half_l;
            let d_in = if haar { half_l } else { l };
            prop_assume!(d_in <= 8);
            let r = d_in.min(h);
            let v = Variant { use_haar: haar, use_dct: dct, head: HeadKind::LowRank(r), bias: true };
            let mut m = HadlModel::init(l, h, v, seed).unwrap();
            m.bias_mut().unwrap().iter_mut().enumerate().for_each(|(i, b)| *b = i as f64 * 0.1);
            let dense = HadlModel::from_parts(
                l, h, haar, dct,
                Head::Dense { w: m.effective_weight().unwrap() },
                m.bias().map(|b| b.to_vec()), seed,
            ).unwrap();
            let x = random_input(3, 2, l, seed + 1);
            let (a, b) = (m.forward(&x).unwrap(), dense.forward(&x).unwrap());
            for (u, w) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((u - w).abs() < 1e-10);
            }
        }

        #[test]
        fn forward_is_linear_without_bias(seed in 0u64..1000, alpha in -3f64..3.0, beta in -3f64..3.0) {
            let v = Variant { head: HeadKind::LowRank(3), bias: false, ..Variant::default() };
            let m = HadlModel::init(16, 5, v, seed).unwrap();
            let x = random_input(2, 3, 16, seed + 7);
            let y = random_input(2, 3, 16, seed + 8);
            let mut mix = x.clone();
            for (o, (a, b)) in mix.as_mut_slice().iter_mut().zip(x.as_slice().iter().zip(y.as_slice())) {
                *o = alpha * a + beta * b;
            }
            let (fm, fx, fy) = (m.forward(&mix).unwrap(), m.forward(&x).unwrap(), m.forward(&y).unwrap());
            for i in 0..fm.as_slice().len() {
                let expect = alpha * fx.as_slice()[i] + beta * fy.as_slice()[i];
                prop_assert!((fm.as_slice()[i] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
            }
        }

        #[test]
        fn channels_are_not_mixed(seed in 0u64..1000) {
            let m = lowrank(12, 4, 2, seed);
            let x = random_input(2, 3, 12, seed + 3);
            let perm = [2usize, 0, 1];
            let mut xp = Tensor3::zeros(2, 3, 12);
            for b in 0..2 {
                for (c, &src) in perm.iter().enumerate() {
                    xp.row_mut(b, c).copy_from_slice(x.row(b, src));
                }
            }
            let (y, yp) = (m.forward(&x).unwrap(), m.forward(&xp).unwrap());
            for b in 0..2 {
                for (c, &src) in perm.iter().enumerate() {
                    prop_assert_eq!(yp.row(b, c), y.row(b, src));
                }
            }
        }
    }
}
