//! Squeeze-and-excitation fusion of per-modality feature rows.
//!
//! Each modality is squeezed to a scalar by a width-1 dense layer; the
//! squeezed vector passes through a bottlenecked gating network with a
//! sigmoid output, producing one weight per modality; the weights multiply
//! the reshaped concatenation of the raw features, halving its width (for
//! two modalities).
//!
//! Note the row mixing this implies: with two modalities the first reshape
//! row holds the leading half of the text features, while the second row
//! holds the remaining text features followed by the image features, so the
//! image weight also scales some text positions.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::params::{ParamId, ParamSet};
use crate::numerics::scalar::Scalar;
use crate::numerics::tape::{Tape, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusionConfig {
    pub text_dim: usize,
    pub image_dim: usize,
    /// Use bias terms on the squeeze and gate layers. Disable for the
    /// bias-free, equation-literal form.
    pub biases: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            text_dim: 768,
            image_dim: 512,
            biases: true,
        }
    }
}

impl FusionConfig {
    pub fn new(text_dim: usize, image_dim: usize, biases: bool) -> Result<Self> {
        let cfg = FusionConfig {
            text_dim,
            image_dim,
            biases,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text_dim == 0 || self.image_dim == 0 {
            return Err(Error::usage("fusion dimensions must be positive"));
        }
        if (self.text_dim + self.image_dim) % 2 != 0 {
            return Err(Error::shape(
                "fusion config",
                "even total feature width for the two-row reshape",
                format!("{} + {}", self.text_dim, self.image_dim),
            ));
        }
        Ok(())
    }

    /// Width of the fused output row.
    pub fn fused_width(&self) -> usize {
        (self.text_dim + self.image_dim) / 2
    }
}

/// Parameter handles for the two-modality fusion block.
#[derive(Clone, Debug)]
pub struct FusionParams {
    pub text_squeeze: ParamId,              // text_dim × 1
    pub image_squeeze: ParamId,             // image_dim × 1
    pub gate_reduce: ParamId,               // 2 × 1
    pub gate_expand: ParamId,               // 1 × 2
    pub text_squeeze_bias: Option<ParamId>, // 1 × 1
    pub image_squeeze_bias: Option<ParamId>, // 1 × 1
    pub gate_reduce_bias: Option<ParamId>,  // 1 × 1
    pub gate_expand_bias: Option<ParamId>,  // 1 × 2
    pub config: FusionConfig,
}

impl FusionParams {
    pub fn init<S: Scalar>(
        params: &mut ParamSet<S>,
        config: FusionConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let text_squeeze = params.add_xavier("fusion.text_squeeze", config.text_dim, 1, rng);
        let image_squeeze = params.add_xavier("fusion.image_squeeze", config.image_dim, 1, rng);
        let gate_reduce = params.add_xavier("fusion.gate_reduce", 2, 1, rng);
        let gate_expand = params.add_xavier("fusion.gate_expand", 1, 2, rng);
        let (text_squeeze_bias, image_squeeze_bias, gate_reduce_bias, gate_expand_bias) =
            if config.biases {
                (
                    Some(params.add_zeros("fusion.text_squeeze_bias", 1, 1)),
                    Some(params.add_zeros("fusion.image_squeeze_bias", 1, 1)),
                    Some(params.add_zeros("fusion.gate_reduce_bias", 1, 1)),
                    Some(params.add_zeros("fusion.gate_expand_bias", 1, 2)),
                )
            } else {
                (None, None, None, None)
            };
        Ok(FusionParams {
            text_squeeze,
            image_squeeze,
            gate_reduce,
            gate_expand,
            text_squeeze_bias,
            image_squeeze_bias,
            gate_reduce_bias,
            gate_expand_bias,
            config,
        })
    }
}

/// Intermediate values from one fusion forward pass.
#[derive(Clone, Debug)]
pub struct FusionTrace<S> {
    /// Squeezed per-modality scalars, one column per modality.
    pub z: Matrix<S>,
    /// Gate outputs in (0, 1), one column per modality.
    pub s: Matrix<S>,
    pub fused: Matrix<S>,
}

fn check_row_vector<S: Scalar>(m: &Matrix<S>, width: usize, what: &'static str) -> Result<()> {
    if m.rows() != 1 || m.cols() != width {
        return Err(Error::shape(what, format!("1x{width}"), m.shape_string()));
    }
    Ok(())
}

/// Dense width-1 squeeze of each modality, concatenated: z = [xt·W (+b), xi·W (+b)].
pub fn squeeze<S: Scalar>(
    xt: &Matrix<S>,
    xi: &Matrix<S>,
    params: &ParamSet<S>,
    fp: &FusionParams,
) -> Result<Matrix<S>> {
    check_row_vector(xt, fp.config.text_dim, "squeeze text input")?;
    check_row_vector(xi, fp.config.image_dim, "squeeze image input")?;
    let zt = crate::numerics::affine(
        xt,
        params.value(fp.text_squeeze),
        fp.text_squeeze_bias.map(|b| params.value(b)),
    )?;
    let zi = crate::numerics::affine(
        xi,
        params.value(fp.image_squeeze),
        fp.image_squeeze_bias.map(|b| params.value(b)),
    )?;
    zt.concat_cols(&zi)
}

/// Bottlenecked gate: s = sigmoid(relu(z·Wr (+br)) · We (+be)).
pub fn excite<S: Scalar>(
    z: &Matrix<S>,
    params: &ParamSet<S>,
    fp: &FusionParams,
) -> Result<Matrix<S>> {
    check_row_vector(z, 2, "excite input")?;
    let hidden = crate::numerics::affine(
        z,
        params.value(fp.gate_reduce),
        fp.gate_reduce_bias.map(|b| params.value(b)),
    )?
    .relu();
    let out = crate::numerics::affine(
        &hidden,
        params.value(fp.gate_expand),
        fp.gate_expand_bias.map(|b| params.value(b)),
    )?;
    Ok(out.sigmoid())
}

/// Applies modality weights to the two-row reshape of the concatenated
/// features: concat → reshape(2, width) → s · X′.
pub fn fuse<S: Scalar>(xt: &Matrix<S>, xi: &Matrix<S>, s: &Matrix<S>) -> Result<Matrix<S>> {
    if xt.rows() != 1 || xi.rows() != 1 {
        return Err(Error::shape(
            "fuse",
            "single-row feature inputs",
            format!("{} and {}", xt.shape_string(), xi.shape_string()),
        ));
    }
    check_row_vector(s, 2, "fuse weights")?;
    let total = xt.cols() + xi.cols();
    if total % 2 != 0 {
        return Err(Error::shape(
            "fuse",
            "even total feature width",
            format!("{} + {}", xt.cols(), xi.cols()),
        ));
    }
    let concatenated = xt.concat_cols(xi)?;
    let folded = concatenated.reshape(2, total / 2)?;
    s.matmul(&folded)
}

/// Full squeeze → excite → fuse pass for one sample.
pub fn sefusion_forward<S: Scalar>(
    xt: &Matrix<S>,
    xi: &Matrix<S>,
    params: &ParamSet<S>,
    fp: &FusionParams,
) -> Result<FusionTrace<S>> {
    let z = squeeze(xt, xi, params, fp)?;
    let s = excite(&z, params, fp)?;
    let fused = fuse(xt, xi, &s)?;
    Ok(FusionTrace { z, s, fused })
}

/// Fusion block recorded on a tape; inputs may be batched (one sample per
/// row). Gradients flow to every fusion parameter.
pub struct FusionVars {
    pub z: VarId,
    pub s: VarId,
    pub fused: VarId,
}

pub fn sefusion_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    params: &ParamSet<S>,
    fp: &FusionParams,
    xt: VarId,
    xi: VarId,
) -> Result<FusionVars> {
    let w_t = tape.param(params, fp.text_squeeze);
    let w_i = tape.param(params, fp.image_squeeze);
    let b_t = fp.text_squeeze_bias.map(|b| tape.param(params, b));
    let b_i = fp.image_squeeze_bias.map(|b| tape.param(params, b));
    let zt = tape.affine(xt, w_t, b_t)?;
    let zi = tape.affine(xi, w_i, b_i)?;
    let z = tape.concat_cols(zt, zi)?;

    let w_r = tape.param(params, fp.gate_reduce);
    let b_r = fp.gate_reduce_bias.map(|b| tape.param(params, b));
    let hidden = tape.affine(z, w_r, b_r)?;
    let hidden = tape.relu(hidden);
    let w_e = tape.param(params, fp.gate_expand);
    let b_e = fp.gate_expand_bias.map(|b| tape.param(params, b));
    let gate = tape.affine(hidden, w_e, b_e)?;
    let s = tape.sigmoid(gate);

    let x = tape.concat_cols(xt, xi)?;
    let fused = tape.rowwise_weighted_sum(s, x, 2)?;
    Ok(FusionVars { z, s, fused })
}

/// Configuration for the generalized fusion over `dims.len()` modalities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiFusionConfig {
    pub dims: Vec<usize>,
    pub biases: bool,
}

impl MultiFusionConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.dims.len();
        if m == 0 {
            return Err(Error::usage("multi fusion needs at least one modality"));
        }
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::usage("fusion dimensions must be positive"));
        }
        let total: usize = self.dims.iter().sum();
        if total % m != 0 {
            return Err(Error::shape(
                "multi fusion config",
                format!("total feature width divisible by {m}"),
                format!("{total}"),
            ));
        }
        Ok(())
    }

    pub fn modalities(&self) -> usize {
        self.dims.len()
    }

    /// Gate bottleneck width: ⌈m/2⌉.
    pub fn bottleneck(&self) -> usize {
        self.dims.len().div_ceil(2)
    }

    pub fn fused_width(&self) -> usize {
        self.dims.iter().sum::<usize>() / self.dims.len()
    }
}

/// Parameter handles for the m-modality fusion block.
#[derive(Clone, Debug)]
pub struct MultiFusionParams {
    pub squeeze: Vec<ParamId>,
    pub squeeze_bias: Vec<Option<ParamId>>,
    pub gate_reduce: ParamId, // m × ⌈m/2⌉
    pub gate_expand: ParamId, // ⌈m/2⌉ × m
    pub gate_reduce_bias: Option<ParamId>,
    pub gate_expand_bias: Option<ParamId>,
    pub config: MultiFusionConfig,
}

impl MultiFusionParams {
    pub fn init<S: Scalar>(
        params: &mut ParamSet<S>,
        config: MultiFusionConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let m = config.modalities();
        let bottleneck = config.bottleneck();
        let mut squeeze = Vec::with_capacity(m);
        let mut squeeze_bias = Vec::with_capacity(m);
        for (k, &dim) in config.dims.iter().enumerate() {
            squeeze.push(params.add_xavier(format!("fusion.squeeze_{k}"), dim, 1, rng));
            squeeze_bias.push(
                config
                    .biases
                    .then(|| params.add_zeros(format!("fusion.squeeze_bias_{k}"), 1, 1)),
            );
        }
        let gate_reduce = params.add_xavier("fusion.gate_reduce", m, bottleneck, rng);
        let gate_expand = params.add_xavier("fusion.gate_expand", bottleneck, m, rng);
        let gate_reduce_bias = config
            .biases
            .then(|| params.add_zeros("fusion.gate_reduce_bias", 1, bottleneck));
        let gate_expand_bias = config
            .biases
            .then(|| params.add_zeros("fusion.gate_expand_bias", 1, m));
        Ok(MultiFusionParams {
            squeeze,
            squeeze_bias,
            gate_reduce,
            gate_expand,
            gate_reduce_bias,
            gate_expand_bias,
            config,
        })
    }
}

/// Generalized forward pass over any number of modalities: squeeze each to a
/// scalar, gate through a ⌈m/2⌉ bottleneck, and weight the m-row reshape of
/// the concatenation.
pub fn sefusion_forward_multi<S: Scalar>(
    features: &[Matrix<S>],
    params: &ParamSet<S>,
    mp: &MultiFusionParams,
) -> Result<FusionTrace<S>> {
    let m = mp.config.modalities();
    if features.len() != m {
        return Err(Error::usage(format!(
            "expected {m} modality features, got {}",
            features.len()
        )));
    }
    let mut z = Matrix::zeros(1, 0);
    for (k, feature) in features.iter().enumerate() {
        check_row_vector(feature, mp.config.dims[k], "multi squeeze input")?;
        let zk = crate::numerics::affine(
            feature,
            params.value(mp.squeeze[k]),
            mp.squeeze_bias[k].map(|b| params.value(b)),
        )?;
        z = z.concat_cols(&zk)?;
    }

    let hidden = crate::numerics::affine(
        &z,
        params.value(mp.gate_reduce),
        mp.gate_reduce_bias.map(|b| params.value(b)),
    )?
    .relu();
    let s = crate::numerics::affine(
        &hidden,
        params.value(mp.gate_expand),
        mp.gate_expand_bias.map(|b| params.value(b)),
    )?
    .sigmoid();

    let mut concatenated = Matrix::zeros(1, 0);
    for feature in features {
        concatenated = concatenated.concat_cols(feature)?;
    }
    let folded = concatenated.reshape(m, mp.config.fused_width())?;
    let fused = s.matmul(&folded)?;
    Ok(FusionTrace { z, s, fused })
}
