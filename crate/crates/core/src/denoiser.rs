//! Conditional denoiser interface and classifier-free guidance.

use serde::{Deserialize, Serialize};

use crate::{Result, Tensor};

/// What a denoiser's output means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMode {
    /// Noise estimate, used with diffusion schedules.
    Eps,
    /// Flow velocity, used with rectified-flow schedules.
    Velocity,
}

/// Whether the engine may call `predict` from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Concurrent,
    Serialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub mode: PredictionMode,
    /// False for models without a separate null-image branch; guidance then
    /// reuses the image-only prediction for the fully unconditional term.
    pub null_image_branch: bool,
    pub concurrency: Concurrency,
}

/// Arguments of one model evaluation. `None` stands for the null condition.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserRequest<'a> {
    pub latent: &'a Tensor,
    pub t: usize,
    pub image_latent: Option<&'a Tensor>,
    pub prompt: Option<&'a str>,
    pub mode: PredictionMode,
}

impl DenoiserRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        if let Some(img) = self.image_latent {
            self.latent.ensure_same_shape(img, "denoiser request image latent")?;
        }
        Ok(())
    }
}

pub trait Denoiser: Sync {
    fn capabilities(&self) -> Capabilities;

    /// One deterministic prediction shaped like `req.latent`.
    fn predict(&self, req: &DenoiserRequest<'_>) -> Result<Tensor>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }

    fn predict(&self, req: &DenoiserRequest<'_>) -> Result<Tensor> {
        (**self).predict(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub image_scale: f64,
    pub text_scale: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            image_scale: 1.5,
            text_scale: 7.5,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.image_scale.is_finite() || !self.text_scale.is_finite() {
            return Err(crate::error::invalid!("guidance scales must be finite"));
        }
        Ok(())
    }
}

/// `e_uu + s_I (e_iu - e_uu) + s_T (e_ic - e_iu)`, evaluated per element in
/// `f64`.
pub fn cfg_combine(e_uu: &Tensor, e_iu: &Tensor, e_ic: &Tensor, g: &GuidanceConfig) -> Result<Tensor> {
    e_uu.ensure_same_shape(e_iu, "cfg_combine")?;
    e_uu.ensure_same_shape(e_ic, "cfg_combine")?;
    let (si, st) = (g.image_scale, g.text_scale);
    let data = e_uu
        .data()
        .iter()
        .zip(e_iu.data())
        .zip(e_ic.data())
        .map(|((&uu, &iu), &ic)| {
            let (uu, iu, ic) = (uu as f64, iu as f64, ic as f64);
            (uu + si * (iu - uu) + st * (ic - iu)) as f32
        })
        .collect();
    Tensor::new(e_uu.shape().to_vec(), data)
}

/// Result of one guided evaluation.
#[derive(Debug, Clone)]
pub struct GuidedPrediction {
    pub guided: Tensor,
    /// Full conditional prediction (image + instruction).
    pub cond: Tensor,
    /// Image-only prediction (instruction dropped).
    pub img_uncond: Tensor,
    /// Raw model calls issued for this evaluation.
    pub model_calls: u32,
}

/// Issues the guidance predictions for one latent: three calls, or two when
/// the denoiser has no null-image branch.
pub fn guided_predict<D: Denoiser + ?Sized>(
    denoiser: &D,
    z_t: &Tensor,
    t: usize,
    image_latent: &Tensor,
    prompt: &str,
    guidance: &GuidanceConfig,
) -> Result<GuidedPrediction> {
    let caps = denoiser.capabilities();
    let req = |image: Option<&'_ Tensor>, prompt: Option<&'_ str>| -> Result<Tensor> {
        let r = DenoiserRequest {
            latent: z_t,
            t,
            image_latent: image,
            prompt,
            mode: caps.mode,
        };
        r.validate()?;
        let out = denoiser.predict(&r)?;
        out.ensure_same_shape(z_t, "denoiser output")?;
        Ok(out)
    };
    let cond = req(Some(image_latent), Some(prompt))?;
    let img_uncond = req(Some(image_latent), None)?;
    let (uncond, calls) = if caps.null_image_branch {
        (Some(req(None, None)?), 3)
    } else {
        (None, 2)
    };
    let guided = cfg_combine(uncond.as_ref().unwrap_or(&img_uncond), &img_uncond, &cond, guidance)?;
    Ok(GuidedPrediction {
        guided,
        cond,
        img_uncond,
        model_calls: calls,
    })
}
