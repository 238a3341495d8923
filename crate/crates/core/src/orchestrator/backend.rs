use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::audit::AuditLog;
use crate::conditioning::ConditionBundle;
use crate::image::{BinaryMask, GrayImage, RasterImage};
use crate::vision::gaussian_blur;

/// Failures talking to an inpainting backend. Only `Transport` and
/// `Timeout` are retried.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend timed out after {attempts} attempt(s): {message}")]
    Timeout { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {message}")]
    Remote { status: u16, message: String },
    #[error("malformed backend payload: {0}")]
    MalformedPayload(String),
    #[error("backend image is {actual_w}x{actual_h}, request was {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error("oracle backend needs the instance target image")]
    MissingTarget,
    #[error("invalid inpaint request: {0}")]
    InvalidRequest(String),
}

/// One inpainting call: regenerate `bundle.mask` in `image`.
#[derive(Debug, Clone, Copy)]
pub struct InpaintRequest<'a> {
    pub image: &'a RasterImage,
    pub bundle: &'a ConditionBundle,
    pub seed: u64,
}

impl InpaintRequest<'_> {
    pub fn mask(&self) -> &BinaryMask {
        &self.bundle.mask
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.bundle.mask.dims() != self.image.dims() {
            return Err(BackendError::InvalidRequest(format!(
                "mask is {:?}, image is {:?}",
                self.bundle.mask.dims(),
                self.image.dims()
            )));
        }
        self.bundle
            .validate()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))
    }

    /// Checks that a returned image matches the requested dimensions.
    pub fn check_response(&self, image: &RasterImage) -> Result<(), BackendError> {
        let (ew, eh) = self.dims();
        let (aw, ah) = image.dims();
        if (ew, eh) != (aw, ah) {
            return Err(BackendError::DimensionMismatch {
                expected_w: ew,
                expected_h: eh,
                actual_w: aw,
                actual_h: ah,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintResponse {
    pub image: RasterImage,
    pub seed: u64,
    pub backend: String,
    pub latency_ms: u64,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    /// Runs one request. Implementations record transport attempts in `audit`.
    fn inpaint(&self, request: &InpaintRequest<'_>, audit: &mut AuditLog) -> Result<InpaintResponse, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    Oracle,
    BlurFill,
}

/// Deterministic, stateless test double.
#[derive(Debug, Clone)]
pub struct MockBackend {
    mode: MockMode,
    target: Option<RasterImage>,
    blur_sigma: f64,
}

impl MockBackend {
    /// Copies the target into the mask.
    pub fn oracle(target: RasterImage) -> Self {
        Self {
            mode: MockMode::Oracle,
            target: Some(target),
            blur_sigma: 2.0,
        }
    }

    /// Fills the mask from blurred surroundings.
    pub fn blur_fill(blur_sigma: f64) -> Self {
        Self {
            mode: MockMode::BlurFill,
            target: None,
            blur_sigma,
        }
    }

    /// Oracle mode without a target; every request fails.
    pub fn oracle_without_target() -> Self {
        Self {
            mode: MockMode::Oracle,
            target: None,
            blur_sigma: 2.0,
        }
    }

    pub fn mode(&self) -> MockMode {
        self.mode
    }
}

/// Fills masked pixels layer by layer with the mean of already-known
/// 8-neighbors, then smooths the fill with a Gaussian blur. Pixels outside
/// the mask are returned unchanged.
pub fn blur_fill(image: &RasterImage, mask: &BinaryMask, sigma: f64) -> Result<RasterImage, BackendError> {
    let (w, h) = image.dims();
    let mut vals: Vec<[f64; 3]> = image.pixels().map(|p| p.map(f64::from)).collect();
    let mut known: Vec<bool> = mask.data.iter().map(|&m| !m).collect();
    if !known.iter().any(|&k| k) {
        vals.iter_mut().for_each(|v| *v = [128.0; 3]);
        known.iter_mut().for_each(|k| *k = true);
    }
    loop {
        let mut updates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if known[i] {
                    continue;
                }
                let mut sum = [0.0; 3];
                let mut n = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if known[j] {
                            (0..3).for_each(|c| sum[c] += vals[j][c]);
                            n += 1.0;
                        }
                    }
                }
                if n > 0.0 {
                    updates.push((i, sum.map(|s| s / n)));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (i, v) in updates {
            vals[i] = v;
            known[i] = true;
        }
    }
    let mut channels = Vec::with_capacity(3);
    for c in 0..3 {
        let g = GrayImage::new(w, h, vals.iter().map(|v| v[c]).collect()).expect("sized");
        let g = if sigma > 0.0 {
            gaussian_blur(&g, sigma).map_err(|e| BackendError::InvalidRequest(e.to_string()))?
        } else {
            g
        };
        channels.push(g);
    }
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let px = [0, 1, 2].map(|c| channels[c].get(x, y).round().clamp(0.0, 255.0) as u8);
                out.set(x, y, px);
            }
        }
    }
    Ok(out)
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        match self.mode {
            MockMode::Oracle => "mock:oracle".into(),
            MockMode::BlurFill => "mock:blur".into(),
        }
    }

    fn inpaint(&self, request: &InpaintRequest<'_>, audit: &mut AuditLog) -> Result<InpaintResponse, BackendError> {
        let start = Instant::now();
        request.validate()?;
        let mask = request.mask();
        let image = match self.mode {
            MockMode::Oracle => {
                let target = self.target.as_ref().ok_or(BackendError::MissingTarget)?;
                request.check_response(target)?;
                let mut out = request.image.clone();
                for (i, &m) in mask.data.iter().enumerate() {
                    if m {
                        let (x, y) = (i % out.width(), i / out.width());
                        out.set(x, y, target.get(x, y));
                    }
                }
                out
            }
            MockMode::BlurFill => blur_fill(request.image, mask, self.blur_sigma)?,
        };
        audit.record("backend.call", format!("{} seed {}", self.id(), request.seed));
        Ok(InpaintResponse {
            image,
            seed: request.seed,
            backend: self.id(),
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }
}

/// Caps the number of concurrent in-flight requests to an inner backend.
pub struct Throttled<B> {
    inner: B,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<B: Backend> Throttled<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Self {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

impl<B: Backend> Backend for Throttled<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn inpaint(&self, request: &InpaintRequest<'_>, audit: &mut AuditLog) -> Result<InpaintResponse, BackendError> {
        {
            let mut n = self.in_flight.lock().expect("throttle lock");
            while *n >= self.limit {
                n = self.freed.wait(n).expect("throttle lock");
            }
            *n += 1;
        }
        let result = self.inner.inpaint(request, audit);
        *self.in_flight.lock().expect("throttle lock") -= 1;
        self.freed.notify_one();
        result
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> String {
        (**self).id()
    }

    fn inpaint(&self, request: &InpaintRequest<'_>, audit: &mut AuditLog) -> Result<InpaintResponse, BackendError> {
        (**self).inpaint(request, audit)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn inpaint(&self, request: &InpaintRequest<'_>, audit: &mut AuditLog) -> Result<InpaintResponse, BackendError> {
        (**self).inpaint(request, audit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_fill_constant_image_stays_constant() {
        let img = RasterImage::filled(20, 20, [90, 120, 30]);
        let mask = BinaryMask::from_fn(20, 20, |x, y| (5..15).contains(&x) && (3..12).contains(&y));
        assert_eq!(blur_fill(&img, &mask, 2.0).unwrap(), img);
    }

    #[test]
    fn blur_fill_keeps_outside_and_is_deterministic() {
        let mut img = RasterImage::filled(16, 16, [0, 0, 0]);
        for x in 8..16 {
            for y in 0..16 {
                img.set(x, y, [200, 200, 200]);
            }
        }
        let mask = BinaryMask::from_fn(16, 16, |x, y| (6..10).contains(&x) && (6..10).contains(&y));
        let a = blur_fill(&img, &mask, 1.5).unwrap();
        assert_eq!(a, blur_fill(&img, &mask, 1.5).unwrap());
        for y in 0..16 {
            for x in 0..16 {
                if !mask.get(x, y) {
                    assert_eq!(a.get(x, y), img.get(x, y));
                }
            }
        }
        let mid = a.get(7, 7)[0];
        assert!(mid > 0 && mid < 200);
    }
}
