//! Image-processing primitives shared by the detector, warping and
//! conditioning code. All functions are pure.

mod canny;
mod distance;
mod filter;
mod morphology;
mod palette;
mod resize;

pub use canny::{canny, CannyParams};
pub use distance::{distance_transform, edge_distance, EdgeDistance};
pub use filter::{gaussian_blur, gaussian_kernel, sobel_gradients, to_grayscale, GradientField};
pub use morphology::{connected_components, dilate, disc_mask, disc_offsets, erode, Component};
pub use palette::{quantize_palette, LabelAssignment, Palette, Quantization};
pub use resize::{resize_bilinear, resize_nearest_mask};

pub(crate) use resize::sample_bilinear;
