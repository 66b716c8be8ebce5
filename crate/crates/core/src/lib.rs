//! Heatmap-based keypoint decoding.
//!
//! Two decoding families are implemented side by side: detection (argmax,
//! optionally with a quarter-pixel shift) and integral regression (softmax
//! followed by a spatial expectation). The softmax-expectation pulls decoded
//! coordinates toward the grid center; [`decoding::compensate`] removes that
//! pull in closed form.
//!
//! Supporting modules cover the training objectives and their analytic
//! gradients, a toy simulator of heatmap updates under gradient descent,
//! localization statistics and keypoint evaluation metrics.
//!
//! Coordinates are zero-based pixel indices: `x` indexes rows and `y` indexes
//! columns.

pub mod decoding;
pub mod error;
pub mod format;
pub mod gradients;
pub mod heatmap;
pub mod losses;
pub mod metrics;
pub mod theory;
pub mod toy_sim;

pub use decoding::{
    argmax_decode, argmax_decode_shifted, compensate, soft_argmax_decode, BiasModel,
};
pub use error::{Error, Result};
pub use gradients::{
    debiased_regression_gradient, detection_gradient, finite_difference_check,
    regression_gradient, FdReport, GradientField,
};
pub use heatmap::{
    activation_sum, fit_support, gaussian_heatmap, softmax_normalize, GaussianSpec, Heatmap,
    Joint2D, NormalizedHeatmap, SupportRegion,
};
pub use losses::{
    bcir_loss, debiased_regression_loss, detection_loss, regression_loss, shrinkage_regularizer,
    KernelSign, RegularizerConfig, Schedule,
};
