//! Statistical checks and evaluation metrics.

mod curve;
mod fit;
mod histogram;
mod ks;
mod moments;
mod special;
mod wasserstein;

pub use curve::{fitting_error_curve, CurveRepeat, CurveRow, CurveSpec, FitCurve};
pub use fit::{fit_histogram, histogram_mse, shifted_gamma_pdf, FitFamily, FitParams, FitResult};
pub use histogram::Histogram;
pub use ks::{kolmogorov_q, ks_critical_value, ks_two_sample};
pub use moments::{mc_moments, Moments};
pub use special::ln_gamma;
pub use wasserstein::{sliced_wasserstein, sliced_wasserstein_2d, wasserstein_1d};
