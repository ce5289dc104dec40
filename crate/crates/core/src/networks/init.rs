use crate::backend::{Param, Scalar};
use crate::latent::SeededRng;

/// Convolution and linear weights ~ N(0, 0.02), batch-norm scales ~ N(1, 0.02),
/// everything else zero.
pub fn init_params<'a, F: Scalar>(params: impl IntoIterator<Item = &'a mut Param<F>>, rng: &mut SeededRng) {
    for p in params {
        let (mean, std) = if p.name.ends_with(".weight") {
            (0.0, 0.02)
        } else if p.name.ends_with(".gamma") {
            (1.0, 0.02)
        } else {
            p.value.fill(F::zero());
            continue;
        };
        for v in p.value.data_mut() {
            *v = F::of(mean + std * rng.normal());
        }
    }
}
