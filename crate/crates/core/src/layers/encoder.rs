use crate::error::Result;
use crate::neuron::{steps_for, SpikeRaster};
use crate::pixels::PixelGrid;
use crate::rng::SimRng;

/// Independent Poisson train per pixel at `pixel * max_rate` events/ms.
///
/// Raster neurons follow the image's row-major pixel order.
pub fn poisson_encode(image: &PixelGrid, max_rate: f32, duration: f32, dt: f32, rng: &mut SimRng) -> Result<SpikeRaster> {
    image.validate()?;
    let n_steps = steps_for(duration, dt)?;
    let mut raster = SpikeRaster::new(image.pixels.len(), n_steps, dt);
    for (i, &v) in image.pixels.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        let p = -(-(v * max_rate) * dt).exp_m1();
        for t in 0..n_steps {
            if rng.uniform() < p {
                raster.set(i, t, true);
            }
        }
    }
    Ok(raster)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_image_is_silent() {
        let mut rng = SimRng::seed_from_u64(1);
        let r = poisson_encode(&PixelGrid::zeros(28, 28), 0.25, 50.0, 1.0, &mut rng).unwrap();
        assert_eq!(r.total(), 0);
        assert_eq!((r.n_neurons(), r.n_steps()), (784, 50));
    }

    #[test]
    fn rejects_out_of_range() {
        let mut rng = SimRng::seed_from_u64(1);
        let img = PixelGrid::new(1, 2, vec![0.5, -0.1]);
        assert!(poisson_encode(&img, 0.25, 50.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_raster() {
        let img = PixelGrid::new(4, 4, (0..16).map(|i| i as f32 / 15.0).collect());
        let a = poisson_encode(&img, 0.25, 50.0, 1.0, &mut SimRng::seed_from_u64(9)).unwrap();
        let b = poisson_encode(&img, 0.25, 50.0, 1.0, &mut SimRng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
