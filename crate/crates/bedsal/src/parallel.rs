//! Gradient chunks evaluated on a rayon pool.

use bedsal_core::model::Network;
use bedsal_core::train::{chunk_gradient, GradientEngine, SampleSource};
use rayon::prelude::*;

/// Runs chunks concurrently; results come back in chunk order, so training
/// is bit-identical to the serial engine for any thread count.
pub struct RayonEngine<'a> {
    pool: &'a rayon::ThreadPool,
}

impl<'a> RayonEngine<'a> {
    pub fn new(pool: &'a rayon::ThreadPool) -> Self {
        RayonEngine { pool }
    }
}

impl GradientEngine for RayonEngine<'_> {
    fn chunk_gradients<S: SampleSource + ?Sized>(
        &self,
        net: &Network,
        source: &S,
        chunks: &[&[(usize, usize)]],
    ) -> bedsal_core::Result<Vec<(Network, f64)>> {
        self.pool
            .install(|| chunks.par_iter().map(|c| chunk_gradient(net, source, c)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bedsal_core::lowfeat::FeatureStack;
    use bedsal_core::model::Architecture;
    use bedsal_core::train::{batch_gradient, SerialEngine};

    struct Noise;

    impl SampleSource for Noise {
        fn images(&self) -> usize {
            3
        }

        fn superpixels(&self, _: usize) -> usize {
            70
        }

        fn stack(&self, image: usize, p: usize) -> bedsal_core::Result<FeatureStack> {
            let data = (0..4 * 400).map(|i| ((i * 31 + p * 7 + image * 13) % 17) as f64 / 17.0).collect();
            FeatureStack::from_data(4, data)
        }

        fn target(&self, _: usize, p: usize) -> bedsal_core::Result<f64> {
            Ok((p % 2) as f64)
        }
    }

    #[test]
    fn matches_serial_bit_for_bit() {
        let net = Network::new(
            Architecture {
                in_channels: 4,
                conv_widths: [4, 4, 2],
                hidden: 8,
            },
            1,
        )
        .unwrap();
        let picks: Vec<(usize, usize)> = (0..180).map(|i| (i % 3, (i * 7) % 70)).collect();
        let serial = batch_gradient(&net, &Noise, &picks, &SerialEngine).unwrap();
        for threads in [1, 3] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let par = batch_gradient(&net, &Noise, &picks, &RayonEngine::new(&pool)).unwrap();
            assert_eq!(par, serial);
        }
    }
}
