use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::EmbedderPort;
use crate::error::{Error, Result};
use crate::types::Embedding;

/// Victim whose output is an exact linear image of a base embedder:
/// `embed(t) = base(t) · A`.
pub struct LinearVictim {
    base: Arc<dyn EmbedderPort>,
    map: DMatrix<f64>,
    normalize: bool,
}

impl LinearVictim {
    /// Draws `A` (`base.dim() x d_victim`) with i.i.d. `N(0, 1/d_victim)`
    /// entries from `seed`. Requires `d_victim <= base.dim()` so that `A`
    /// has full column rank.
    pub fn random(base: Arc<dyn EmbedderPort>, d_victim: usize, seed: u64) -> Result<Self> {
        let d_base = base.dim();
        if d_victim == 0 || d_victim > d_base {
            return Err(Error::Config(format!(
                "victim dimension {d_victim} must lie in [1, {d_base}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_victim as f64).sqrt();
        let map = DMatrix::from_fn(d_base, d_victim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        if map.rank(1e-9) < d_victim {
            return Err(Error::Config("sampled map is rank deficient".into()));
        }
        Ok(Self { base, map, normalize: false })
    }

    pub fn with_matrix(base: Arc<dyn EmbedderPort>, map: DMatrix<f64>) -> Result<Self> {
        if map.nrows() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: map.nrows() });
        }
        Ok(Self { base, map, normalize: false })
    }

    /// Unit-normalize outputs; the map is then no longer exactly linear.
    pub fn normalized(mut self, yes: bool) -> Self {
        self.normalize = yes;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.map
    }
}

impl EmbedderPort for LinearVictim {
    fn dim(&self) -> usize {
        self.map.ncols()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let base = self.base.embed_batch(texts)?;
        base.into_iter()
            .map(|e| {
                let row = DMatrix::from_row_slice(1, e.dim(), e.values());
                let out = row * &self.map;
                let v = Embedding::new(out.iter().copied().collect())?;
                Ok(match (self.normalize, v.normalized()) {
                    (true, Some(n)) => n,
                    _ => v,
                })
            })
            .collect()
    }
}
