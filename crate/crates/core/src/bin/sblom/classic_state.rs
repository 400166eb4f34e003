//! On-disk state for the classic (symmetric) baseline deployment.

use std::fs;
use std::path::Path;

use rand::rngs::OsRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use sblom::classic::{derive_share, gen_master, ClassicShare, SymBivarPoly};
use sblom::kdc::state::write_private;
use sblom::modmath::{gen_prime_with, FieldParams, PrimeSearch};
use sblom::simplex::{PointRegistry, PointRule, PublicPoint};
use sblom::{Error, Result};

#[derive(Serialize, Deserialize)]
pub struct ClassicState {
    version: u32,
    params: FieldParams,
    master: SymBivarPoly,
    registry: PointRegistry,
    /// Registration `n` draws its point from stream `n` of this seed.
    seed: u64,
}

impl ClassicState {
    pub fn setup(bits: u64, degree: usize, seed: Option<u64>) -> Result<Self> {
        let seed = seed.unwrap_or_else(|| OsRng.gen());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = gen_prime_with(bits, true, &mut rng, PrimeSearch::default())?;
        let master = gen_master(degree, &params, &mut rng)?;
        Ok(ClassicState {
            version: 1,
            params,
            master,
            registry: PointRegistry::new(PointRule::Any),
            seed,
        })
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn degree(&self) -> usize {
        self.master.degree()
    }

    pub fn register(&mut self, user: &str) -> Result<PublicPoint> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.registry.len() as u64 + 1);
        self.registry.assign(user, &self.params, &mut rng)
    }

    pub fn share(&self, user: &str) -> Result<ClassicShare> {
        let pt = self
            .registry
            .get(user)
            .ok_or_else(|| Error::UnknownUser(user.to_string()))?;
        derive_share(&self.master, &pt.r, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let st: ClassicState = serde_json::from_str(&fs::read_to_string(path)?)?;
        if st.version != 1 {
            return Err(Error::Malformed(format!("state version {}", st.version)));
        }
        Ok(st)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)? + "\n";
        write_private(path, json.as_bytes())
    }
}
