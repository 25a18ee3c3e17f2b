//! Versioned binary checkpoint of parameters, optimizer state and epoch.

use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::Result;
use crate::model::optim::OptimizerState;
use crate::model::ModelParams;

const MAGIC: &[u8; 8] = b"DYCFCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u64(self.epoch as u64);
        w.u32(self.params.hidden() as u32);
        w.u32(self.params.classes() as u32);
        w.f64s(self.params.values());
        let o = &self.optimizer;
        w.f64(o.lr_initial);
        w.f64(o.lr_min);
        w.u64(o.max_epochs as u64);
        w.f64(o.momentum);
        w.u64(o.epoch as u64);
        w.f64s(&o.velocity);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, MAGIC, VERSION, "checkpoint")?;
        let epoch = r.u64()? as usize;
        let hidden = r.u32()? as usize;
        let classes = r.u32()? as usize;
        let params = ModelParams::from_values(hidden, classes, r.f64s()?)?;
        let optimizer = OptimizerState {
            lr_initial: r.f64()?,
            lr_min: r.f64()?,
            max_epochs: r.u64()? as usize,
            momentum: r.f64()?,
            epoch: r.u64()? as usize,
            velocity: r.f64s()?,
        };
        r.finish()?;
        Ok(Self { epoch, params, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng;
    use crate::types::RunConfig;

    fn sample() -> Checkpoint {
        let params = ModelParams::init(6, 3, &mut rng::stream(1, &[]));
        let mut optimizer = OptimizerState::new(&RunConfig::default(), &params);
        optimizer.epoch = 17;
        optimizer.velocity.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64).sin() * 1e-3);
        Checkpoint { epoch: 17, params, optimizer }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        bytes[40] ^= 0x10;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checksum { .. })));
        assert!(matches!(Checkpoint::from_bytes(&[]), Err(Error::Format(_))));
    }
}
