//! Per-device random substreams.
//!
//! ChaCha8 is counter based: a `(seed, stream)` pair addresses an independent
//! keystream, so a device's arrivals depend only on the run seed and its own
//! id. Adding or removing another device leaves them untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::DeviceId;

pub type SimRng = ChaCha8Rng;

pub fn device_stream(seed: u64, device: DeviceId) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(device.0));
    rng
}
