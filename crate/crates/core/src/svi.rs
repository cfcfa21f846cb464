// placeholder
pub struct ParticleStore;
pub struct ElboReference;
