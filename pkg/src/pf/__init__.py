# Particle filter over latent states
