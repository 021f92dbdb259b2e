# Model abstraction, Gaussian numerics and random streams
