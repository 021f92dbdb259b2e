# Metropolis-Hastings kernels and reference samplers
