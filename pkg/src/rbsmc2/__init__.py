# Rao-Blackwellised SMC2 for nonlinear observations
