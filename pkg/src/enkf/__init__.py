# Ensemble Kalman filters and Liu-West shrinkage
