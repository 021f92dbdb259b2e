# Experiment command line
