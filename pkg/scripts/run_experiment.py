#!/usr/bin/env python3
"""Run an experiment command (simulate, filter, reference, benchmark)."""
import sys
from src.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
