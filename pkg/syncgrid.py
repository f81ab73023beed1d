#!/usr/bin/env python3
"""
Entry point for the Synchronized Predator-Prey benchmark.

Edit config.yaml and run:
    python syncgrid.py run config.yaml
    python syncgrid.py verify --preset tiny
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
