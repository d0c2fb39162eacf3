"""Grid/HPC co-scheduling simulator: greedy compute placement and a spot HPC market."""

__version__ = "0.1.0"
