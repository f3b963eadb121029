"""Log-to-asset geometry and evaluation toolkit.

Turns driving-log sessions (calibrated cameras, timed cuboid tracks) into
per-object sparse view sets, hands them to a pluggable multi-view generator
and lifter, renders the resulting Gaussian assets on the CPU, and scores
them with the benchmark metric suite.
"""

__version__ = "0.1.0"
