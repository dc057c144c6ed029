"""Evolutionary actuator/policy co-design on a planar two-link chin-up task.

Gear-ratio-style scaling factors trade torque for joint speed; a CMA-ES
outer loop searches that design space while an inner PPO loop adapts a
design-conditioned policy.  Submodules stay import-light; this package
root deliberately avoids importing numpy so the CLI can pin thread
environment variables first.
"""

__version__ = "0.1.0"
