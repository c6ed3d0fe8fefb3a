"""Event-triggered adaptive-horizon MPC meta-tuner - Source Package."""

__version__ = "0.3.0"
