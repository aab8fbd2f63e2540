"""Deep-Q iterative channel scheduling with packet-loss-aware LQR for networked control systems."""

__version__ = "0.1.0"
