"""Software link enhancer: RS(255,235) FEC framing for ATM cell streams over noisy links."""

__version__ = "0.1.0"
