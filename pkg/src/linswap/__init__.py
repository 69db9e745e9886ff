"""No-linear-swap-regret learning and linear-deviation equilibrium audits for extensive-form games."""

__version__ = "0.1.0"
