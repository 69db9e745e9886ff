"""Pinned joint distributions, swaps and maps for the two worked examples.

The signaling game carries an extensive-form correlated equilibrium that a
linear swap improves on.  The counterexample game carries a linear-deviation
correlated equilibrium that a non-linear swap improves on.
"""

from __future__ import annotations

import numpy as np

# (player 1 plan, player 2 plan) -> probability
SIGNALING_EFCE = {
    ("X_G X_B", "l_X r_Y"): 0.25,
    ("X_G Y_B", "l_X r_Y"): 0.25,
    ("Y_G X_B", "r_X l_Y"): 0.25,
    ("Y_G Y_B", "r_X l_Y"): 0.25,
}
SIGNALING_SWAP = {
    "X_G X_B": "X_G X_B",
    "X_G Y_B": "X_G X_B",
    "Y_G X_B": "Y_G Y_B",
    "Y_G Y_B": "Y_G Y_B",
}
# Player 1's swap as a map on the four action sequences (X_G, Y_G, X_B, Y_B).
SIGNALING_SWAP_MATRIX = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
])

COUNTEREXAMPLE_LCE = {
    ("A1 B1", "Ql Wl"): 0.2,
    ("A1 B2", "Ql Wr"): 0.2,
    ("A2 B1", "Ql Wl"): 0.2,
    ("A2 B2", "Qr Wl"): 0.2,
    ("A2 B2", "Qr Wr"): 0.2,
}
COUNTEREXAMPLE_SWAP = {
    "A1 B1": "A1 B1",
    "A1 B2": "A1 B1",
    "A2 B1": "A1 B1",
    "A2 B2": "A2 B2",
}


def pad_with_empty_sequence(M: np.ndarray) -> np.ndarray:
    """Embed a map on action sequences into one that also fixes the empty sequence."""
    M = np.asarray(M, dtype=float)
    out = np.zeros((M.shape[0] + 1, M.shape[1] + 1))
    out[0, 0] = 1.0
    out[1:, 1:] = M
    return out
