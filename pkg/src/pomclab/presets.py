"""Named parameter points, boxes and profile grids used by experiments."""
from __future__ import annotations

import numpy as np

from .hmm import ThetaHmm
from .odm import ThetaNbin, ThetaNm

HMM_STAR = ThetaHmm(m=1.0, a=0.8)
HMM_BOX = {"m": (0.5, 2.0), "a": (0.2, 1.4)}

NBIN_STAR = ThetaNbin(omega=1.0, a=0.3, b=0.1, r=4.0)
NBIN_BOX = {"omega": (0.5, 2.0), "a": (0.1, 0.4), "b": (0.05, 0.12), "r": (2.0, 4.5)}

NM2_STAR = ThetaNm(gamma=[0.3, 0.7], omega=[0.2, 1.0], A=np.zeros((2, 2)), b=[0.6, 0.2])
NM2_BOX = {
    "gamma_1": (0.1, 0.9),
    "omega_1": (0.1, 1.5), "omega_2": (0.1, 1.5),
    "A_11": (0.0, 0.0), "A_12": (0.0, 0.0), "A_21": (0.0, 0.0), "A_22": (0.0, 0.0),
    "b_1": (0.0, 0.9), "b_2": (0.0, 0.9),
}


def nbin_a_slice(theta: ThetaNbin = NBIN_STAR, num: int = 15) -> list:
    """``theta`` with ``a`` on ``linspace(0.1, 0.5, num)``."""
    return [ThetaNbin(theta.omega, a, theta.b, theta.r) for a in np.linspace(0.1, 0.5, num)]


def nm2_gamma_b_grid(theta: ThetaNm = NM2_STAR, num: int = 9) -> list:
    """``theta`` with ``(gamma_1, b_1)`` on a ``num x num`` product grid."""
    out = []
    for g1 in np.linspace(0.1, 0.5, num):
        for b1 in np.linspace(0.3, 0.9, num):
            out.append(ThetaNm([g1, 1.0 - g1], theta.omega, theta.A, [b1, theta.b[1]]))
    return out


PRESETS = {
    "hmm1-default": ("hmm1", HMM_STAR, HMM_BOX),
    "nbin-default": ("nbin", NBIN_STAR, NBIN_BOX),
    "nm2-default": ("nm(2)", NM2_STAR, NM2_BOX),
}
