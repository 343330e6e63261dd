"""
Matrice proportionnée G(k) = diag{g_1(k), ..., g_M(k)}
"""

import math
from dataclasses import dataclass
from typing import ClassVar, Union

import numpy as np


@dataclass(frozen=True)
class IdentityGain:
    """G(k) = I : le NSAF"""

    name: ClassVar[str] = 'identity'

    def compute(self, weights: np.ndarray) -> np.ndarray:
        return np.ones(weights.shape[0])


@dataclass(frozen=True)
class IpnlmsGain:
    """g_m = (1−α)/(2M) + (1+α)|w_m| / (2‖w‖₁ + ξ)"""

    alpha: float = 0.0
    xi: float = 0.001

    name: ClassVar[str] = 'ipnlms'

    def __post_init__(self):
        if not -1.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha doit être dans [-1, 1] (reçu {self.alpha})")
        if not (math.isfinite(self.xi) and self.xi > 0):
            raise ValueError(f"xi doit être strictement positif (reçu {self.xi})")

    def compute(self, weights: np.ndarray) -> np.ndarray:
        magnitude = np.abs(weights)
        return (1.0 - self.alpha) / (2 * weights.shape[0]) \
            + (1.0 + self.alpha) * magnitude / (2.0 * magnitude.sum() + self.xi)


GainRule = Union[IdentityGain, IpnlmsGain]

GAIN_RULES = {
    IdentityGain.name: IdentityGain,
    IpnlmsGain.name: IpnlmsGain,
}


def build_gain_rule(name: str, **params) -> GainRule:
    """Construit une règle à partir de son nom de configuration"""
    if name not in GAIN_RULES:
        raise ValueError(f"Règle de gain inconnue: {name}")
    if name == IdentityGain.name:
        return IdentityGain()
    return IpnlmsGain(**params)


def compute_gains(rule: GainRule, weights) -> np.ndarray:
    """Diagonale de G(k) calculée à partir de w(k)"""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("Vecteur de poids vide")
    return rule.compute(weights)


def gain_sum(gains) -> float:
    return float(np.sum(gains))
