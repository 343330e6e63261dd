"""
Pas d'adaptation par sous-bande μ_i(k) : fixe, appartenance à un ensemble,
ou pas variable par rétrécissement (seuillage doux) de l'erreur
"""

import logging
import math
from dataclasses import dataclass, field
from typing import ClassVar, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 3.5
DEFAULT_KAPPA = 1.0
DEFAULT_GAMMA = 9.0
# Plus grand flottant < 1 : les pas variables restent dans [0, 1)
MAX_STEP = float(np.nextafter(1.0, 0.0))


class StepControlError(ValueError):
    """Paramètres ou dimensions invalides pour un contrôleur de pas"""


def shrink_error(error, threshold):
    """Seuillage doux : sgn(e)·max(|e| − t, 0)"""
    return np.sign(error) * np.maximum(np.abs(error) - threshold, 0.0)


def update_power(previous, theta: float, shrunk):
    """σ²(k) = θ·σ²(k−1) + (1−θ)·ε²(k)"""
    return theta * previous + (1.0 - theta) * np.square(shrunk)


def vss_step(error_power, noise_power):
    """μ = σ²_ε / (σ²_ε + σ²_η,D), borné sous 1 quand l'arrondi atteindrait 1"""
    return np.minimum(error_power / (error_power + noise_power), MAX_STEP)


def sm_step(error, bound: float):
    """μ = 1 − 𝒢/|e| si |e| > 𝒢, 0 sinon"""
    magnitude = np.abs(np.asarray(error, dtype=float))
    ratio = np.divide(bound, magnitude, out=np.ones_like(magnitude), where=magnitude > bound)
    steps = np.minimum(1.0 - ratio, MAX_STEP)
    return steps if steps.ndim else float(steps)


def _check_noise_variance(noise_variance: float):
    if not (math.isfinite(noise_variance) and noise_variance > 0):
        raise StepControlError(f"La variance du bruit doit être connue et > 0 (reçu {noise_variance})")


@dataclass
class FixedStep:
    mu: float
    num_subbands: Optional[int] = None

    kind: ClassVar[str] = 'fixed'

    def __post_init__(self):
        if not 0.0 < self.mu < 2.0:
            raise StepControlError(f"Pas fixe hors de ]0, 2[ : {self.mu}")

    def steps(self, errors: np.ndarray) -> np.ndarray:
        return np.full(errors.shape, self.mu)

    def reset(self):
        pass


@dataclass
class SetMembershipStep:
    noise_variance: float
    num_subbands: int
    gamma: float = DEFAULT_GAMMA

    kind: ClassVar[str] = 'set_membership'

    def __post_init__(self):
        _check_noise_variance(self.noise_variance)
        if self.gamma <= 0:
            raise StepControlError(f"gamma doit être > 0 (reçu {self.gamma})")

    @property
    def bound(self) -> float:
        return math.sqrt(self.gamma * self.noise_variance / self.num_subbands)

    def steps(self, errors: np.ndarray) -> np.ndarray:
        return sm_step(errors, self.bound)

    def reset(self):
        pass


@dataclass
class ShrinkageVssStep:
    """
    Pas variable : l'erreur a priori sans bruit est récupérée par seuillage doux
    de e_i,D(k), sa puissance est lissée (facteur d'oubli θ = 1 − N/(κM)), puis
    μ_i(k) = σ²_ε / (σ²_ε + σ²_η/N).
    """

    noise_variance: float
    num_subbands: int
    filter_length: int
    lam: float = DEFAULT_LAMBDA
    kappa: float = DEFAULT_KAPPA
    power: np.ndarray = field(init=False, repr=False)

    kind: ClassVar[str] = 'shrinkage_vss'

    def __post_init__(self):
        _check_noise_variance(self.noise_variance)
        if not self.lam > 0:
            raise StepControlError(f"lambda doit être > 0 (reçu {self.lam})")
        if not 1.0 <= self.kappa <= 6.0:
            raise StepControlError(f"kappa doit être dans [1, 6] (reçu {self.kappa})")
        if not 0.0 < self.theta < 1.0:
            raise StepControlError(f"Facteur d'oubli hors de ]0, 1[ : {self.theta} (N={self.num_subbands}, M={self.filter_length})")
        if not 3.0 <= self.lam <= 4.0:
            logger.debug(f"lambda={self.lam} hors de la plage recommandée [3, 4]")
        self.reset()

    @property
    def theta(self) -> float:
        return 1.0 - self.num_subbands / (self.kappa * self.filter_length)

    @property
    def subband_noise_variance(self) -> float:
        return self.noise_variance / self.num_subbands

    @property
    def threshold(self) -> float:
        return math.sqrt(self.lam * self.subband_noise_variance)

    def steps(self, errors: np.ndarray) -> np.ndarray:
        shrunk = shrink_error(errors, self.threshold)
        self.power = update_power(self.power, self.theta, shrunk)
        return vss_step(self.power, self.subband_noise_variance)

    def reset(self):
        self.power = np.zeros(self.num_subbands)


StepController = Union[FixedStep, SetMembershipStep, ShrinkageVssStep]

STEP_CONTROLLERS = (FixedStep.kind, SetMembershipStep.kind, ShrinkageVssStep.kind)


def build_step_controller(kind: str, noise_variance: float, num_subbands: int, filter_length: int,
                          mu: float = 1.0, gamma: float = DEFAULT_GAMMA,
                          lam: float = DEFAULT_LAMBDA, kappa: float = DEFAULT_KAPPA) -> StepController:
    """Instancie un contrôleur pour un essai (σ²_η connu de l'essai)"""
    if kind == FixedStep.kind:
        return FixedStep(mu=mu, num_subbands=num_subbands)
    if kind == SetMembershipStep.kind:
        return SetMembershipStep(noise_variance=noise_variance, num_subbands=num_subbands, gamma=gamma)
    if kind == ShrinkageVssStep.kind:
        return ShrinkageVssStep(noise_variance=noise_variance, num_subbands=num_subbands,
                                filter_length=filter_length, lam=lam, kappa=kappa)
    raise StepControlError(f"Contrôleur de pas inconnu: {kind}")


def controller_steps(controller: StepController, errors) -> np.ndarray:
    """Pas μ_i(k) pour les N erreurs de sous-bande ; l'état du contrôleur avance d'un cran"""
    errors = np.asarray(errors, dtype=float).ravel()
    if controller.num_subbands is not None and errors.size != controller.num_subbands:
        raise StepControlError(f"{controller.num_subbands} erreurs attendues, {errors.size} reçues")
    return controller.steps(errors)
