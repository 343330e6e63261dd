"""
Cœur du filtre adaptatif multibande : erreurs de sous-bande et mise à jour proportionnée
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .filterbank import AnalysisBank, AnalysisMemory, SubbandFrame, analyze_step, design_bank
from .proportionate import GainRule, IpnlmsGain, compute_gains
from .step_control import FixedStep, StepController, controller_steps

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.001


class DivergenceError(ArithmeticError):
    """Poids non finis après une mise à jour"""

    def __init__(self, iteration: int, message: Optional[str] = None):
        super().__init__(message or f"Divergence détectée à l'itération {iteration}")
        self.iteration = iteration


@dataclass
class SafConfig:
    """
    Paramètres du filtre. δ = 0 est accepté pour les vérifications analytiques
    (les régresseurs nuls ne produisent alors aucune correction).
    """

    filter_length: int
    num_subbands: int
    delta: float = DEFAULT_DELTA
    gain_rule: GainRule = field(default_factory=IpnlmsGain)
    step_controller: StepController = field(default_factory=lambda: FixedStep(mu=1.0))
    prototype_length: Optional[int] = None
    attenuation_db: float = 60.0

    def __post_init__(self):
        if self.filter_length <= 0:
            raise ValueError(f"Longueur de filtre invalide: {self.filter_length}")
        if self.num_subbands < 1:
            raise ValueError(f"Nombre de sous-bandes invalide: {self.num_subbands}")
        if not self.delta >= 0:
            raise ValueError(f"Régularisation invalide: {self.delta}")


@dataclass
class SafState:
    weights: np.ndarray
    iteration: int
    memory: AnalysisMemory
    last_errors: np.ndarray
    last_outputs: np.ndarray
    last_steps: np.ndarray


@dataclass
class BlockTelemetry:
    iteration: int
    errors: np.ndarray
    steps: np.ndarray
    weights: np.ndarray
    gains: np.ndarray
    frame: SubbandFrame
    fullband_errors: Optional[np.ndarray] = None


def subband_errors(state: SafState, frame: SubbandFrame) -> np.ndarray:
    """e_i,D(k) = d_i,D(k) − u_i^T(k) w(k) ; y_i,D(k) conservé dans l'état"""
    if frame.regressors.shape != (state.last_errors.size, state.weights.size):
        raise ValueError(f"Régresseurs {frame.regressors.shape} incompatibles avec "
                         f"N={state.last_errors.size}, M={state.weights.size}")
    state.last_outputs = frame.regressors @ state.weights
    state.last_errors = frame.desired - state.last_outputs
    return state.last_errors


def update_weights(state: SafState, frame: SubbandFrame, gains: np.ndarray, steps: np.ndarray,
                   delta: float) -> np.ndarray:
    """
    w(k+1) = w(k) + Σ_i μ_i(k) G(k) u_i(k) e_i,D(k) / (u_i^T(k) G(k) u_i(k) + δ)

    Les N corrections sont sommées avant application.

    Raises:
        DivergenceError: un poids n'est plus fini
    """
    regressors = frame.regressors
    if gains.shape != (regressors.shape[1],) or steps.shape != (regressors.shape[0],):
        raise ValueError(f"Dimensions incompatibles: gains {gains.shape}, pas {steps.shape}")

    weighted = gains * regressors  # G u_i en lignes
    energies = np.einsum('ij,ij->i', regressors, weighted) + delta
    numerators = steps * state.last_errors
    coefficients = np.divide(numerators, energies, out=np.zeros_like(numerators), where=energies > 0)
    correction = np.sum(coefficients[:, None] * weighted, axis=0)

    updated = state.weights + correction
    if not np.all(np.isfinite(updated)):
        raise DivergenceError(state.iteration)
    state.weights = updated
    state.last_steps = steps
    return updated


class SafEngine:
    """
    Filtre adaptatif en sous-bandes de type PNSAF.

    Une itération k consomme N échantillons pleine bande :
    analyse → erreurs → gains depuis w(k) → pas → mise à jour.
    """

    def __init__(self, config: SafConfig, bank: Optional[AnalysisBank] = None, track_fullband: bool = False):
        self.config = config
        self.bank = bank or design_bank(config.num_subbands, config.prototype_length, config.attenuation_db)
        if self.bank.num_subbands != config.num_subbands:
            raise ValueError(f"Banc à {self.bank.num_subbands} sous-bandes pour N={config.num_subbands}")
        self.track_fullband = track_fullband
        self.state = SafState(
            weights=np.zeros(config.filter_length),
            iteration=0,
            memory=AnalysisMemory(config.num_subbands, self.bank.length, config.filter_length),
            last_errors=np.zeros(config.num_subbands),
            last_outputs=np.zeros(config.num_subbands),
            last_steps=np.zeros(config.num_subbands),
        )
        self._fullband_history = np.zeros(config.filter_length - 1)

    @property
    def weights(self) -> np.ndarray:
        view = self.state.weights.view()
        view.flags.writeable = False
        return view

    @property
    def iteration(self) -> int:
        return self.state.iteration

    def reset(self) -> SafState:
        """w(0) = 0, k = 0, mémoires et état du contrôleur remis à zéro"""
        num_subbands = self.config.num_subbands
        self.state.weights = np.zeros(self.config.filter_length)
        self.state.iteration = 0
        self.state.memory.reset()
        self.state.last_errors = np.zeros(num_subbands)
        self.state.last_outputs = np.zeros(num_subbands)
        self.state.last_steps = np.zeros(num_subbands)
        self.config.step_controller.reset()
        self._fullband_history = np.zeros(self.config.filter_length - 1)
        return self.state

    def _fullband_errors(self, input_block: np.ndarray, desired_block: np.ndarray) -> np.ndarray:
        """e(n) = d(n) − u^T(n) w(k) sur les N échantillons du bloc"""
        extended = np.concatenate([self._fullband_history, input_block])
        outputs = sliding_window_view(extended, self.config.filter_length) @ self.state.weights[::-1]
        self._fullband_history = extended[extended.size - (self.config.filter_length - 1):]
        return desired_block - outputs

    def process_block(self, input_block, desired_block) -> BlockTelemetry:
        input_block = np.asarray(input_block, dtype=float)
        desired_block = np.asarray(desired_block, dtype=float)
        state = self.state

        frame = analyze_step(self.bank, input_block, desired_block, state.memory)
        fullband = self._fullband_errors(input_block, desired_block) if self.track_fullband else None

        errors = subband_errors(state, frame)
        gains = compute_gains(self.config.gain_rule, state.weights)
        steps = controller_steps(self.config.step_controller, errors)
        update_weights(state, frame, gains, steps, self.config.delta)
        state.iteration += 1

        return BlockTelemetry(iteration=state.iteration, errors=errors.copy(), steps=np.array(steps, dtype=float),
                              weights=self.weights, gains=gains, frame=frame, fullband_errors=fullband)
