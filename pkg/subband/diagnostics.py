"""
Mesures de performance et quantités d'analyse : NMSD, ERLE, erreurs sans bruit,
relation de conservation d'énergie et borne empirique du pas
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np
from scipy import signal

from .filterbank import AnalysisBank, SubbandFrame

logger = logging.getLogger(__name__)

NMSD_FLOOR_DB = -300.0
ERLE_CEILING_DB = 120.0
DEFAULT_ERLE_WINDOW = 1024
# Au-delà, M(k) est traitée comme singulière
SINGULAR_CONDITION = 1.0 / np.finfo(float).eps


def nmsd_db(w_o, w, floor_db: float = NMSD_FLOOR_DB) -> float:
    """10·log10(‖w_o − w‖² / ‖w_o‖²)"""
    w_o = np.asarray(w_o, dtype=float)
    w = np.asarray(w, dtype=float)
    if w_o.shape != w.shape:
        raise ValueError(f"Longueurs différentes: {w_o.shape} et {w.shape}")
    reference = float(np.dot(w_o, w_o))
    if reference == 0.0:
        raise ValueError("NMSD indéfinie pour un chemin de norme nulle")
    deviation = float(np.sum((w_o - w) ** 2))
    if deviation == 0.0:
        return floor_db
    return 10.0 * math.log10(deviation / reference)


def moving_power(x, window: int) -> np.ndarray:
    """Moyenne glissante de x² sur `window` échantillons, premier point en window−1"""
    x = np.asarray(x, dtype=float)
    if window < 1:
        raise ValueError(f"Fenêtre invalide: {window}")
    if window > x.size:
        raise ValueError(f"Fenêtre {window} plus longue que la séquence ({x.size})")
    return np.convolve(x ** 2, np.full(window, 1.0 / window), mode='valid')


def erle_db(desired, error, window: int = DEFAULT_ERLE_WINDOW) -> np.ndarray:
    """
    ERLE(n) = 10·log10(E[d²(n)] / E[e²(n)]), espérances estimées par moyenne glissante.

    Bornée à ±120 dB (erreur nulle ou signal désiré nul).
    """
    desired = np.asarray(desired, dtype=float)
    error = np.asarray(error, dtype=float)
    if desired.shape != error.shape:
        raise ValueError(f"Longueurs différentes: {desired.shape} et {error.shape}")
    desired_power = moving_power(desired, window)
    error_power = moving_power(error, window)
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio_db = 10.0 * np.log10(desired_power / error_power)
    ratio_db = np.where(error_power > 0, ratio_db, ERLE_CEILING_DB)
    return np.clip(ratio_db, -ERLE_CEILING_DB, ERLE_CEILING_DB)


@dataclass
class NoiseFreeErrors:
    a_priori: np.ndarray
    a_posteriori: np.ndarray
    decomposition_residual: Optional[float] = None


def noise_free_errors(w_o, w_k, w_k1, frame: SubbandFrame, subband_noise=None) -> NoiseFreeErrors:
    """
    ε_a(k) = Uᵀ(k)[w_o − w(k)] et ε_p(k) = Uᵀ(k)[w_o − w(k+1)].

    Si le bruit de sous-bande η_D(k) est fourni, vérifie e_D(k) = ε_a(k) + η_D(k)
    et renvoie l'écart maximal.
    """
    w_o = np.asarray(w_o, dtype=float)
    w_k = np.asarray(w_k, dtype=float)
    a_priori = frame.regressors @ (w_o - w_k)
    a_posteriori = frame.regressors @ (w_o - np.asarray(w_k1, dtype=float))

    residual = None
    if subband_noise is not None:
        errors = frame.desired - frame.regressors @ w_k
        residual = float(np.max(np.abs(errors - a_priori - np.asarray(subband_noise, dtype=float))))
    return NoiseFreeErrors(a_priori=a_priori, a_posteriori=a_posteriori, decomposition_residual=residual)


def subband_noise_components(bank: AnalysisBank, noise) -> np.ndarray:
    """η_i,D(k) : bruit filtré par H_i puis décimé au dernier échantillon de chaque bloc, forme (K, N)"""
    noise = np.asarray(noise, dtype=float)
    num_subbands = bank.num_subbands
    usable = (noise.size // num_subbands) * num_subbands
    filtered = np.stack([signal.lfilter(taps, [1.0], noise[:usable]) for taps in bank.filters])
    return filtered[:, num_subbands - 1::num_subbands].T


@dataclass
class EnergyCheckReport:
    """
    Bilan d'énergie d'une mise à jour.

    lhs/rhs sont évalués dans la norme pondérée par G⁻¹ avec Γ = M⁻¹, forme exacte
    pour tout gain diagonal positif ; les valeurs euclidiennes utilisent
    Γ = M⁻ᵀUᵀGGUM⁻¹, exacte lorsque G est proportionnelle à l'identité.
    """

    lhs: float
    rhs: float
    relative_residual: float
    condition_estimate: float
    euclidean_lhs: float = math.nan
    euclidean_rhs: float = math.nan
    euclidean_residual: float = math.nan
    gamma: Optional[np.ndarray] = None
    singular: bool = False


def _relative_gap(lhs: float, rhs: float) -> float:
    scale = max(abs(lhs), abs(rhs))
    return abs(lhs - rhs) / scale if scale > 0 else 0.0


def _coupling_matrix(frame: SubbandFrame, gains: np.ndarray):
    """M(k) = Uᵀ(k) G(k) U(k) et son conditionnement"""
    coupling = (frame.regressors * gains) @ frame.regressors.T
    try:
        condition = float(np.linalg.cond(coupling))
    except np.linalg.LinAlgError:
        condition = math.inf
    return coupling, condition


def gamma_matrix(frame: SubbandFrame, gains) -> Optional[np.ndarray]:
    """Γ(k) = M⁻ᵀ(k) Uᵀ(k) G²(k) U(k) M⁻¹(k), None si M(k) est singulière"""
    gains = np.asarray(gains, dtype=float)
    coupling, condition = _coupling_matrix(frame, gains)
    if not condition < SINGULAR_CONDITION:
        return None
    projected = np.linalg.solve(coupling, frame.regressors * gains)
    return projected @ projected.T


def energy_relation_check(w_o, w_k, w_k1, frame: SubbandFrame, gains) -> EnergyCheckReport:
    """
    Évalue les deux membres de la relation de conservation d'énergie pour le pas k → k+1.

    Une matrice M(k) singulière est signalée dans le rapport (singular=True).
    """
    w_o = np.asarray(w_o, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if np.any(gains <= 0):
        raise ValueError("Les gains doivent être strictement positifs")
    deviation_k = w_o - np.asarray(w_k, dtype=float)
    deviation_k1 = w_o - np.asarray(w_k1, dtype=float)
    errors = noise_free_errors(w_o, w_k, w_k1, frame)
    eps_a, eps_p = errors.a_priori, errors.a_posteriori

    coupling, condition = _coupling_matrix(frame, gains)
    if not condition < SINGULAR_CONDITION:
        logger.debug(f"M(k) singulière (cond={condition:.3e})")
        return EnergyCheckReport(lhs=math.nan, rhs=math.nan, relative_residual=math.inf,
                                 condition_estimate=condition, singular=True)

    inverse_a = np.linalg.solve(coupling, eps_a)
    inverse_p = np.linalg.solve(coupling, eps_p)
    lhs = float(deviation_k1 @ (deviation_k1 / gains) + eps_a @ inverse_a)
    rhs = float(deviation_k @ (deviation_k / gains) + eps_p @ inverse_p)

    gamma = gamma_matrix(frame, gains)
    euclidean_lhs = float(deviation_k1 @ deviation_k1 + eps_a @ gamma @ eps_a)
    euclidean_rhs = float(deviation_k @ deviation_k + eps_p @ gamma @ eps_p)

    return EnergyCheckReport(
        lhs=lhs,
        rhs=rhs,
        relative_residual=_relative_gap(lhs, rhs),
        condition_estimate=condition,
        euclidean_lhs=euclidean_lhs,
        euclidean_rhs=euclidean_rhs,
        euclidean_residual=_relative_gap(euclidean_lhs, euclidean_rhs),
        gamma=gamma,
    )


@dataclass
class BoundSample:
    a_priori: np.ndarray
    errors: np.ndarray
    gamma: np.ndarray


def empirical_step_bound(samples: Iterable[BoundSample]) -> float:
    """2·Σ ε_aᵀΓe_D / Σ e_DᵀΓe_D sur les itérations collectées"""
    numerator = 0.0
    denominator = 0.0
    count = 0
    for sample in samples:
        weighted = sample.gamma @ sample.errors
        numerator += float(sample.a_priori @ weighted)
        denominator += float(sample.errors @ weighted)
        count += 1
    if count == 0 or denominator <= 0.0:
        raise ValueError(f"Énergie d'erreur nulle sur {count} itérations : borne indéfinie")
    return 2.0 * numerator / denominator


def collect_bound_samples(engine, w_o, input_signal, desired) -> List[BoundSample]:
    """
    Fait tourner `engine` sur (u, d) et relève (ε_a, e_D, Γ) à chaque itération
    où M(k) est inversible.
    """
    w_o = np.asarray(w_o, dtype=float)
    u = np.asarray(input_signal, dtype=float)
    d = np.asarray(desired, dtype=float)
    num_subbands = engine.config.num_subbands
    num_blocks = min(u.size, d.size) // num_subbands

    samples = []
    for k in range(num_blocks):
        block = slice(k * num_subbands, (k + 1) * num_subbands)
        w_k = engine.weights.copy()
        telemetry = engine.process_block(u[block], d[block])
        gamma = gamma_matrix(telemetry.frame, telemetry.gains)
        if gamma is None:
            continue
        a_priori = telemetry.frame.regressors @ (w_o - w_k)
        samples.append(BoundSample(a_priori=a_priori, errors=telemetry.errors, gamma=gamma))

    logger.debug(f"{len(samples)}/{num_blocks} itérations retenues pour la borne du pas")
    return samples
