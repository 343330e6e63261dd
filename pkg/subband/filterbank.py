"""
Banc de filtres d'analyse à modulation cosinus (pseudo-QMF)
Conception du prototype, modulation et analyse avec décimation critique
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize, signal

logger = logging.getLogger(__name__)

# Longueurs du prototype par nombre de sous-bandes (60 dB d'atténuation visés)
DEFAULT_PROTOTYPE_LENGTHS = {1: 1, 2: 16, 4: 32, 8: 64}

DEFAULT_CROSSOVER_DIP_DB = 0.75
DEFAULT_FFT_SIZE = 4096


class FilterDesignError(ValueError):
    """Paramètres de conception du banc invalides"""


def default_prototype_length(num_subbands: int) -> int:
    """Longueur de prototype conventionnelle pour N sous-bandes (8N hors table)"""
    return DEFAULT_PROTOTYPE_LENGTHS.get(num_subbands, 8 * num_subbands)


@dataclass(frozen=True)
class PrototypeFilter:
    """Prototype passe-bas à phase linéaire du banc"""

    taps: np.ndarray
    num_subbands: int
    target_attenuation_db: float

    @property
    def length(self) -> int:
        return int(self.taps.size)


@dataclass(frozen=True)
class AnalysisBank:
    """N filtres d'analyse H_i de longueur L, rangés en lignes"""

    filters: np.ndarray
    prototype: PrototypeFilter

    @property
    def num_subbands(self) -> int:
        return int(self.filters.shape[0])

    @property
    def length(self) -> int:
        return int(self.filters.shape[1])


@dataclass
class SubbandFrame:
    """Instantané décimé : régresseurs u_i(k) (le plus récent en tête) et d_i(kN)"""

    regressors: np.ndarray
    desired: np.ndarray

    @property
    def num_subbands(self) -> int:
        return int(self.regressors.shape[0])

    @property
    def filter_length(self) -> int:
        return int(self.regressors.shape[1])


@dataclass
class AnalysisMemory:
    """Mémoires de filtrage pleine cadence et lignes à retard des sous-bandes"""

    num_subbands: int
    prototype_length: int
    filter_length: int
    input_history: np.ndarray = field(init=False)
    desired_history: np.ndarray = field(init=False)
    regressors: np.ndarray = field(init=False)

    def __post_init__(self):
        self.reset()

    def reset(self):
        self.input_history = np.zeros(self.prototype_length - 1)
        self.desired_history = np.zeros(self.prototype_length - 1)
        self.regressors = np.zeros((self.num_subbands, self.filter_length))


@dataclass(frozen=True)
class BankQualityReport:
    stopband_attenuation_db: float
    amplitude_distortion_db: float
    max_alias_level_db: float

    def as_text(self) -> str:
        return (
            f"stopband_attenuation_db = {self.stopband_attenuation_db:.3f}\n"
            f"amplitude_distortion_db = {self.amplitude_distortion_db:.6f}\n"
            f"max_alias_level_db = {self.max_alias_level_db:.3f}\n"
        )


def _modulation(num_subbands: int, length: int) -> np.ndarray:
    """Matrice (N, L) des cosinus modulants, phase (-1)^i·π/4"""
    n = np.arange(length) - (length - 1) / 2.0
    i = np.arange(num_subbands)[:, None]
    phase = np.where(i % 2 == 0, np.pi / 4, -np.pi / 4)
    return 2.0 * np.cos((np.pi / num_subbands) * (i + 0.5) * n + phase)


def _zero_phase_response(taps: np.ndarray, omega: float) -> float:
    n = np.arange(taps.size) - (taps.size - 1) / 2.0
    return float(np.dot(taps, np.cos(omega * n)))


def _stopband_rejection_db(taps: np.ndarray, num_subbands: int, fft_size: int) -> float:
    """Rejet minimal au-delà de π/N, relatif au pic de bande passante"""
    magnitude = np.abs(np.fft.rfft(taps, fft_size))
    omega = np.linspace(0.0, np.pi, magnitude.size)
    passband_peak = magnitude[omega <= np.pi / (2 * num_subbands)].max()
    stopband_peak = magnitude[omega >= np.pi / num_subbands].max()
    return float(20.0 * np.log10(passband_peak / max(stopband_peak, np.finfo(float).tiny)))


def _half_power_taps(num_subbands: int, length: int, beta: float, crossover_dip_db: float) -> np.ndarray:
    """Sinus cardinal fenêtré (Kaiser) dont la coupure place le croisement des bandes au niveau voulu"""
    crossover = np.pi / (2 * num_subbands)
    target = math.sqrt(10.0 ** (-crossover_dip_db / 10.0) / 2.0)

    def mismatch(cutoff: float) -> float:
        taps = signal.firwin(length, cutoff, window=('kaiser', beta))
        return _zero_phase_response(taps, crossover) / _zero_phase_response(taps, 0.0) - target

    low, high = 1.0 / (2 * num_subbands), min(1.0 / num_subbands, 1.0 - 1e-6)
    if mismatch(low) * mismatch(high) < 0:
        cutoff = optimize.brentq(mismatch, low, high, xtol=1e-12)
    else:
        logger.warning(f"Coupure non ajustable (N={num_subbands}, L={length}, beta={beta:.3f}), coupure π/2N conservée")
        cutoff = low
    return signal.firwin(length, cutoff, window=('kaiser', beta))


def design_prototype(num_subbands: int, length: int, attenuation_db: float = 60.0,
                     crossover_dip_db: float = DEFAULT_CROSSOVER_DIP_DB,
                     fft_size: int = DEFAULT_FFT_SIZE) -> PrototypeFilter:
    """
    Conçoit le prototype passe-bas du banc à modulation cosinus.

    La coupure est ajustée pour que Σ|H_i|² ne descende que de `crossover_dip_db`
    aux croisements des bandes ; le paramètre β de Kaiser est cherché dans
    [0, kaiser_beta(attenuation_db)] pour maximiser le rejet mesuré au-delà de π/N.
    Le gain est enfin normalisé pour que Σ_i |H_i|² vaille 1 en moyenne.

    Args:
        num_subbands: nombre de sous-bandes N
        length: longueur L du prototype (L >= 2N dès que N > 1)
        attenuation_db: atténuation visée en bande coupée
        crossover_dip_db: creux toléré de Σ|H_i|² aux croisements

    Returns:
        PrototypeFilter symétrique (phase linéaire)
    """
    for name, value in (('num_subbands', num_subbands), ('length', length),
                        ('attenuation_db', attenuation_db), ('crossover_dip_db', crossover_dip_db)):
        if not np.isfinite(value):
            raise FilterDesignError(f"{name} doit être fini (reçu {value})")
    num_subbands, length = int(num_subbands), int(length)
    if num_subbands < 1:
        raise FilterDesignError(f"Nombre de sous-bandes invalide: {num_subbands}")
    if attenuation_db <= 0:
        raise FilterDesignError(f"Atténuation invalide: {attenuation_db} dB")

    if num_subbands == 1:
        if length != 1:
            logger.info(f"N=1 : prototype identité, longueur {length} ignorée")
        return PrototypeFilter(taps=np.ones(1), num_subbands=1, target_attenuation_db=float(attenuation_db))

    if length < 2 * num_subbands:
        raise FilterDesignError(f"Longueur {length} < 2N = {2 * num_subbands} : une sous-bande n'est pas couverte")

    beta_max = max(float(signal.kaiser_beta(attenuation_db)), 0.5)

    def loss(beta: float) -> float:
        taps = _half_power_taps(num_subbands, length, beta, crossover_dip_db)
        return -_stopband_rejection_db(taps, num_subbands, fft_size)

    # Grille grossière puis affinage borné autour du meilleur point
    grid = np.linspace(0.25, beta_max, 24)
    losses = [loss(beta) for beta in grid]
    best = int(np.argmin(losses))
    low, high = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    refined = optimize.minimize_scalar(loss, bounds=(low, high), method='bounded', options={'xatol': 1e-4})
    beta = float(refined.x) if refined.fun <= losses[best] else float(grid[best])

    taps = _half_power_taps(num_subbands, length, beta, crossover_dip_db)
    taps = 0.5 * (taps + taps[::-1])  # phase linéaire exacte

    energy = float(np.sum((taps * _modulation(num_subbands, length)) ** 2))
    taps = taps / math.sqrt(energy)

    logger.debug(f"Prototype N={num_subbands} L={length}: beta={beta:.4f}, "
                 f"rejet={_stopband_rejection_db(taps, num_subbands, fft_size):.2f} dB")
    return PrototypeFilter(taps=taps, num_subbands=num_subbands, target_attenuation_db=float(attenuation_db))


def modulate_bank(prototype: PrototypeFilter) -> AnalysisBank:
    """h_i[n] = 2·p[n]·cos((π/N)(i + 0.5)(n − (L−1)/2) + (−1)^i·π/4)"""
    if prototype.num_subbands == 1:
        return AnalysisBank(filters=prototype.taps[None, :].copy(), prototype=prototype)
    filters = prototype.taps[None, :] * _modulation(prototype.num_subbands, prototype.length)
    return AnalysisBank(filters=filters, prototype=prototype)


@lru_cache(maxsize=32)
def design_bank(num_subbands: int, length: Optional[int] = None, attenuation_db: float = 60.0) -> AnalysisBank:
    """Banc complet, mis en cache (la conception est déterministe)"""
    if length is None:
        length = default_prototype_length(num_subbands)
    return modulate_bank(design_prototype(num_subbands, length, attenuation_db))


def analyze_step(bank: AnalysisBank, input_block, desired_block, memory: AnalysisMemory) -> SubbandFrame:
    """
    Consomme N échantillons pleine bande de u(n) et d(n) et renvoie l'instantané décimé.

    L'instant de décimation est le dernier échantillon du bloc.
    """
    num_subbands, length = bank.num_subbands, bank.length
    x = np.asarray(input_block, dtype=float)
    d = np.asarray(desired_block, dtype=float)
    if x.shape != (num_subbands,) or d.shape != (num_subbands,):
        raise ValueError(f"Blocs de {num_subbands} échantillons attendus, reçu {x.shape} et {d.shape}")

    reversed_filters = bank.filters[:, ::-1]

    x_ext = np.concatenate([memory.input_history, x])
    fresh = sliding_window_view(x_ext, length) @ reversed_filters.T  # (instants, sous-bandes)
    memory.input_history = x_ext[x_ext.size - (length - 1):]
    memory.regressors = np.concatenate([fresh[::-1].T, memory.regressors], axis=1)[:, :memory.filter_length]

    d_ext = np.concatenate([memory.desired_history, d])
    desired = reversed_filters @ d_ext[d_ext.size - length:]
    memory.desired_history = d_ext[d_ext.size - (length - 1):]

    return SubbandFrame(regressors=memory.regressors.copy(), desired=desired)


def bank_quality_report(bank: AnalysisBank, fft_size: Optional[int] = None) -> BankQualityReport:
    """
    Mesure la qualité du banc sur une grille FFT.

    Args:
        bank: banc d'analyse
        fft_size: puissance de deux >= 8L (par défaut max(4096, 8L arrondi))

    Returns:
        rejet du prototype au-delà de π/N, distorsion d'amplitude de Σ|H_i|²
        (demi-excursion crête à crête en dB) et recouvrement maximal entre bandes adjacentes
    """
    length = bank.length
    if fft_size is None:
        fft_size = max(DEFAULT_FFT_SIZE, 1 << math.ceil(math.log2(8 * length)))
    if fft_size < 8 * length or fft_size & (fft_size - 1):
        raise ValueError(f"fft_size doit être une puissance de deux >= 8L = {8 * length} (reçu {fft_size})")

    stopband = _stopband_rejection_db(bank.prototype.taps, bank.num_subbands, fft_size)

    responses = np.abs(np.fft.rfft(bank.filters, fft_size, axis=1))
    power_db = 10.0 * np.log10(np.sum(responses ** 2, axis=0))
    distortion = float((power_db.max() - power_db.min()) / 2.0)

    if bank.num_subbands > 1:
        overlap = np.max(responses[:-1] * responses[1:])
        alias = float(10.0 * np.log10(overlap / np.max(responses ** 2)))
    else:
        alias = float('-inf')

    return BankQualityReport(stopband_attenuation_db=stopband,
                             amplitude_distortion_db=distortion,
                             max_alias_level_db=alias)
