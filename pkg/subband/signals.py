"""
Génération des signaux : entrées AR(1)/bruit blanc/parole, chemins d'écho creux,
signal désiré d(n) = u^T(n) w_o + η(n)
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import soundfile as sf
from scipy import signal

logger = logging.getLogger(__name__)

PCM16_SCALE = 1.0 / 32768.0


class WavFormatError(ValueError):
    """Fichier audio illisible pour le banc d'essai"""


class EmptyAudioError(WavFormatError):
    def __init__(self, path=None):
        super().__init__("empty audio" + (f": {path}" if path else ""))


class UnsupportedChannelCountError(WavFormatError):
    def __init__(self, channels: int):
        super().__init__(f"unsupported channel count: {channels}")
        self.channels = channels


class UnsupportedEncodingError(WavFormatError):
    def __init__(self, encoding: str):
        super().__init__(f"unsupported encoding: {encoding}")
        self.encoding = encoding


@dataclass(frozen=True)
class SparsityProfile:
    num_active: int
    decay_rate: float
    seed: Optional[int]


@dataclass(frozen=True)
class EchoPath:
    """Réponse impulsionnelle w_o à identifier"""

    weights: np.ndarray
    sparsity_profile: Optional[SparsityProfile] = None

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("Le chemin d'écho doit être un vecteur non vide")
        if not np.all(np.isfinite(weights)):
            raise ValueError("Le chemin d'écho contient des valeurs non finies")
        if not np.any(weights):
            raise ValueError("Le chemin d'écho est identiquement nul")
        object.__setattr__(self, 'weights', weights)

    @property
    def length(self) -> int:
        return int(self.weights.size)


@dataclass
class SystemRun:
    """Réalisation d'une expérience : entrée, sortie bruitée et bruit ajouté"""

    input: np.ndarray
    desired: np.ndarray
    noise_variance: float
    snr_db: float
    clean: np.ndarray
    noise: np.ndarray
    flip_sample: Optional[int] = None


@dataclass(frozen=True)
class PcmAudio:
    samples: np.ndarray
    sample_rate: int

    @property
    def length(self) -> int:
        return int(self.samples.size)


def gen_ar1(pole: float, n_samples: int, seed: int, innovation_variance: float = 1.0) -> np.ndarray:
    """u(n) = a·u(n−1) + v(n), v gaussien de variance donnée, u(−1) = 0"""
    if not abs(pole) < 1:
        raise ValueError(f"Pôle AR(1) hors du cercle unité: {pole}")
    if n_samples <= 0:
        raise ValueError(f"Nombre d'échantillons invalide: {n_samples}")
    if innovation_variance <= 0:
        raise ValueError(f"Variance d'innovation invalide: {innovation_variance}")
    rng = np.random.default_rng(seed)
    innovation = math.sqrt(innovation_variance) * rng.standard_normal(n_samples)
    return signal.lfilter([1.0], [1.0, -pole], innovation)


def gen_white(variance: float, n_samples: int, seed: int) -> np.ndarray:
    if variance <= 0:
        raise ValueError(f"Variance invalide: {variance}")
    if n_samples <= 0:
        raise ValueError(f"Nombre d'échantillons invalide: {n_samples}")
    rng = np.random.default_rng(seed)
    return math.sqrt(variance) * rng.standard_normal(n_samples)


@dataclass(frozen=True)
class Ar1Source:
    pole: float = 0.95
    innovation_variance: float = 1.0

    def __post_init__(self):
        if not abs(self.pole) < 1 or self.innovation_variance <= 0:
            raise ValueError(f"Source AR(1) invalide: pôle={self.pole}, variance={self.innovation_variance}")

    def generate(self, n_samples: int, seed: int) -> np.ndarray:
        return gen_ar1(self.pole, n_samples, seed, self.innovation_variance)


@dataclass(frozen=True)
class WhiteGaussianSource:
    variance: float = 1.0

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError(f"Variance invalide: {self.variance}")

    def generate(self, n_samples: int, seed: int) -> np.ndarray:
        return gen_white(self.variance, n_samples, seed)


@dataclass(frozen=True)
class PcmFileSource:
    path: str
    normalization: str = 'pcm16'

    def generate(self, n_samples: int, seed: int) -> np.ndarray:
        # La parole est la même à chaque essai : la graine ne sert qu'au bruit
        audio = load_pcm_wav(self.path)
        if audio.length < n_samples:
            logger.warning(f"{self.path}: {audio.length} échantillons disponibles, {n_samples} demandés")
        return audio.samples[:n_samples]


SignalSource = Union[Ar1Source, WhiteGaussianSource, PcmFileSource]


def gen_sparse_echo_path(length: int, num_active: int, decay_rate: float, seed: int) -> EchoPath:
    """
    Chemin d'écho creux synthétique de norme unité.

    Les `num_active` prises actives sont tirées dans les 3M/4 premiers indices,
    d'amplitude gaussienne atténuée par exp(−decay_rate·position/M).
    """
    if length <= 0:
        raise ValueError(f"Longueur de chemin invalide: {length}")
    if not 0 < num_active <= length:
        raise ValueError(f"Nombre de prises actives invalide: {num_active} (M={length})")
    rng = np.random.default_rng(seed)
    region = max((3 * length) // 4, num_active)
    positions = np.sort(rng.choice(region, size=num_active, replace=False))
    amplitudes = rng.standard_normal(num_active) * np.exp(-decay_rate * positions / length)
    weights = np.zeros(length)
    weights[positions] = amplitudes
    weights /= np.linalg.norm(weights)
    return EchoPath(weights=weights, sparsity_profile=SparsityProfile(num_active, decay_rate, seed))


def load_path_file(path: Union[str, Path], length: Optional[int] = None) -> EchoPath:
    """Réponse impulsionnelle texte (une prise par ligne), normalisée à la norme unité"""
    weights = np.atleast_1d(np.loadtxt(path, dtype=float))
    if length is not None and weights.size != length:
        raise ValueError(f"{path}: {weights.size} prises, {length} attendues")
    weights = weights / np.linalg.norm(weights)
    return EchoPath(weights=weights, sparsity_profile=None)


def flip_path(path: EchoPath) -> EchoPath:
    return EchoPath(weights=-path.weights, sparsity_profile=path.sparsity_profile)


def synthesize_desired(path: EchoPath, input_signal, snr_db: float, seed: int,
                       flip_sample: Optional[int] = None) -> SystemRun:
    """
    Construit d(n) = (w_o ⊛ u)(n) + η(n) avec un RSB fixé sur toute la durée.

    Args:
        path: chemin d'écho w_o
        input_signal: entrée u(n)
        snr_db: RSB en dB (math.inf : sans bruit)
        seed: graine du bruit
        flip_sample: indice à partir duquel le chemin est multiplié par −1

    Returns:
        SystemRun avec σ²_η = P_propre·10^(−RSB/10)
    """
    u = np.asarray(input_signal, dtype=float)
    if u.size == 0:
        raise ValueError("Entrée vide")
    if not np.any(u):
        raise ValueError("Entrée identiquement nulle : RSB indéfini")

    clean = signal.lfilter(path.weights, [1.0], u)
    power = float(np.mean(clean ** 2))

    if flip_sample is not None:
        if not 0 <= flip_sample <= u.size:
            raise ValueError(f"Indice de retournement hors limites: {flip_sample}")
        clean[flip_sample:] *= -1.0

    if math.isinf(snr_db) and snr_db > 0:
        noise_variance = 0.0
        noise = np.zeros_like(clean)
    else:
        noise_variance = power * 10.0 ** (-snr_db / 10.0)
        rng = np.random.default_rng(seed)
        noise = math.sqrt(noise_variance) * rng.standard_normal(u.size)

    return SystemRun(input=u, desired=clean + noise, noise_variance=noise_variance, snr_db=float(snr_db),
                     clean=clean, noise=noise, flip_sample=flip_sample)


def load_pcm_wav(path: Union[str, Path]) -> PcmAudio:
    """
    Lit un WAV PCM 16 bits mono, échantillons ramenés dans [−1, 1) par 1/32768.

    Raises:
        FileNotFoundError: fichier absent
        UnsupportedChannelCountError: plus d'un canal
        UnsupportedEncodingError: flottant, compressé ou autre que PCM 16 bits
        EmptyAudioError: bloc de données vide
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Fichier audio introuvable: {path}")
    try:
        info = sf.info(str(path))
    except RuntimeError as exc:
        raise UnsupportedEncodingError(str(exc)) from exc

    if info.channels != 1:
        raise UnsupportedChannelCountError(info.channels)
    if info.format != 'WAV' or info.subtype != 'PCM_16':
        raise UnsupportedEncodingError(f"{info.format}/{info.subtype}")
    if info.frames == 0:
        raise EmptyAudioError(path)

    data, sample_rate = sf.read(str(path), dtype='int16')
    if data.size == 0:
        raise EmptyAudioError(path)
    samples = data.astype(np.float64) * PCM16_SCALE
    logger.info(f"🔊 {path.name}: {samples.size} échantillons à {sample_rate} Hz")
    return PcmAudio(samples=samples, sample_rate=int(sample_rate))
