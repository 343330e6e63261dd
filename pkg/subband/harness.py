"""
Banc d'essai : scénarios, essais appariés, moyennes d'ensemble, balayages,
comparaisons d'algorithmes et export CSV
"""

import dataclasses
import json
import logging
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from django.utils.text import slugify

from .diagnostics import ERLE_CEILING_DB, NMSD_FLOOR_DB, moving_power
from .engine import DEFAULT_DELTA, DivergenceError, SafConfig, SafEngine
from .filterbank import default_prototype_length
from .proportionate import build_gain_rule
from .signals import (Ar1Source, EchoPath, PcmFileSource, SignalSource, SystemRun, WhiteGaussianSource,
                      gen_sparse_echo_path, load_path_file, synthesize_desired)
from .step_control import (DEFAULT_GAMMA, DEFAULT_KAPPA, DEFAULT_LAMBDA, FixedStep, SetMembershipStep,
                           ShrinkageVssStep, build_step_controller)

logger = logging.getLogger(__name__)

NOISE_SEED_OFFSET = 10 ** 6
PATH_SEED_OFFSET = 2 * 10 ** 6

INPUT_KINDS = ('ar1', 'white', 'wav')
SWEEP_PARAMETERS = ('lambda', 'num_subbands', 'mu', 'snr_db')
SWEEP_ALIASES = {'subbands': 'num_subbands', 'snr': 'snr_db', 'lam': 'lambda'}


@dataclass(frozen=True)
class InputSpec:
    kind: str = 'ar1'
    pole: float = 0.95
    variance: float = 1.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in INPUT_KINDS:
            raise ValueError(f"Type d'entrée inconnu: {self.kind}")
        if self.kind == 'wav' and not self.path:
            raise ValueError("Une entrée 'wav' demande un chemin de fichier (input.path)")

    def source(self) -> SignalSource:
        if self.kind == 'ar1':
            return Ar1Source(pole=self.pole, innovation_variance=self.variance)
        if self.kind == 'white':
            return WhiteGaussianSource(variance=self.variance)
        return PcmFileSource(path=self.path)


@dataclass(frozen=True)
class PathSpec:
    num_active: int = 32
    decay_rate: float = 4.0
    file: Optional[str] = None


@dataclass(frozen=True)
class AlgorithmSpec:
    """Une variante de la famille : règle de gain + contrôle du pas + δ"""

    name: str
    gain_rule: str = 'ipnlms'
    alpha: float = 0.0
    xi: float = 0.001
    step_control: str = ShrinkageVssStep.kind
    mu: float = 1.0
    gamma: float = DEFAULT_GAMMA
    lam: float = DEFAULT_LAMBDA
    kappa: float = DEFAULT_KAPPA
    delta: float = DEFAULT_DELTA
    num_subbands: Optional[int] = None

    def gain(self):
        if self.gain_rule == 'identity':
            return build_gain_rule('identity')
        return build_gain_rule(self.gain_rule, alpha=self.alpha, xi=self.xi)

    def controller(self, noise_variance: float, num_subbands: int, filter_length: int):
        return build_step_controller(self.step_control, noise_variance, num_subbands, filter_length,
                                     mu=self.mu, gamma=self.gamma, lam=self.lam, kappa=self.kappa)

    @property
    def needs_noise_variance(self) -> bool:
        return self.step_control in (SetMembershipStep.kind, ShrinkageVssStep.kind)


@dataclass(frozen=True)
class MetricOptions:
    nmsd_stride: int = 1
    erle_window: Optional[int] = None
    steady_state_iterations: int = 10000
    thresholds_db: Tuple[float, ...] = (-15.0, -20.0, -30.0)
    primary_threshold_db: float = -20.0

    def __post_init__(self):
        if self.nmsd_stride < 1:
            raise ValueError(f"Pas d'enregistrement invalide: {self.nmsd_stride}")
        if self.erle_window is not None and self.erle_window < 1:
            raise ValueError(f"Fenêtre ERLE invalide: {self.erle_window}")
        if self.steady_state_iterations < 1:
            raise ValueError(f"Fenêtre de régime permanent invalide: {self.steady_state_iterations}")


@dataclass(frozen=True)
class ExperimentSpec:
    """Description déclarative d'une expérience (tout est dérivé de la configuration et des graines)"""

    input: InputSpec
    algorithms: Tuple[AlgorithmSpec, ...]
    filter_length: int = 512
    num_subbands: int = 4
    snr_db: float = 30.0
    path: PathSpec = field(default_factory=PathSpec)
    path_flip_sample: Optional[int] = None
    run_length: int = 280000
    ensemble_size: int = 25
    base_seed: int = 1
    metrics: MetricOptions = field(default_factory=MetricOptions)
    prototype_length: Optional[int] = None
    attenuation_db: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, 'algorithms', tuple(self.algorithms))
        if not self.algorithms:
            raise ValueError("Au moins un algorithme est requis")
        names = [algorithm.name for algorithm in self.algorithms]
        if len(set(names)) != len(names):
            raise ValueError(f"Noms d'algorithmes dupliqués: {names}")
        if self.filter_length < 1 or self.num_subbands < 1:
            raise ValueError(f"Dimensions invalides: M={self.filter_length}, N={self.num_subbands}")
        if self.ensemble_size < 1:
            raise ValueError(f"Taille d'ensemble invalide: {self.ensemble_size}")
        if self.run_length < self.block_lcm:
            raise ValueError(f"Durée {self.run_length} inférieure à un bloc ({self.block_lcm})")
        if self.path_flip_sample is not None and not 0 <= self.path_flip_sample < self.run_length:
            raise ValueError(f"Retournement du chemin hors de la durée: {self.path_flip_sample}")
        noise_free = math.isinf(self.snr_db) and self.snr_db > 0
        for algorithm in self.algorithms:
            if noise_free and algorithm.needs_noise_variance:
                raise ValueError(f"{algorithm.name}: le contrôle '{algorithm.step_control}' "
                                 f"demande un bruit de variance connue (RSB fini)")
            # Vérification des paramètres sur un essai fictif de variance unité
            algorithm.gain()
            algorithm.controller(1.0, self.subbands_for(algorithm), self.filter_length)

    def subbands_for(self, algorithm: AlgorithmSpec) -> int:
        return algorithm.num_subbands or self.num_subbands

    def prototype_length_for(self, algorithm: AlgorithmSpec) -> Optional[int]:
        num_subbands = self.subbands_for(algorithm)
        if num_subbands == self.num_subbands and self.prototype_length is not None:
            return self.prototype_length
        return default_prototype_length(num_subbands)

    @property
    def block_lcm(self) -> int:
        return math.lcm(*(self.subbands_for(algorithm) for algorithm in self.algorithms))

    @property
    def aligned_flip_sample(self) -> Optional[int]:
        """Retournement ramené à la frontière de bloc commune la plus proche par défaut"""
        if self.path_flip_sample is None:
            return None
        return (self.path_flip_sample // self.block_lcm) * self.block_lcm

    def trial_seeds(self) -> List[int]:
        return [self.base_seed + trial for trial in range(self.ensemble_size)]

    def to_config(self) -> Dict[str, Any]:
        """Document de configuration équivalent (JSON, RSB infini → null)"""
        config = dataclasses.asdict(self)
        config['algorithms'] = list(config['algorithms'])
        config['snr_db'] = None if math.isinf(self.snr_db) else self.snr_db
        config['metrics']['thresholds_db'] = list(self.metrics.thresholds_db)
        return config

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> 'ExperimentSpec':
        """Construit la spécification depuis un document déjà validé"""
        values = dict(config)
        values['input'] = InputSpec(**values.get('input', {}))
        values['path'] = PathSpec(**values.get('path', {}))
        metrics = dict(values.get('metrics', {}))
        if 'thresholds_db' in metrics:
            metrics['thresholds_db'] = tuple(metrics['thresholds_db'])
        values['metrics'] = MetricOptions(**metrics)
        values['algorithms'] = tuple(AlgorithmSpec(**algorithm) for algorithm in values.get('algorithms', []))
        if values.get('snr_db', 30.0) is None:
            values['snr_db'] = math.inf
        return cls(**values)


def seed_lineage(trial_seed: int) -> Dict[str, int]:
    return {
        'trial_seed': trial_seed,
        'input_seed': trial_seed,
        'noise_seed': trial_seed + NOISE_SEED_OFFSET,
        'path_seed': trial_seed + PATH_SEED_OFFSET,
    }


@dataclass
class Scenario:
    """Signaux partagés par tous les algorithmes d'un essai"""

    path: EchoPath
    system: SystemRun
    trial_seed: int

    @property
    def flip_sample(self) -> Optional[int]:
        return self.system.flip_sample


def build_scenario(spec: ExperimentSpec, trial_seed: int) -> Scenario:
    seeds = seed_lineage(trial_seed)
    input_signal = spec.input.source().generate(spec.run_length, seeds['input_seed'])

    if spec.path.file:
        path = load_path_file(spec.path.file, length=spec.filter_length)
    else:
        path = gen_sparse_echo_path(spec.filter_length, spec.path.num_active, spec.path.decay_rate,
                                    seeds['path_seed'])

    flip = spec.aligned_flip_sample
    if flip is not None and flip >= input_signal.size:
        logger.warning(f"Retournement à {flip} au-delà du signal ({input_signal.size} échantillons), ignoré")
        flip = None
    system = synthesize_desired(path, input_signal, spec.snr_db, seeds['noise_seed'], flip_sample=flip)
    return Scenario(path=path, system=system, trial_seed=trial_seed)


@dataclass
class MetricSeries:
    """
    Relevés d'un algorithme, une ligne par itération enregistrée.

    `deviation` est la NMSD linéaire ‖w_o − w‖²/‖w_o‖² ; les puissances de d et e
    sont conservées en linéaire pour que les moyennes d'ensemble restent linéaires.
    """

    algorithm: str
    num_subbands: int
    iterations: np.ndarray
    fullband_n: np.ndarray
    deviation: np.ndarray
    steps: np.ndarray
    abs_errors: np.ndarray
    desired_power: Optional[np.ndarray] = None
    error_power: Optional[np.ndarray] = None
    diverged: bool = False
    diverged_at: Optional[int] = None
    trial_seed: Optional[int] = None

    def __len__(self) -> int:
        return int(self.iterations.size)

    @property
    def nmsd_db(self) -> np.ndarray:
        with np.errstate(divide='ignore'):
            values = 10.0 * np.log10(self.deviation)
        return np.where(self.deviation > 0, values, NMSD_FLOOR_DB)

    @property
    def erle_db(self) -> Optional[np.ndarray]:
        if self.desired_power is None:
            return None
        with np.errstate(divide='ignore', invalid='ignore'):
            values = 10.0 * np.log10(self.desired_power / self.error_power)
        values = np.where(self.error_power > 0, values, ERLE_CEILING_DB)
        values = np.clip(values, -ERLE_CEILING_DB, ERLE_CEILING_DB)
        # Pas d'estimation avant que la fenêtre ne soit remplie
        return np.where(np.isnan(self.desired_power), np.nan, values)

    @classmethod
    def empty(cls, algorithm: str, num_subbands: int, with_erle: bool = False) -> 'MetricSeries':
        return cls(algorithm=algorithm, num_subbands=num_subbands,
                   iterations=np.zeros(0, dtype=int), fullband_n=np.zeros(0, dtype=int),
                   deviation=np.zeros(0), steps=np.zeros((0, num_subbands)), abs_errors=np.zeros((0, num_subbands)),
                   desired_power=np.zeros(0) if with_erle else None, error_power=np.zeros(0) if with_erle else None)


def _sample_window_power(signal_values: np.ndarray, window: int, sample_indices: np.ndarray) -> np.ndarray:
    """Puissance glissante relevée aux échantillons voulus (NaN avant la première fenêtre pleine)"""
    sampled = np.full(sample_indices.size, np.nan)
    if window > signal_values.size:
        return sampled
    power = moving_power(signal_values, window)
    valid = sample_indices >= window - 1
    sampled[valid] = power[sample_indices[valid] - (window - 1)]
    return sampled


def simulate(spec: ExperimentSpec, algorithm: AlgorithmSpec, scenario: Scenario) -> MetricSeries:
    """Fait tourner un algorithme sur les signaux d'un essai et relève les métriques"""
    system = scenario.system
    num_subbands = spec.subbands_for(algorithm)
    config = SafConfig(
        filter_length=spec.filter_length,
        num_subbands=num_subbands,
        delta=algorithm.delta,
        gain_rule=algorithm.gain(),
        step_controller=algorithm.controller(system.noise_variance, num_subbands, spec.filter_length),
        prototype_length=spec.prototype_length_for(algorithm),
        attenuation_db=spec.attenuation_db,
    )
    erle_window = spec.metrics.erle_window
    engine = SafEngine(config, track_fullband=erle_window is not None)

    stride = spec.metrics.nmsd_stride
    num_blocks = system.input.size // num_subbands
    num_records = num_blocks // stride
    w_o = scenario.path.weights
    reference = float(w_o @ w_o)
    flip_block = None if system.flip_sample is None else system.flip_sample // num_subbands

    iterations = np.zeros(num_records, dtype=int)
    deviation = np.zeros(num_records)
    steps = np.zeros((num_records, num_subbands))
    abs_errors = np.zeros((num_records, num_subbands))
    fullband_errors = np.zeros(num_blocks * num_subbands) if erle_window is not None else None

    recorded = 0
    diverged_at = None
    for k in range(num_blocks):
        block = slice(k * num_subbands, (k + 1) * num_subbands)
        try:
            telemetry = engine.process_block(system.input[block], system.desired[block])
        except DivergenceError as exc:
            diverged_at = exc.iteration
            logger.warning(f"{algorithm.name} (graine {scenario.trial_seed}): divergence à l'itération {exc.iteration}")
            break
        if fullband_errors is not None:
            fullband_errors[block] = telemetry.fullband_errors
        if (k + 1) % stride:
            continue
        target = -w_o if flip_block is not None and k >= flip_block else w_o
        difference = target - telemetry.weights
        iterations[recorded] = k + 1
        deviation[recorded] = float(difference @ difference) / reference
        steps[recorded] = telemetry.steps
        abs_errors[recorded] = np.abs(telemetry.errors)
        recorded += 1

    fullband_n = iterations[:recorded] * num_subbands
    desired_power = error_power = None
    if erle_window is not None:
        processed = (diverged_at if diverged_at is not None else num_blocks) * num_subbands
        sample_indices = fullband_n - 1
        desired_power = _sample_window_power(system.desired[:processed], erle_window, sample_indices)
        error_power = _sample_window_power(fullband_errors[:processed], erle_window, sample_indices)

    return MetricSeries(
        algorithm=algorithm.name,
        num_subbands=num_subbands,
        iterations=iterations[:recorded],
        fullband_n=fullband_n,
        deviation=deviation[:recorded],
        steps=steps[:recorded],
        abs_errors=abs_errors[:recorded],
        desired_power=desired_power,
        error_power=error_power,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
        trial_seed=scenario.trial_seed,
    )


def run_trial(spec: ExperimentSpec, algorithm: AlgorithmSpec, trial_seed: int) -> MetricSeries:
    """Un essai complet d'un seul algorithme"""
    return simulate(spec, algorithm, build_scenario(spec, trial_seed))


def run_paired_trial(spec: ExperimentSpec, trial_seed: int) -> Dict[str, MetricSeries]:
    """Tous les algorithmes sur les mêmes entrée, bruit et chemin"""
    scenario = build_scenario(spec, trial_seed)
    results = {algorithm.name: simulate(spec, algorithm, scenario) for algorithm in spec.algorithms}
    logger.debug(f"Essai {trial_seed} terminé ({', '.join(results)})")
    return results


def _paired_trial_job(job: Tuple[ExperimentSpec, int]) -> Dict[str, MetricSeries]:
    spec, trial_seed = job
    return run_paired_trial(spec, trial_seed)


def _ensemble_mean(algorithm: str, num_subbands: int, trials: List[MetricSeries]) -> MetricSeries:
    """Moyenne par itération des essais non divergents, dans le domaine linéaire"""
    completed = [series for series in trials if not series.diverged]
    with_erle = trials[0].desired_power is not None
    if not completed:
        empty = MetricSeries.empty(algorithm, num_subbands, with_erle)
        empty.diverged = True
        return empty

    def mean(attribute):
        return np.mean(np.stack([getattr(series, attribute) for series in completed]), axis=0)

    return MetricSeries(
        algorithm=algorithm,
        num_subbands=num_subbands,
        iterations=completed[0].iterations.copy(),
        fullband_n=completed[0].fullband_n.copy(),
        deviation=mean('deviation'),
        steps=mean('steps'),
        abs_errors=mean('abs_errors'),
        desired_power=mean('desired_power') if with_erle else None,
        error_power=mean('error_power') if with_erle else None,
        diverged=len(completed) < len(trials),
    )


@dataclass
class EnsembleResult:
    spec: ExperimentSpec
    series: Dict[str, MetricSeries]
    trials: Dict[str, List[MetricSeries]]
    trial_seeds: List[int]

    @property
    def divergences(self) -> Dict[str, List[int]]:
        return {name: [series.trial_seed for series in trials if series.diverged]
                for name, trials in self.trials.items()}

    @property
    def any_divergence(self) -> bool:
        return any(self.divergences.values())

    def _iteration_window(self, algorithm: str, window: Optional[int], end: Optional[int]) -> np.ndarray:
        series = self.series[algorithm]
        window = window or self.spec.metrics.steady_state_iterations
        end = int(series.iterations[-1]) if end is None and len(series) else (end or 0)
        return (series.iterations > end - window) & (series.iterations <= end)

    def steady_state_db(self, algorithm: str, window: Optional[int] = None, end: Optional[int] = None) -> float:
        """NMSD moyenne (linéaire puis dB) sur les `window` itérations se terminant à `end`"""
        series = self.series[algorithm]
        selected = series.deviation[self._iteration_window(algorithm, window, end)]
        if selected.size == 0:
            return math.nan
        level = float(np.mean(selected))
        return 10.0 * math.log10(level) if level > 0 else NMSD_FLOOR_DB

    def convergence_time(self, algorithm: str, threshold_db: float, start: int = 0) -> Optional[int]:
        """Échantillons pleine bande écoulés depuis `start` avant que la NMSD moyenne passe sous le seuil"""
        series = self.series[algorithm]
        candidates = np.flatnonzero((series.fullband_n > start) & (series.nmsd_db <= threshold_db))
        if candidates.size == 0:
            return None
        return int(series.fullband_n[candidates[0]]) - start

    def convergence_times(self, algorithm: str) -> Dict[float, Optional[int]]:
        return {threshold: self.convergence_time(algorithm, threshold)
                for threshold in self.spec.metrics.thresholds_db}

    def flip_iteration(self, algorithm: str) -> Optional[int]:
        flip = self.spec.aligned_flip_sample
        if flip is None:
            return None
        return flip // self.series[algorithm].num_subbands

    def recovery_time(self, algorithm: str, tolerance_db: float = 2.0) -> Optional[int]:
        """
        Échantillons pleine bande après le retournement du chemin pour revenir
        à `tolerance_db` du régime permanent atteint avant le retournement.
        """
        flip_iteration = self.flip_iteration(algorithm)
        if flip_iteration is None:
            raise ValueError("Aucun retournement de chemin dans cette expérience")
        before = self.steady_state_db(algorithm, end=flip_iteration)
        return self.convergence_time(algorithm, before + tolerance_db, start=self.spec.aligned_flip_sample)

    def summary(self, algorithm: str) -> Dict[str, Any]:
        summary = {
            'num_subbands': self.series[algorithm].num_subbands,
            'steady_state_db': _json_number(self.steady_state_db(algorithm)),
            'convergence_times': {f'{threshold:g}': time for threshold, time in
                                  self.convergence_times(algorithm).items()},
            'diverged_trials': self.divergences[algorithm],
        }
        if self.spec.aligned_flip_sample is not None and len(self.series[algorithm]):
            summary['pre_flip_steady_state_db'] = _json_number(
                self.steady_state_db(algorithm, end=self.flip_iteration(algorithm)))
            summary['recovery_time'] = self.recovery_time(algorithm)
        return summary


def run_ensemble(spec: ExperimentSpec, trial_seeds: Optional[Sequence[int]] = None,
                 max_workers: int = 1) -> EnsembleResult:
    """
    Essais indépendants (graines dérivées de base_seed), moyennés par itération.

    L'ordre des résultats ne dépend pas de l'ordre d'achèvement des processus.
    """
    seeds = list(trial_seeds) if trial_seeds is not None else spec.trial_seeds()
    if not seeds:
        raise ValueError("Aucun essai à exécuter")
    jobs = [(spec, seed) for seed in seeds]

    if max_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(max_workers, len(jobs))) as pool:
            outcomes = list(pool.map(_paired_trial_job, jobs))
    else:
        outcomes = [_paired_trial_job(job) for job in jobs]

    trials = {algorithm.name: [outcome[algorithm.name] for outcome in outcomes] for algorithm in spec.algorithms}
    series = {algorithm.name: _ensemble_mean(algorithm.name, spec.subbands_for(algorithm), trials[algorithm.name])
              for algorithm in spec.algorithms}
    result = EnsembleResult(spec=spec, series=series, trials=trials, trial_seeds=seeds)

    for name, diverged in result.divergences.items():
        if diverged:
            logger.warning(f"{name}: {len(diverged)}/{len(seeds)} essais divergents (graines {diverged})")
    return result


def _replace_algorithms(spec: ExperimentSpec, step_control: str, **changes) -> ExperimentSpec:
    matching = [algorithm for algorithm in spec.algorithms if algorithm.step_control == step_control]
    if not matching:
        raise ValueError(f"Aucun algorithme '{step_control}' ne porte ce paramètre")
    algorithms = tuple(dataclasses.replace(algorithm, **changes) if algorithm.step_control == step_control
                       else algorithm for algorithm in spec.algorithms)
    return dataclasses.replace(spec, algorithms=algorithms)


def apply_sweep_value(spec: ExperimentSpec, parameter: str, value) -> ExperimentSpec:
    """Nouvelle spécification avec un seul paramètre modifié (validée à la construction)"""
    parameter = SWEEP_ALIASES.get(parameter, parameter)
    if parameter == 'lambda':
        if not float(value) > 0:
            raise ValueError(f"lambda doit être > 0 (reçu {value})")
        return _replace_algorithms(spec, ShrinkageVssStep.kind, lam=float(value))
    if parameter == 'mu':
        return _replace_algorithms(spec, FixedStep.kind, mu=float(value))
    if parameter == 'num_subbands':
        if float(value) != int(float(value)) or int(float(value)) < 1:
            raise ValueError(f"Nombre de sous-bandes invalide: {value}")
        return dataclasses.replace(spec, num_subbands=int(float(value)), prototype_length=None)
    if parameter == 'snr_db':
        return dataclasses.replace(spec, snr_db=float(value))
    raise ValueError(f"Paramètre de balayage inconnu: {parameter} (attendu: {', '.join(SWEEP_PARAMETERS)})")


def sweep(spec: ExperimentSpec, parameter: str, values: Sequence, max_workers: int = 1) -> List[EnsembleResult]:
    """Un ensemble par valeur, le reste de l'expérience inchangé ; toutes les valeurs sont validées d'abord"""
    if not values:
        raise ValueError("Liste de valeurs vide")
    specs = [apply_sweep_value(spec, parameter, value) for value in values]
    return [run_ensemble(variant, max_workers=max_workers) for variant in specs]


@dataclass
class ComparisonReport:
    result: EnsembleResult
    ranking: pd.DataFrame

    def as_table(self) -> str:
        return self.ranking.to_string(index=False, float_format=lambda value: f'{value:.2f}')


def rank_algorithms(result: EnsembleResult) -> pd.DataFrame:
    """Classement par NMSD en régime permanent, puis par temps de convergence au seuil principal"""
    spec = result.spec
    threshold = spec.metrics.primary_threshold_db
    time_column = f'time_to_{threshold:g}db'
    rows = []
    for algorithm in spec.algorithms:
        time = result.convergence_time(algorithm.name, threshold)
        rows.append({
            'algorithm': algorithm.name,
            'num_subbands': spec.subbands_for(algorithm),
            'steady_state_db': result.steady_state_db(algorithm.name),
            time_column: math.inf if time is None else time,
        })
    ranking = pd.DataFrame(rows).sort_values(['steady_state_db', time_column], kind='stable').reset_index(drop=True)
    ranking.insert(0, 'rank', np.arange(1, len(ranking) + 1))
    return ranking


def compare(spec: ExperimentSpec, max_workers: int = 1) -> ComparisonReport:
    """Essais appariés de plusieurs algorithmes (mêmes signaux dans chaque essai) et leur classement"""
    if len(spec.algorithms) < 2:
        raise ValueError("La comparaison demande au moins deux algorithmes")
    result = run_ensemble(spec, max_workers=max_workers)
    return ComparisonReport(result=result, ranking=rank_algorithms(result))


def _json_number(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def series_frame(series: MetricSeries) -> pd.DataFrame:
    """Tableau CSV d'une série : k, fullband_n, algorithm, nmsd_db[, erle_db], mu_0..mu_{N−1}"""
    columns = {
        'k': series.iterations,
        'fullband_n': series.fullband_n,
        'algorithm': np.full(len(series), series.algorithm, dtype=object),
        'nmsd_db': series.nmsd_db,
    }
    if series.desired_power is not None:
        columns['erle_db'] = series.erle_db
    for subband in range(series.num_subbands):
        columns[f'mu_{subband}'] = series.steps[:, subband]
    return pd.DataFrame(columns)


def series_filename(algorithm: str) -> str:
    return f"{slugify(algorithm) or 'algorithm'}.csv"


def export_csv(result: EnsembleResult, out_dir) -> List[Path]:
    """
    Un fichier CSV par algorithme et un manifest.json (configuration complète,
    lignée des graines, résumé par algorithme). Aucun horodatage : deux exécutions
    identiques produisent des fichiers identiques.

    Les fichiers sont d'abord écrits dans un dossier temporaire voisin puis déplacés :
    une erreur d'écriture ne laisse aucun résultat partiel dans `out_dir`.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f'.{out_dir.name}-', dir=out_dir.parent))
    try:
        names = _write_results(result, staging)
        out_dir.mkdir(exist_ok=True)
        written = []
        for name in names:
            os.replace(staging / name, out_dir / name)
            written.append(out_dir / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    logger.info(f"📁 {len(written)} fichiers écrits dans {out_dir}")
    return written


def _write_results(result: EnsembleResult, directory: Path) -> List[str]:
    written = []
    files = {}
    for name, series in result.series.items():
        target = directory / series_filename(name)
        series_frame(series).to_csv(target, index=False, float_format='%.9e', na_rep='',
                                    lineterminator='\n', encoding='utf-8')
        files[name] = target.name
        written.append(target.name)

    manifest = {
        'config': result.spec.to_config(),
        'seeds': [dict(trial=index, **seed_lineage(seed)) for index, seed in enumerate(result.trial_seeds)],
        'aligned_flip_sample': result.spec.aligned_flip_sample,
        'algorithms': {name: dict(file=files[name], **result.summary(name)) for name in result.series},
    }
    manifest_path = directory / 'manifest.json'
    manifest_path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + '\n', encoding='utf-8')
    written.append(manifest_path.name)
    return written
