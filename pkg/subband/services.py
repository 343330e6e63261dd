"""
Services reliant les commandes aux fonctions du banc d'essai :
chargement des documents de configuration, exécution des expériences, conception du banc
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management.base import CommandError

from .filterbank import FilterDesignError, bank_quality_report, default_prototype_length, design_bank
from .forms import ExperimentConfigForm
from .harness import (ComparisonReport, EnsembleResult, ExperimentSpec, apply_sweep_value, export_csv,
                      rank_algorithms, run_ensemble)
from .monitoring import MonitoringMixin

logger = logging.getLogger(__name__)

# Noms descriptifs acceptés pour les configurations fournies
BUNDLED_ALIASES = {
    'subband_count': 'fig3',
    'lambda_snr30': 'fig4a',
    'lambda_snr20': 'fig4b',
    'tracking_snr30': 'fig5a',
    'tracking_snr20': 'fig5b',
    'speech_snr30': 'fig6a',
    'speech_snr20': 'fig6b',
    'fullband_snr30': 'fig8a',
    'fullband_snr20': 'fig8b',
}


def _key_offsets(text: str) -> Dict[str, int]:
    """Position dans le texte de chaque clé (chemin pointé) d'un document JSON valide"""
    decoder = json.JSONDecoder()
    offsets = {}

    def skip(index: int) -> int:
        while index < len(text) and text[index] in ' \t\r\n':
            index += 1
        return index

    def walk(index: int, path: str) -> int:
        index = skip(index)
        if text[index] == '{':
            index = skip(index + 1)
            while text[index] != '}':
                key, end = decoder.raw_decode(text, index)
                child = f'{path}.{key}' if path else key
                offsets[child] = index
                index = skip(walk(skip(end) + 1, child))
                if text[index] == ',':
                    index = skip(index + 1)
            return index + 1
        if text[index] == '[':
            index = skip(index + 1)
            position = 0
            while text[index] != ']':
                child = f'{path}.{position}'
                offsets[child] = index
                index = skip(walk(index, child))
                position += 1
                if text[index] == ',':
                    index = skip(index + 1)
            return index + 1
        _, end = decoder.raw_decode(text, index)
        return end

    walk(0, '')
    return offsets


def _line_col(text: str, offset: int) -> Tuple[int, int]:
    line = text.count('\n', 0, offset) + 1
    return line, offset - (text.rfind('\n', 0, offset) + 1) + 1


def parse_override(expression: str) -> Tuple[str, Any]:
    """'cle.sous_cle=valeur' ; la valeur est lue en JSON, à défaut gardée telle quelle"""
    key, separator, raw = expression.partition('=')
    key = key.strip()
    if not separator or not key:
        raise CommandError(f"Override invalide '{expression}' (attendu cle=valeur)")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw.strip()
    return key, value


class ConfigDocumentService:
    """Lecture, surcharge et validation des documents de configuration"""

    @staticmethod
    def resolve(name_or_path: str) -> Path:
        """Chemin explicite, ou nom d'une configuration fournie (fig5a, tracking_snr30...)"""
        candidate = Path(name_or_path)
        if candidate.is_file():
            return candidate
        bundled = Path(settings.PNSAF_CONFIG_DIR) / f'{BUNDLED_ALIASES.get(name_or_path, name_or_path)}.json'
        if bundled.is_file():
            return bundled
        available = sorted(path.stem for path in Path(settings.PNSAF_CONFIG_DIR).glob('*.json'))
        raise CommandError(f"Configuration introuvable: {name_or_path} (fournies: {', '.join(available)} ; "
                           f"alias: {', '.join(sorted(BUNDLED_ALIASES))})")

    @staticmethod
    def load(path: Path) -> Tuple[Dict[str, Any], str, str]:
        """Document, texte du fichier et préfixe des clés dans ce texte ('config.' pour un manifeste)"""
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as exc:
            raise CommandError(f"{path}: lecture impossible ({exc.strerror or exc})")
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CommandError(f"{path}:{exc.lineno}:{exc.colno}: JSON invalide ({exc.msg})")
        if not isinstance(document, dict):
            raise CommandError(f"{path}:1:1: un objet JSON est attendu à la racine")

        # Un manifeste de résultats se relit comme sa configuration
        if 'config' in document and 'seeds' in document:
            logger.info(f"{path}: manifeste détecté, lecture de sa section 'config'")
            if not isinstance(document['config'], dict):
                line, col = _line_col(text, _key_offsets(text)['config'])
                raise CommandError(f"{path}:{line}:{col}: config: un objet JSON est attendu")
            return document['config'], text, 'config.'
        return document, text, ''

    @staticmethod
    def apply_overrides(document: Dict[str, Any], overrides: Sequence[str]) -> Tuple[Dict[str, Any], List[str]]:
        """Applique les surcharges pointées (`algorithms.1.mu=0.5`) sur une copie du document"""
        document = json.loads(json.dumps(document))
        applied = []
        for expression in overrides or []:
            key, value = parse_override(expression)
            parts = key.split('.')
            node = document
            for depth, part in enumerate(parts[:-1]):
                if isinstance(node, list):
                    if not part.isdigit() or int(part) >= len(node):
                        raise CommandError(f"--override {key}: indice '{part}' hors de la liste")
                    node = node[int(part)]
                else:
                    node = node.setdefault(part, {})
                if not isinstance(node, (dict, list)):
                    raise CommandError(f"--override {key}: '{'.'.join(parts[:depth + 1])}' n'est pas une section")
            last = parts[-1]
            if isinstance(node, list):
                if not last.isdigit() or int(last) >= len(node):
                    raise CommandError(f"--override {key}: indice '{last}' hors de la liste")
                node[int(last)] = value
            else:
                node[last] = value
            applied.append(key)
            logger.info(f"Override {key} = {value!r}")
        return document, applied

    @staticmethod
    def validate(document: Dict[str, Any], text: str, source: str, overridden: Sequence[str] = (),
                 prefix: str = '') -> ExperimentSpec:
        """Valide le document ; la première erreur est rapportée avec sa ligne dans le fichier"""
        form = ExperimentConfigForm(document)
        if form.is_valid():
            return form.spec

        offsets = _key_offsets(text)
        messages = []
        for error in form.path_errors():
            path = error.params['path']
            message = ' '.join(error.messages)
            if any(path == key or path.startswith(f'{key}.') for key in overridden):
                messages.append(f"--override {path}: {message}")
                continue
            # Clé absente du fichier : on remonte à la section parente
            probe = path
            while probe and f'{prefix}{probe}' not in offsets:
                probe = probe.rpartition('.')[0]
            anchor = f'{prefix}{probe}' if probe else prefix.rstrip('.')
            line, col = _line_col(text, offsets[anchor]) if anchor in offsets else (1, 1)
            messages.append(f"{source}:{line}:{col}: {path or 'racine'}: {message}")
        raise CommandError('\n'.join(messages))

    @classmethod
    def load_spec(cls, name_or_path: str, overrides: Sequence[str] = (), seed: Optional[int] = None) -> ExperimentSpec:
        path = cls.resolve(name_or_path)
        document, text, prefix = cls.load(path)
        overrides = list(overrides or [])
        if seed is not None:
            overrides.append(f'base_seed={seed}')
        document, applied = cls.apply_overrides(document, overrides)
        return cls.validate(document, text, str(path), applied, prefix)


class ExperimentService(MonitoringMixin):
    """Exécution des expériences et écriture des résultats"""

    def __init__(self, max_workers: Optional[int] = None):
        super().__init__()
        self.max_workers = max(1, max_workers or settings.PNSAF_MAX_WORKERS)

    def _ensemble(self, spec: ExperimentSpec) -> EnsembleResult:
        result = run_ensemble(spec, max_workers=self.max_workers)
        self.log_trials(result)
        return result

    @staticmethod
    def ranking(result: EnsembleResult) -> Optional[str]:
        """Tableau de classement lorsque plusieurs algorithmes ont tourné sur les mêmes essais"""
        if len(result.series) < 2:
            return None
        return ComparisonReport(result=result, ranking=rank_algorithms(result)).as_table()

    def run(self, spec: ExperimentSpec, out_dir: Path) -> EnsembleResult:
        """run_ensemble puis export ; rien n'est écrit si une erreur survient pendant le calcul"""
        self.start_monitoring(f"{len(spec.algorithms)} algorithme(s), {spec.ensemble_size} essai(s)",
                              data={'algorithms': [algorithm.name for algorithm in spec.algorithms]})
        try:
            result = self._ensemble(spec)
            export_csv(result, out_dir)
            for algorithm in spec.algorithms:
                self.log_action('summary', f"{algorithm.name}: régime permanent "
                                           f"{result.steady_state_db(algorithm.name):.2f} dB")
        except Exception as exc:
            self.log_error(str(exc), exc)
            self.end_monitoring('failed')
            raise
        self.end_monitoring('diverged' if result.any_divergence else 'completed')
        return result

    def sweep(self, spec: ExperimentSpec, parameter: str, values: Sequence,
              out_dir: Path) -> List[Tuple[str, EnsembleResult]]:
        """Un sous-dossier `<param>_<valeur>` par valeur ; toutes les valeurs sont validées avant de calculer"""
        variants = []
        for value in values:
            try:
                variants.append((value, apply_sweep_value(spec, parameter, value)))
            except ValueError as exc:
                raise CommandError(f"--values {value}: {exc}")

        self.start_monitoring(f"Balayage {parameter} sur {len(variants)} valeur(s)")
        outcomes = []
        try:
            for value, variant in variants:
                label = f'{parameter}_{value}'
                result = self._ensemble(variant)
                export_csv(result, Path(out_dir) / label)
                self.log_action('sweep_value', f"{label} terminé")
                outcomes.append((label, result))
        except Exception as exc:
            self.log_error(str(exc), exc)
            self.end_monitoring('failed')
            raise
        self.end_monitoring('diverged' if any(result.any_divergence for _, result in outcomes) else 'completed')
        return outcomes


class FilterDesignService:
    """Conception d'un banc et écriture du prototype et du rapport de qualité"""

    @staticmethod
    def design(num_subbands: int, length: Optional[int], attenuation_db: float, out_dir: Path,
               fft_size: Optional[int] = None) -> Dict[str, Path]:
        if length is None:
            length = default_prototype_length(num_subbands)
        try:
            bank = design_bank(num_subbands, length, attenuation_db)
            report = bank_quality_report(bank, fft_size)
        except (FilterDesignError, ValueError) as exc:
            raise CommandError(str(exc))

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        taps_path = out_dir / 'prototype.csv'
        pd.DataFrame({'n': np.arange(bank.prototype.length), 'coefficient': bank.prototype.taps}).to_csv(
            taps_path, index=False, float_format='%.17e', lineterminator='\n')
        report_path = out_dir / 'quality_report.txt'
        report_path.write_text(f"num_subbands = {num_subbands}\nlength = {bank.prototype.length}\n"
                               + report.as_text(), encoding='utf-8')
        logger.info(f"📐 Prototype N={num_subbands} L={bank.prototype.length}: "
                    f"{report.stopband_attenuation_db:.1f} dB de rejet")
        return {'prototype': taps_path, 'report': report_path}
