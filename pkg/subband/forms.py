"""
Validation des documents de configuration d'expérience (une classe de formulaire par section)
"""

import logging
import math
from typing import List, Optional

from django import forms
from django.core.exceptions import NON_FIELD_ERRORS, ValidationError

from .filterbank import default_prototype_length
from .harness import INPUT_KINDS, ExperimentSpec
from .proportionate import GAIN_RULES
from .step_control import STEP_CONTROLLERS, FixedStep

logger = logging.getLogger(__name__)


def _join(prefix: str, name: str) -> str:
    return f'{prefix}.{name}' if prefix else name


def _located(message: str, path: str) -> ValidationError:
    # Le chemin voyage dans params ; les '%' du message sont protégés de l'interpolation
    return ValidationError(message.replace('%', '%%'), code='nested', params={'path': path})


class ConfigSectionForm(forms.Form):
    """
    Section d'un document de configuration.

    Les clés inconnues sont refusées ; les clés absentes prennent la valeur
    `initial` du champ et une notice est journalisée.
    """

    key_aliases = {}

    def __init__(self, data, section: str = ''):
        self.section = section
        data = {self.key_aliases.get(key, key): value for key, value in dict(data).items()}
        self.unknown_keys = sorted(set(data) - set(self.base_fields))
        self.defaulted_keys = [name for name in self.base_fields if name not in data]
        for name in self.defaulted_keys:
            data[name] = self.base_fields[name].initial
        if self.defaulted_keys:
            logger.info(f"Section '{section or 'racine'}': valeurs par défaut pour "
                        + ', '.join(f'{name}={data[name]!r}' for name in self.defaulted_keys))
        super().__init__(data=data)

    def clean(self):
        cleaned_data = super().clean()
        if self.unknown_keys:
            for key in self.unknown_keys:
                self.add_error(None, _located(f"Clé inconnue: '{key}'", _join(self.section, key)))
        return cleaned_data

    def path_errors(self) -> List[ValidationError]:
        """Erreurs à plat, chacune portant le chemin pointé de la clé fautive"""
        located = []
        for name, errors in self.errors.as_data().items():
            default_path = self.section if name == NON_FIELD_ERRORS else _join(self.section, name)
            for error in errors:
                path = (error.params or {}).get('path', default_path) if error.code == 'nested' else default_path
                located.append(_located(' '.join(error.messages), path))
        return located


class NestedSectionField(forms.Field):
    """Sous-objet validé par son propre formulaire"""

    def __init__(self, form_class, section: str, **kwargs):
        kwargs.setdefault('required', False)
        kwargs.setdefault('initial', {})
        super().__init__(**kwargs)
        self.form_class = form_class
        self.section = section

    def to_python(self, value):
        if value in (None, ''):
            value = {}
        if not isinstance(value, dict):
            raise _located(f"La section '{self.section}' doit être un objet", self.section)
        form = self.form_class(value, section=self.section)
        if not form.is_valid():
            raise ValidationError(form.path_errors())
        return form.cleaned_data


class NestedListField(forms.Field):
    """Liste d'objets validés un à un (chemins `section.index.clé`)"""

    def __init__(self, form_class, section: str, **kwargs):
        super().__init__(**kwargs)
        self.form_class = form_class
        self.section = section

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if not isinstance(value, list):
            raise _located(f"'{self.section}' doit être une liste", self.section)
        cleaned, errors = [], []
        for index, item in enumerate(value):
            path = f'{self.section}.{index}'
            if not isinstance(item, dict):
                errors.append(_located("Chaque entrée doit être un objet", path))
                continue
            form = self.form_class(item, section=path)
            if form.is_valid():
                cleaned.append(form.cleaned_data)
            else:
                errors.extend(form.path_errors())
        if errors:
            raise ValidationError(errors)
        return cleaned


class FloatListField(forms.Field):
    def to_python(self, value):
        if value in self.empty_values:
            return []
        if isinstance(value, str):
            value = [part for part in value.split(',') if part.strip()]
        if not isinstance(value, (list, tuple)):
            raise ValidationError("Liste de nombres attendue")
        try:
            numbers = [float(item) for item in value]
        except (TypeError, ValueError):
            raise ValidationError("Liste de nombres attendue")
        if not all(math.isfinite(number) for number in numbers):
            raise ValidationError("Les seuils doivent être finis")
        return numbers


class SnrField(forms.Field):
    """RSB en dB ; null ou "inf" pour une expérience sans bruit"""

    def to_python(self, value):
        if value is None:
            return math.inf
        if isinstance(value, bool):
            raise ValidationError("RSB numérique attendu")
        try:
            snr = float(value)
        except (TypeError, ValueError):
            raise ValidationError("RSB numérique attendu")
        if math.isnan(snr) or snr == -math.inf:
            raise ValidationError(f"RSB invalide: {value}")
        return snr


class InputForm(ConfigSectionForm):
    kind = forms.ChoiceField(choices=[(kind, kind) for kind in INPUT_KINDS], initial='ar1')
    pole = forms.FloatField(initial=0.95)
    variance = forms.FloatField(initial=1.0)
    path = forms.CharField(required=False, initial=None, empty_value=None)

    def clean_pole(self):
        pole = self.cleaned_data['pole']
        if not abs(pole) < 1:
            raise ValidationError("Le pôle AR(1) doit vérifier |a| < 1")
        return pole

    def clean_variance(self):
        variance = self.cleaned_data['variance']
        if variance <= 0:
            raise ValidationError("La variance doit être strictement positive")
        return variance

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('kind') == 'wav' and not cleaned_data.get('path'):
            self.add_error('path', "Une entrée 'wav' demande un fichier (input.path)")
        return cleaned_data


class PathForm(ConfigSectionForm):
    num_active = forms.IntegerField(initial=32, min_value=1)
    decay_rate = forms.FloatField(initial=4.0, min_value=0.0)
    file = forms.CharField(required=False, initial=None, empty_value=None)


class MetricsForm(ConfigSectionForm):
    nmsd_stride = forms.IntegerField(initial=1, min_value=1)
    erle_window = forms.IntegerField(required=False, initial=None, min_value=1)
    steady_state_iterations = forms.IntegerField(initial=10000, min_value=1)
    thresholds_db = FloatListField(required=False, initial=[-15.0, -20.0, -30.0])
    primary_threshold_db = forms.FloatField(initial=-20.0)


class AlgorithmForm(ConfigSectionForm):
    key_aliases = {'lambda': 'lam'}

    name = forms.CharField(max_length=64)
    gain_rule = forms.ChoiceField(choices=[(name, name) for name in GAIN_RULES], initial='ipnlms')
    alpha = forms.FloatField(initial=0.0, min_value=-1.0, max_value=1.0)
    xi = forms.FloatField(initial=0.001)
    step_control = forms.ChoiceField(choices=[(kind, kind) for kind in STEP_CONTROLLERS], initial='shrinkage_vss')
    mu = forms.FloatField(initial=1.0)
    gamma = forms.FloatField(initial=9.0)
    lam = forms.FloatField(initial=3.5)
    kappa = forms.FloatField(initial=1.0, min_value=1.0, max_value=6.0)
    delta = forms.FloatField(initial=0.001)
    num_subbands = forms.IntegerField(required=False, initial=None, min_value=1)

    def clean_name(self):
        name = self.cleaned_data['name'].strip()
        if not name:
            raise ValidationError("Le nom de l'algorithme est obligatoire")
        return name

    def clean_mu(self):
        mu = self.cleaned_data['mu']
        if not 0 < mu < 2:
            raise ValidationError("Le pas fixe doit être dans ]0, 2[")
        return mu

    def clean_xi(self):
        return self._positive('xi')

    def clean_gamma(self):
        return self._positive('gamma')

    def clean_lam(self):
        return self._positive('lam')

    def clean_delta(self):
        return self._positive('delta')

    def _positive(self, name: str) -> float:
        value = self.cleaned_data[name]
        if value <= 0:
            raise ValidationError(f"{name} doit être strictement positif")
        return value


class ExperimentConfigForm(ConfigSectionForm):
    """Document complet ; `spec` est disponible après is_valid()"""

    input = NestedSectionField(InputForm, section='input')
    algorithms = NestedListField(AlgorithmForm, section='algorithms')
    filter_length = forms.IntegerField(initial=512, min_value=1)
    num_subbands = forms.IntegerField(initial=4, min_value=1)
    snr_db = SnrField(initial=30.0)
    path = NestedSectionField(PathForm, section='path')
    path_flip_sample = forms.IntegerField(required=False, initial=None, min_value=0)
    run_length = forms.IntegerField(initial=280000, min_value=1)
    ensemble_size = forms.IntegerField(initial=25, min_value=1)
    base_seed = forms.IntegerField(initial=1, min_value=0)
    metrics = NestedSectionField(MetricsForm, section='metrics')
    prototype_length = forms.IntegerField(required=False, initial=None, min_value=1)
    attenuation_db = forms.FloatField(initial=60.0)

    spec: Optional[ExperimentSpec] = None

    def clean_attenuation_db(self):
        attenuation = self.cleaned_data['attenuation_db']
        if attenuation <= 0:
            raise ValidationError("L'atténuation doit être strictement positive")
        return attenuation

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data

        num_subbands = cleaned_data['num_subbands']
        prototype_length = cleaned_data.get('prototype_length')
        if prototype_length is not None and num_subbands > 1 and prototype_length < 2 * num_subbands:
            self.add_error('prototype_length', f"Longueur {prototype_length} < 2N = {2 * num_subbands} "
                                               f"(valeur usuelle {default_prototype_length(num_subbands)})")

        noise_free = math.isinf(cleaned_data['snr_db'])
        for index, algorithm in enumerate(cleaned_data['algorithms']):
            if noise_free and algorithm['step_control'] != FixedStep.kind:
                self.add_error(None, _located(
                    f"'{algorithm['step_control']}' demande un bruit de variance connue : RSB fini requis",
                    f'algorithms.{index}.step_control'))

        if not self.errors:
            try:
                self.spec = ExperimentSpec.from_config(cleaned_data)
            except ValueError as exc:
                raise ValidationError(str(exc))
        return cleaned_data
