from pathlib import Path

from django.conf import settings
from django.core.management import BaseCommand, CommandError

from subband.services import ConfigDocumentService, ExperimentService


def add_experiment_arguments(parser):
    parser.add_argument('--config', required=True,
                        help="Fichier JSON, manifeste de résultats, ou nom d'une configuration fournie (fig5a...)")
    parser.add_argument('--out', default=None, help="Dossier de sortie (PNSAF_OUTPUT_DIR/<config> par défaut)")
    parser.add_argument('--seed', type=int, default=None, help="Graine de base (remplace base_seed)")
    parser.add_argument('--threads', type=int, default=None, help="Nombre maximal de processus pour les essais")
    parser.add_argument('--override', action='append', default=[], metavar='CLE=VALEUR',
                        help="Surcharge pointée, répétable (ex. ensemble_size=2, algorithms.1.mu=0.5)")


def experiment_options(options):
    """Spécification validée, dossier de sortie et service ; rien n'est écrit avant cette étape"""
    if options['threads'] is not None and options['threads'] < 1:
        raise CommandError(f"--threads doit être >= 1 (reçu {options['threads']})", returncode=2)
    spec = ConfigDocumentService.load_spec(options['config'], options['override'], options['seed'])
    out_dir = Path(options['out'] or settings.PNSAF_OUTPUT_DIR / Path(options['config']).stem)
    return spec, out_dir, ExperimentService(max_workers=options['threads'])


class Command(BaseCommand):
    help = "Exécute un ensemble d'essais et écrit un CSV par algorithme et le manifeste"

    def add_arguments(self, parser):
        add_experiment_arguments(parser)

    def handle(self, *args, **options):
        spec, out_dir, service = experiment_options(options)

        try:
            result = service.run(spec, out_dir)
        except (ValueError, OSError) as exc:
            raise CommandError(str(exc))

        for name in result.series:
            self.stdout.write(f"{name}: régime permanent {result.steady_state_db(name):.2f} dB")
        ranking = service.ranking(result)
        if ranking:
            self.stdout.write(ranking)

        if result.any_divergence:
            diverged = {name: seeds for name, seeds in result.divergences.items() if seeds}
            raise CommandError(f"Essais divergents: {diverged} (résultats partiels dans {out_dir})")
        self.stdout.write(self.style.SUCCESS(f"Résultats écrits dans {out_dir}"))
