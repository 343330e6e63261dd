from django.core.management import BaseCommand, CommandError

from subband.harness import SWEEP_ALIASES, SWEEP_PARAMETERS
from .run import add_experiment_arguments, experiment_options


class Command(BaseCommand):
    help = "Balaye un paramètre (lambda, subbands, mu, snr) : un ensemble d'essais et un dossier par valeur"

    def add_arguments(self, parser):
        add_experiment_arguments(parser)
        parser.add_argument('--param', required=True, choices=sorted(set(SWEEP_PARAMETERS) | set(SWEEP_ALIASES)),
                            help="Paramètre balayé")
        parser.add_argument('--values', required=True, help="Valeurs séparées par des virgules (ex. 3,3.5,4,5)")

    def handle(self, *args, **options):
        values = [value.strip() for value in options['values'].split(',') if value.strip()]
        if not values:
            raise CommandError("--values : liste de valeurs vide", returncode=2)
        spec, out_dir, service = experiment_options(options)

        try:
            outcomes = service.sweep(spec, options['param'], values, out_dir)
        except (ValueError, OSError) as exc:
            raise CommandError(str(exc))

        diverged = []
        for label, result in outcomes:
            for name in result.series:
                self.stdout.write(f"{label} / {name}: régime permanent {result.steady_state_db(name):.2f} dB")
            if result.any_divergence:
                diverged.append(label)

        if diverged:
            raise CommandError(f"Essais divergents pour {', '.join(diverged)} (résultats partiels dans {out_dir})")
        self.stdout.write(self.style.SUCCESS(f"{len(outcomes)} jeux de résultats écrits dans {out_dir}"))
