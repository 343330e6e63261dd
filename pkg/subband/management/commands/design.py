from pathlib import Path

from django.conf import settings
from django.core.management import BaseCommand, CommandError

from subband.services import FilterDesignService


class Command(BaseCommand):
    help = "Conçoit le prototype du banc d'analyse et écrit ses coefficients et son rapport de qualité"

    def add_arguments(self, parser):
        parser.add_argument('--subbands', type=int, required=True, help="Nombre de sous-bandes N")
        parser.add_argument('--length', type=int, default=None,
                            help="Longueur L du prototype (16/32/64 pour N = 2/4/8 par défaut)")
        parser.add_argument('--attenuation', type=float, default=60.0, help="Atténuation visée en dB")
        parser.add_argument('--fft-size', type=int, default=None, help="Taille de FFT du rapport (puissance de 2 >= 8L)")
        parser.add_argument('--out', default=None, help="Dossier de sortie (PNSAF_OUTPUT_DIR/design_N<N> par défaut)")

    def handle(self, *args, **options):
        num_subbands = options['subbands']
        if num_subbands < 1:
            raise CommandError(f"--subbands doit être >= 1 (reçu {num_subbands})", returncode=2)
        out_dir = Path(options['out'] or settings.PNSAF_OUTPUT_DIR / f'design_N{num_subbands}')

        paths = FilterDesignService.design(num_subbands, options['length'], options['attenuation'], out_dir,
                                           fft_size=options['fft_size'])

        self.stdout.write(paths['report'].read_text(encoding='utf-8'))
        self.stdout.write(self.style.SUCCESS(f"Prototype écrit dans {paths['prototype']}"))
