"""Regenerate corpus goldens: ``python -m idpa.corpus``."""

import sys

from idpa.corpus import fixtures, regenerate

for fx in fixtures():
    for path in regenerate(fx):
        print(f"updated {path}")
sys.exit(0)
