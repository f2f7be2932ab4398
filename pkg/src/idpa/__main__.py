import sys

from idpa.cli import main

sys.exit(main())
