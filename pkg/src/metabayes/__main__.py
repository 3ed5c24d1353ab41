"""Run the command line interface with ``python -m metabayes``."""

import sys

from .cli import main

sys.exit(main())
