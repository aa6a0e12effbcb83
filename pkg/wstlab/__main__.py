"""Entry point for ``python -m wstlab``."""
import sys

from wstlab.cli import main

sys.exit(main())
