"""Run the command-line interface with ``python -m gainclass``."""
import sys

from .cli import main

sys.exit(main())
