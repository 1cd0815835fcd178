"""``python -m vnskit``."""
import sys

from .cli import main

sys.exit(main())
