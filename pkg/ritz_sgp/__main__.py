"""Allow python -m ritz_sgp."""

import sys

from .cli import main

sys.exit(main())
