"""Allow `python -m ebssc`."""

import sys

from .cli import main

sys.exit(main())
