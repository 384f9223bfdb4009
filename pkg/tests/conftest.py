"""Make the sibling helper modules (oracles, randgen, shapes) importable."""

import os
import sys

sys.path.insert(0, os.path.dirname(__file__))
