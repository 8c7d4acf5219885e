"""
BandLift - speech super-resolution to 48 kHz.

Launcher for the command-line interface, e.g.

    python BandLift.py eval --baseline unprocessed --manifest refs.tsv --rates 4000,8000
"""

import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent))

from bandlift.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
