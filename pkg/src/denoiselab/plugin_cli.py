"""Entry point for the built-in denoiser plugins.

Kept separate from the package namespace so ``python -m denoiselab.plugin_cli``
starts a child without re-importing the module being executed.
"""

import sys

from .plugin import main

if __name__ == "__main__":
    sys.exit(main())
