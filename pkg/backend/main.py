"""Entry point for the FacetForge command line."""

import sys

from app.cli import main

# This allows running with: python main.py generate --corpus corpus.jsonl ...
if __name__ == "__main__":
    sys.exit(main())
