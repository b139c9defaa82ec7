#!/usr/bin/env python3
"""
KAM toolkit CLI

Entry script for the pipeline sites-check -> bnf -> solve -> reduce ->
floquet -> measure -> evolve. Run `python main_cli.py --help` for the
subcommands and the global flags.
"""

import os
import sys

# Add project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.kam_mkdv.cli import main

if __name__ == "__main__":
    main()
