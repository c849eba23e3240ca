"""
Entry point for the coarsening lab command line
Run with: python main.py verify
Or with: python main.py steady --theta 0.5,1,2,3.5
"""

import sys

from src.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
