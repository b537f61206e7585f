#!/usr/bin/env python3
"""
Stroboscopic NLOS imaging toolkit entry point

Design a static reflection plane, synthesize echoes and form images from
scenario files. See `python main.py --help`.
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
