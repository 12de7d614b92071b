#!/usr/bin/env python3
"""
Launcher for the CGC lab command line
"""

import os
import sys

BLAS_THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def apply_thread_cap():
    # must run before numpy is imported
    cap = os.environ.get("CGC_LAB_THREADS")
    if cap:
        for name in BLAS_THREAD_VARIABLES:
            os.environ.setdefault(name, cap)


def main():
    script_dir = os.path.dirname(os.path.abspath(__file__))
    if script_dir not in sys.path:
        sys.path.insert(0, script_dir)
    apply_thread_cap()

    from core.cli import main as cli_main

    try:
        sys.exit(cli_main())
    except KeyboardInterrupt:
        print("\nInterrupted")
        sys.exit(130)


if __name__ == "__main__":
    main()
