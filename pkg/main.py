"""
contact-dg - Adaptive quadratic DG solver for Signorini contact problems.

Usage:
    python main.py solve --problem mp1 --levels-uniform 2       # One solve, write solution files
    python main.py study --problem mp2 --method nipg --levels 8 # Adaptive study -> convergence.csv
    python main.py study --config my_problem.json --uniform     # Custom problem, uniform refinement
"""

import sys


def main():
    # --threads must reach OMP_NUM_THREADS before numpy is imported
    from contact_dg.cli import apply_threads
    apply_threads(sys.argv[1:])

    from contact_dg.cli import main as cli_main
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
