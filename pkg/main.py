"""
pamlab - Main Execution

Entry point for the parabolic Anderson model lab. Hands the command line to
the CLI, which sets up logging from config/lab_config.yaml and runs one
subcommand through the stage pipeline.

    python main.py constants --theorem th1.7 --theta 1 --t 1
"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
