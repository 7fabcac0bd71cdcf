"""
Primary branch solution toolkit
Run with: python run_pbs.py <command> [options]
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
