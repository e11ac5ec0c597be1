import sys

from src.corner_lab.cl_cli import main

if __name__ == "__main__":
    sys.exit(main())
