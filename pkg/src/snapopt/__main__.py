import sys

from snapopt.cli import main

sys.exit(main())
