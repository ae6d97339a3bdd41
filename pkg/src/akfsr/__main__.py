import sys

from akfsr.cli import main

sys.exit(main())
