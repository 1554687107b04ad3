import sys

from morsedyn.cli import main

sys.exit(main())
