import sys

from scenebgm.cli import main

sys.exit(main())
