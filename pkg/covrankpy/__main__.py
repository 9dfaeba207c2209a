import sys

from covrankpy.cli import main

sys.exit(main())
