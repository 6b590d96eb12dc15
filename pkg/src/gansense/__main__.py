import sys

from gansense.cli import main

sys.exit(main())
