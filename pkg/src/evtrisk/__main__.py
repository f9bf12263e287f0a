import sys

from evtrisk.cli import main

sys.exit(main())
