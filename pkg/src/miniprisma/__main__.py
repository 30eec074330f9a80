import sys

from miniprisma.cli import main

sys.exit(main())
