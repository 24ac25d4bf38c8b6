import sys

from dawn.cli import main

sys.exit(main())
