import sys

from verifbfl.cli import main

sys.exit(main())
