import sys

from .study_cli import main

sys.exit(main())
