import sys

from bpreview.cli import main

sys.exit(main())
