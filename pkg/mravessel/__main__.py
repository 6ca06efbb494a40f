import sys

from mravessel.cli import main

sys.exit(main())
