import sys

from nonext.cli import main

sys.exit(main())
