import sys

from irplan.cli import main

sys.exit(main())
