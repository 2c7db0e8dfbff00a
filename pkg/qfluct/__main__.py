import sys

from qfluct.main import main

sys.exit(main())
