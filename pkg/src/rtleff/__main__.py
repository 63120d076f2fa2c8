import sys

from rtleff.cli import main

sys.exit(main())
