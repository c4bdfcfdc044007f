import sys

from stix.bench.cli import main

sys.exit(main())
