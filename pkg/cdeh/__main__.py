import sys

from cdeh.main import main

sys.exit(main())
