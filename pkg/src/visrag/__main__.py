from visrag.cli import main
import sys
sys.exit(main())
