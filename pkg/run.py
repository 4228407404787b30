import sys

from shdp import main

if __name__ == '__main__':
    sys.exit(main())
