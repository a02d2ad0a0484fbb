#!/usr/bin/env python3

"""Main entrypoint for the schwarzinpaint CLI"""

from inpaint.schwarz.main import main

if __name__ == '__main__':
    main()
