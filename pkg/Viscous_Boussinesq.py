# Entry point shim for the Boussinesq Suite command line
# Import and run the main function from boussinesq_suite.py
import sys

from boussinesq_suite import main

sys.exit(main())
