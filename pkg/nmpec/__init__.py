######
# Project       : nmpec
# File          : __init__.py
# license       : Apache 2.0
# Description   :
# Probabilistic error cancellation toolkit for non-Markovian noise.
######
__author__ = "nmpec developers"
__license__ = "Apache 2.0"
__version__ = "0.3.0"
