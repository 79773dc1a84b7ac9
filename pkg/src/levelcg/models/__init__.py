from .portfolio import *  # noqa
