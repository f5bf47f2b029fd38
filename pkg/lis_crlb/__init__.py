from .lis import *
