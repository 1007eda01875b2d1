"""Module for housing Pytest helper functions"""
from .utils import *
